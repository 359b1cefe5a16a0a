"""Optional numba acceleration.

Set ``ODAKIT_NO_JIT=1`` to run every kernel through its pure-numpy path.
Numba missing from the environment has the same effect.
"""

import os

_disabled = os.environ.get("ODAKIT_NO_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError
    from numba import njit
except ImportError:
    njit = None

JIT_ENABLED = njit is not None


def maybe_njit(func):
    """Compile ``func`` with numba when available, else return ``None``."""
    if njit is None:
        return None
    return njit(cache=True, nogil=True)(func)

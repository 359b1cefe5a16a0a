"""Time the numba and numpy flavours of each hot kernel.

    python benchmarks/bench_kernels.py [--repeat N] [--size N]

The numba rows are skipped when numba is missing or ``ODAKIT_NO_JIT=1``.
The first numba call compiles (or loads the on-disk cache) and is excluded.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from odakit import kernels
from odakit._jit import JIT_ENABLED


def cases(n: int, rng: np.random.Generator):
    t = np.arange(n) * 1e-3
    keys = np.floor(t / 0.01).astype(np.int64)
    power = 3075.0 + 30.0 * rng.standard_normal(n)
    step = np.where(np.arange(n) < n // 3, 2561.0, 3082.0) + 25.0 * rng.standard_normal(n)
    # thermal series: 0.2 Hz, far fewer points
    m = max(n // 200, 10)
    tt = np.arange(m) * 5.0
    temp = 71.0 + 0.05 * tt + 0.1 * rng.standard_normal(m)
    return {
        "group_means (1 ms -> 10 ms windows)": (
            lambda: kernels.group_means_numpy(keys, power),
            lambda: kernels.group_means_numba(keys, power),
        ),
        "best_split (R2/R3 step)": (
            lambda: kernels.best_split_numpy(step),
            lambda: kernels.best_split_numba(step),
        ),
        f"sliding_linfit ({m} pts, 10 s)": (
            lambda: kernels.sliding_linfit_numpy(tt, temp, 10.0, 3),
            lambda: kernels.sliding_linfit_numba(tt, temp, 10.0, 3),
        ),
    }


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--size", type=int, default=1_000_000, help="samples in the power series")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'kernel':<40}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, (np_fn, nb_fn) in cases(args.size, rng).items():
        t_np = min(timeit.repeat(np_fn, number=1, repeat=args.repeat)) * 1e3
        if JIT_ENABLED:
            nb_fn()  # compile
            t_nb = min(timeit.repeat(nb_fn, number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<40}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<40}{t_np:>12.2f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()

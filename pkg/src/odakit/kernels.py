"""Numeric inner loops used by the analysis layer.

Every kernel exists twice: a plain loop compiled by numba and a vectorized
numpy path. The public names bind to the numba flavour when it is enabled
(see :mod:`odakit._jit`); both flavours stay importable for tests and the
benchmark script.
"""

from __future__ import annotations

import numpy as np

from ._jit import JIT_ENABLED, maybe_njit

# rows * window-points cap for the numpy sliding fit, keeps scratch memory bounded
_FIT_CHUNK_CELLS = 4_000_000


def _group_means_loop(keys, values):
    n = keys.shape[0]
    out_keys = np.empty(n, dtype=np.int64)
    out_means = np.empty(n, dtype=np.float64)
    if n == 0:
        return out_keys[:0], out_means[:0]
    g = 0
    cur = keys[0]
    acc = 0.0
    cnt = 0
    for i in range(n):
        k = keys[i]
        if k != cur:
            out_keys[g] = cur
            out_means[g] = acc / cnt
            g += 1
            cur = k
            acc = 0.0
            cnt = 0
        acc += values[i]
        cnt += 1
    out_keys[g] = cur
    out_means[g] = acc / cnt
    g += 1
    return out_keys[:g], out_means[:g]


def group_means_numpy(keys: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of ``values`` over runs of equal, non-decreasing ``keys``."""
    keys = np.asarray(keys, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if keys.size == 0:
        return keys.copy(), values.copy()
    starts = np.flatnonzero(np.concatenate(([True], keys[1:] != keys[:-1])))
    counts = np.diff(np.append(starts, keys.size))
    # reduceat sums in index order, matching the loop's accumulation order
    sums = np.add.reduceat(values, starts)
    return keys[starts], sums / counts


def _best_split_loop(values):
    n = values.shape[0]
    mu = 0.0
    for i in range(n):
        mu += values[i]
    mu /= n
    total = 0.0
    for i in range(n):
        total += values[i] - mu
    best_k = 1
    best = -1.0
    left = 0.0
    for k in range(1, n):
        left += values[k - 1] - mu
        right = total - left
        score = left * left / k + right * right / (n - k)
        if score > best:
            best = score
            best_k = k
    return best_k


def best_split_numpy(values: np.ndarray) -> int:
    """Index ``k`` splitting ``values`` into ``[:k]`` and ``[k:]`` with least squared error."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("need at least two values to split")
    mu = x.sum() / n
    c = x - mu
    total = c.sum()
    left = np.cumsum(c[:-1])
    k = np.arange(1, n, dtype=np.float64)
    score = left * left / k + (total - left) ** 2 / (n - k)
    return int(np.argmax(score)) + 1


def _sliding_linfit_loop(t, y, window, min_points):
    n = t.shape[0]
    slope = np.full(n, np.nan)
    r2 = np.full(n, np.nan)
    j = 0
    for i in range(n):
        while t[j] < t[i] - window:
            j += 1
        m = i - j + 1
        if m < min_points:
            continue
        tm = 0.0
        ym = 0.0
        for k in range(j, i + 1):
            tm += t[k]
            ym += y[k]
        tm /= m
        ym /= m
        sxx = 0.0
        sxy = 0.0
        syy = 0.0
        for k in range(j, i + 1):
            dt = t[k] - tm
            dy = y[k] - ym
            sxx += dt * dt
            sxy += dt * dy
            syy += dy * dy
        if sxx <= 0.0:
            continue
        slope[i] = sxy / sxx
        if syy > 0.0:
            r2[i] = sxy * sxy / (sxx * syy)
        else:
            r2[i] = 0.0
    return slope, r2


def sliding_linfit_numpy(
    t: np.ndarray, y: np.ndarray, window: float, min_points: int = 3
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares slope and R^2 over each trailing window ``[t_i - window, t_i]``.

    Positions with fewer than ``min_points`` samples or zero time spread get NaN.
    A flat window (zero variance in ``y``) reports R^2 = 0.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = t.size
    slope = np.full(n, np.nan)
    r2 = np.full(n, np.nan)
    if n == 0:
        return slope, r2
    lo = np.searchsorted(t, t - window, side="left")
    counts = np.arange(n) - lo + 1
    width = int(counts.max())
    rows = max(1, _FIT_CHUNK_CELLS // width)
    offs = np.arange(width)
    for a in range(0, n, rows):
        b = min(n, a + rows)
        idx = lo[a:b, None] + offs
        mask = idx <= np.arange(a, b)[:, None]
        idx = np.minimum(idx, n - 1)
        m = mask.sum(axis=1)
        tw = np.where(mask, t[idx], 0.0)
        yw = np.where(mask, y[idx], 0.0)
        tm = tw.sum(axis=1) / m
        ym = yw.sum(axis=1) / m
        dt = np.where(mask, tw - tm[:, None], 0.0)
        dy = np.where(mask, yw - ym[:, None], 0.0)
        sxx = (dt * dt).sum(axis=1)
        sxy = (dt * dy).sum(axis=1)
        syy = (dy * dy).sum(axis=1)
        ok = (m >= min_points) & (sxx > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(ok, sxy / sxx, np.nan)
            q = np.where(syy > 0.0, sxy * sxy / (sxx * syy), 0.0)
        slope[a:b] = s
        r2[a:b] = np.where(ok, q, np.nan)
    return slope, r2


_group_means_jit = maybe_njit(_group_means_loop)
_best_split_jit = maybe_njit(_best_split_loop)
_sliding_linfit_jit = maybe_njit(_sliding_linfit_loop)


def group_means_numba(keys, values):
    return _group_means_jit(
        np.ascontiguousarray(keys, dtype=np.int64), np.ascontiguousarray(values, dtype=np.float64)
    )


def best_split_numba(values):
    x = np.ascontiguousarray(values, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two values to split")
    return int(_best_split_jit(x))


def sliding_linfit_numba(t, y, window, min_points=3):
    return _sliding_linfit_jit(
        np.ascontiguousarray(t, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        float(window),
        int(min_points),
    )


if JIT_ENABLED:
    group_means = group_means_numba
    best_split = best_split_numba
    sliding_linfit = sliding_linfit_numba
else:
    group_means = group_means_numpy
    best_split = best_split_numpy
    sliding_linfit = sliding_linfit_numpy

BACKEND = "numba" if JIT_ENABLED else "numpy"

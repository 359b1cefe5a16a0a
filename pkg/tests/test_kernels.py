import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from odakit import kernels
from odakit._jit import JIT_ENABLED

FLAVOURS = ["numpy", pytest.param("numba", marks=pytest.mark.skipif(not JIT_ENABLED, reason="numba disabled"))]


def _pick(name, flavour):
    return getattr(kernels, f"{name}_{flavour}")


def naive_group_means(keys, values):
    out = {}
    for k, v in zip(keys.tolist(), values.tolist()):
        out.setdefault(k, []).append(v)
    ks = sorted(out)
    return np.array(ks), np.array([sum(out[k]) / len(out[k]) for k in ks])


def naive_best_split(x):
    best, best_k = None, None
    for k in range(1, len(x)):
        a, b = x[:k], x[k:]
        sse = ((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()
        if best is None or sse < best - 1e-9:
            best, best_k = sse, k
    return best_k


def naive_linfit(t, y, window, min_points):
    slope = np.full(t.size, np.nan)
    r2 = np.full(t.size, np.nan)
    for i in range(t.size):
        m = (t >= t[i] - window) & (np.arange(t.size) <= i)
        if m.sum() < min_points:
            continue
        tt, yy = t[m], y[m]
        sxx = ((tt - tt.mean()) ** 2).sum()
        if sxx <= 0:
            continue
        sxy = ((tt - tt.mean()) * (yy - yy.mean())).sum()
        syy = ((yy - yy.mean()) ** 2).sum()
        slope[i] = sxy / sxx
        r2[i] = sxy**2 / (sxx * syy) if syy > 0 else 0.0
    return slope, r2


@pytest.mark.parametrize("flavour", FLAVOURS)
@settings(max_examples=100, deadline=None)
@given(
    keys=hnp.arrays(np.int64, st.integers(1, 200), elements=st.integers(-5, 40)),
    data=st.data(),
)
def test_group_means_matches_oracle(flavour, keys, data):
    keys = np.sort(keys)
    values = data.draw(hnp.arrays(np.float64, keys.size, elements=st.floats(-1e4, 1e4)))
    k, m = _pick("group_means", flavour)(keys, values)
    ek, em = naive_group_means(keys, values)
    np.testing.assert_array_equal(k, ek)
    np.testing.assert_allclose(m, em, rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("flavour", FLAVOURS)
def test_group_means_empty(flavour):
    k, m = _pick("group_means", flavour)(np.empty(0, np.int64), np.empty(0))
    assert k.size == m.size == 0


@pytest.mark.parametrize("flavour", FLAVOURS)
@settings(max_examples=100, deadline=None)
@given(
    n1=st.integers(1, 60), n2=st.integers(1, 60), lo=st.floats(0, 100), jump=st.floats(5, 100),
    seed=st.integers(0, 2**31),
)
def test_best_split_matches_oracle(flavour, n1, n2, lo, jump, seed):
    rng = np.random.default_rng(seed)
    x = np.concatenate([np.full(n1, lo), np.full(n2, lo + jump)]) + rng.normal(0, 0.5, n1 + n2)
    assert _pick("best_split", flavour)(x) == naive_best_split(x)


@pytest.mark.parametrize("flavour", FLAVOURS)
def test_best_split_clean_step(flavour):
    x = np.r_[np.full(30, 2561.0), np.full(50, 3082.0)]
    assert _pick("best_split", flavour)(x) == 30


@pytest.mark.parametrize("flavour", FLAVOURS)
def test_best_split_needs_two(flavour):
    with pytest.raises(ValueError):
        _pick("best_split", flavour)(np.array([1.0]))


@pytest.mark.parametrize("flavour", FLAVOURS)
@settings(max_examples=60, deadline=None)
@given(
    dts=hnp.arrays(np.float64, st.integers(1, 80), elements=st.floats(0.05, 5.0)),
    window=st.floats(0.5, 20),
    seed=st.integers(0, 2**31),
)
def test_sliding_linfit_matches_oracle(flavour, dts, window, seed):
    t = 1.65e9 + np.cumsum(dts)
    y = np.random.default_rng(seed).normal(50, 10, t.size)
    s, r = _pick("sliding_linfit", flavour)(t, y, window, 3)
    es, er = naive_linfit(t, y, window, 3)
    np.testing.assert_allclose(s, es, rtol=1e-6, atol=1e-9, equal_nan=True)
    np.testing.assert_allclose(r, er, rtol=1e-6, atol=1e-9, equal_nan=True)


@pytest.mark.parametrize("flavour", FLAVOURS)
def test_sliding_linfit_exact_ramp(flavour):
    t = np.arange(0.0, 60.0, 5.0)
    y = 71.0 + 1.2 * t
    s, r = _pick("sliding_linfit", flavour)(t, y, 10.0, 3)
    assert np.isnan(s[:2]).all()
    np.testing.assert_allclose(s[2:], 1.2)
    np.testing.assert_allclose(r[2:], 1.0)


def test_flavours_agree_on_large_input():
    if not JIT_ENABLED:
        pytest.skip("numba disabled")
    rng = np.random.default_rng(1)
    keys = np.sort(rng.integers(0, 5000, 100_000))
    vals = rng.normal(size=keys.size)
    for a, b in zip(kernels.group_means_numpy(keys, vals), kernels.group_means_numba(keys, vals)):
        np.testing.assert_allclose(a, b, rtol=1e-12)
    x = np.r_[rng.normal(0, 1, 40_000), rng.normal(0.3, 1, 60_000)]
    assert abs(kernels.best_split_numpy(x) - kernels.best_split_numba(x)) <= 1

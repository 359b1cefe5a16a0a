import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odakit.analysis import (
    BenchmarkRecord,
    MachineSpec,
    SuspectPeakModel,
    bandwidth_efficiency,
    flops_efficiency,
    rate_from_counters,
    scaling_summary,
)
from odakit.sources import SyntheticSource

SPEC = MachineSpec()


@pytest.mark.parametrize(
    "gflops,nodes,expected",
    [(1.86, 1, 46.5), (12.65, 8, 39.5), (1.44, 1, 36.0)],
)
def test_flops_efficiency(gflops, nodes, expected):
    eff = flops_efficiency(BenchmarkRecord("x", gflops * 1e9, nodes), SPEC)
    assert abs(100 * eff - expected) <= 0.1


def test_bandwidth_efficiency():
    assert abs(100 * bandwidth_efficiency(BenchmarkRecord("copy", 1206e6), SPEC) - 15.5) <= 0.1


def test_suspect_peak_warns():
    with pytest.warns(SuspectPeakModel):
        flops_efficiency(BenchmarkRecord("x", 5e9), SPEC)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        flops_efficiency(BenchmarkRecord("x", 4e9), SPEC)


def test_scaling():
    s = scaling_summary(BenchmarkRecord("hpl", 1.86e9), BenchmarkRecord("hpl", 12.65e9, 8))
    assert s.speedup == pytest.approx(6.801, abs=1e-3)
    assert abs(100 * s.linear_fraction - 85.0) <= 0.1
    with pytest.raises(ValueError):
        scaling_summary(BenchmarkRecord("a", 1.0, 2), BenchmarkRecord("b", 1.0, 8))


def test_record_validation():
    with pytest.raises(ValueError):
        BenchmarkRecord("x", 0.0)
    with pytest.raises(ValueError):
        BenchmarkRecord("x", 1.0, 0)
    with pytest.raises(ValueError):
        MachineSpec(cores_per_node=0)


@settings(max_examples=300)
@given(st.floats(1e3, 1e12), st.floats(1e-3, 1e3), st.integers(1, 64))
def test_efficiency_scale_invariant(sustained, k, nodes):
    a = flops_efficiency(BenchmarkRecord("x", sustained, nodes), MachineSpec(peak_flops_per_core=sustained))
    b = flops_efficiency(BenchmarkRecord("x", sustained * k, nodes), MachineSpec(peak_flops_per_core=sustained * k))
    assert a == pytest.approx(b, rel=1e-12)


@settings(max_examples=300)
@given(st.floats(1e-3, 1e12), st.floats(1e-3, 1e12), st.integers(1, 1024))
def test_linear_fraction_identity(a, b, n):
    s = scaling_summary(BenchmarkRecord("a", a), BenchmarkRecord("b", b, n))
    assert s.linear_fraction == s.speedup / n


def test_rate_examples():
    t, r = rate_from_counters([0, 1, 2], [0, 10, 20])
    assert list(t) == [1, 2] and list(r) == [10, 10]
    t, r = rate_from_counters([0, 1, 2, 3], [0, 10, 3, 8])
    assert list(t) == [1, 3] and list(r) == [10, 5]
    t, r = rate_from_counters([0, 1, 2, 3], [0, 10, 20, 30], resets=[0, 0, 1, 0])
    assert list(t) == [1, 3]
    assert rate_from_counters([1.0], [1.0])[0].size == 0
    with pytest.raises(ValueError):
        rate_from_counters([1, 2], [1])


def test_rate_from_synthetic_counter():
    src = SyntheticSource(counter_rates={"instret": 1000.0}, start=0.0)
    t = 100.0 + 0.5 * np.arange(40)
    v = [src.read_counter(0, "instret", now=x) for x in t]
    _, r = rate_from_counters(t, v)
    assert np.all(np.abs(r - 1000.0) <= 2.0)

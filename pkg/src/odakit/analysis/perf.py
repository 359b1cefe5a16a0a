"""Benchmark efficiency, strong scaling and counter rate arithmetic."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class SuspectPeakModel(UserWarning):
    """Sustained throughput above the modelled peak."""


@dataclass(frozen=True)
class MachineSpec:
    cores_per_node: int = 4
    peak_flops_per_core: float = 1.0e9
    nodes: int = 8
    peak_mem_bw: float = 7760e6  # bytes/s per node

    def __post_init__(self) -> None:
        if min(self.cores_per_node, self.peak_flops_per_core, self.nodes, self.peak_mem_bw) <= 0:
            raise ValueError("machine parameters must be positive")

    def peak_flops(self, nodes: int = 1) -> float:
        return nodes * self.cores_per_node * self.peak_flops_per_core


@dataclass(frozen=True)
class BenchmarkRecord:
    """One benchmark result. ``sustained`` is FLOP/s or bytes/s."""

    name: str
    sustained: float
    nodes_used: int = 1
    runtime: float | None = None
    runtime_std: float | None = None
    config: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.sustained > 0:
            raise ValueError("sustained throughput must be positive")
        if self.nodes_used < 1:
            raise ValueError("nodes_used must be at least 1")


def flops_efficiency(rec: BenchmarkRecord, spec: MachineSpec) -> float:
    eff = rec.sustained / spec.peak_flops(rec.nodes_used)
    if eff > 1:
        warnings.warn(
            f"{rec.name}: {eff:.3f} of peak, check the peak model", SuspectPeakModel, stacklevel=2
        )
    return eff


def bandwidth_efficiency(rec: BenchmarkRecord, spec: MachineSpec) -> float:
    return rec.sustained / spec.peak_mem_bw


class ScalingSummary(NamedTuple):
    speedup: float
    linear_fraction: float


def scaling_summary(single: BenchmarkRecord, multi: BenchmarkRecord) -> ScalingSummary:
    if single.nodes_used != 1:
        raise ValueError("reference run must use one node")
    if multi.nodes_used < single.nodes_used:
        raise ValueError("scaled run must not use fewer nodes than the reference")
    speedup = multi.sustained / single.sustained
    return ScalingSummary(speedup, speedup / multi.nodes_used)


def rate_from_counters(times, values, resets=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-second rates between consecutive raw counter readings.

    A point is emitted at ``t_k`` for each interval. Intervals ending on a
    flagged reset, or where the counter went backwards, produce nothing.
    """
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.shape != v.shape:
        raise ValueError("times and values must have the same shape")
    if t.size < 2:
        return t[:0], v[:0]
    dt = np.diff(t)
    dv = np.diff(v)
    ok = (dt > 0) & (dv >= 0)
    if resets is not None:
        r = np.asarray(resets, dtype=bool)
        ok &= ~r[1:]
    return t[1:][ok], dv[ok] / dt[ok]

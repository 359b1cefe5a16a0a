"""Derived quantities from node telemetry: power, efficiency, thermal."""

from .perf import (
    BenchmarkRecord,
    MachineSpec,
    ScalingSummary,
    SuspectPeakModel,
    bandwidth_efficiency,
    flops_efficiency,
    rate_from_counters,
    scaling_summary,
)
from .power import (
    BootSegmentation,
    EmptyTrace,
    MissingRail,
    NoPllActivation,
    NonMonotone,
    PowerDecomposition,
    TooShort,
    WorkloadPowerTable,
    decompose_levels,
    decompose_power,
    leakage_fraction,
    segment_boot,
    window_average,
    window_mean,
    workload_table,
)
from .thermal import EventKind, ThermalEvent, detect_thermal_events

__all__ = [
    "BenchmarkRecord",
    "BootSegmentation",
    "EmptyTrace",
    "EventKind",
    "MachineSpec",
    "MissingRail",
    "NoPllActivation",
    "NonMonotone",
    "PowerDecomposition",
    "ScalingSummary",
    "SuspectPeakModel",
    "ThermalEvent",
    "TooShort",
    "WorkloadPowerTable",
    "bandwidth_efficiency",
    "decompose_levels",
    "decompose_power",
    "detect_thermal_events",
    "flops_efficiency",
    "leakage_fraction",
    "rate_from_counters",
    "scaling_summary",
    "segment_boot",
    "window_average",
    "window_mean",
    "workload_table",
]

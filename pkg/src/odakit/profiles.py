"""Reference per-rail power levels (mW) for the simulated node.

Columns are the measured workload means of the reference board; the boot
schedule places leakage-only (``r1``), bootloader (``r2``) and OS-running
(``r3``) phases on a timeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import RAILS, Rail

WORKLOADS = ("Idle", "HPL", "STREAM.L2", "STREAM.DDR", "QE")


def _col(*mw: float) -> dict[Rail, float]:
    return dict(zip(RAILS, map(float, mw)))


# rail order: core ddr_soc io pll pcievp pcievph ddr_mem ddr_pll ddr_vpp
RAIL_MEANS: dict[str, dict[Rail, float]] = {
    "Idle": _col(3075, 139, 20, 1, 521, 555, 404, 28, 67),
    "HPL": _col(4097, 177, 20, 1, 527, 554, 440, 28, 90),
    "STREAM.L2": _col(3714, 170, 20, 1, 524, 554, 401, 28, 73),
    "STREAM.DDR": _col(3287, 232, 20, 1, 522, 555, 592, 28, 98),
    "QE": _col(3825, 176, 20, 1, 530, 561, 434, 28, 95),
    "Boot.R1": _col(984, 59, 5, 0, 12, 1, 275, 0, 49),
    "Boot.R2": _col(2561, 197, 20, 2, 231, 395, 467, 29, 122),
}

# published column totals and integer percentages, kept for report checks
TABLE_TOTALS = {"Idle": 4810, "HPL": 5935, "STREAM.L2": 5486, "STREAM.DDR": 5336, "QE": 5670,
                "Boot.R1": 1385, "Boot.R2": 4024}
TABLE_PERCENT: dict[str, dict[Rail, int]] = {
    "Idle": dict(zip(RAILS, (64, 3, 0, 0, 11, 12, 8, 1, 1))),
    "HPL": dict(zip(RAILS, (69, 3, 0, 0, 9, 9, 7, 1, 2))),
    "STREAM.L2": dict(zip(RAILS, (68, 3, 0, 0, 10, 10, 7, 1, 1))),
    "STREAM.DDR": dict(zip(RAILS, (62, 4, 0, 0, 10, 10, 11, 1, 2))),
    "QE": dict(zip(RAILS, (67, 3, 0, 0, 9, 10, 8, 1, 2))),
}

# core settles slightly above the idle figure once the OS is up
BOOT_R3_CORE_MW = 3082.0


@dataclass(frozen=True)
class BootSchedule:
    """Boot phase boundaries in seconds from power-on of the trace."""

    r1_start: float = 4.0
    r2_start: float = 10.0
    r3_start: float = 40.0
    end: float = 80.0
    r1: dict[Rail, float] = field(default_factory=lambda: dict(RAIL_MEANS["Boot.R1"]))
    r2: dict[Rail, float] = field(default_factory=lambda: dict(RAIL_MEANS["Boot.R2"]))
    r3: dict[Rail, float] = field(
        default_factory=lambda: {**RAIL_MEANS["Idle"], Rail.CORE: BOOT_R3_CORE_MW}
    )

    def __post_init__(self) -> None:
        if not 0 <= self.r1_start < self.r2_start < self.r3_start < self.end:
            raise ValueError("boot schedule must be strictly ordered")

    def level(self, rail: Rail, t: float) -> float:
        if t < self.r1_start:
            return 0.0
        if t < self.r2_start:
            return self.r1[rail]
        if t < self.r3_start:
            return self.r2[rail]
        return self.r3[rail]

"""Threshold and runaway detection on temperature series."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .. import kernels

DEFAULT_RUNAWAY_RATE = 1.0  # degC/s
DEFAULT_RUNAWAY_WINDOW = 10.0  # s
# a step change fits a line with R^2 <= 0.75; sustained ramps sit near 1
DEFAULT_MIN_R2 = 0.9


class EventKind(str, enum.Enum):
    WARN = "WARN"
    CRITICAL = "CRITICAL"
    RUNAWAY = "RUNAWAY"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ThermalEvent:
    node: str
    sensor: str
    kind: EventKind
    onset: float
    peak: float

    def as_dict(self) -> dict:
        return {"node": self.node, "sensor": self.sensor, "kind": self.kind.value,
                "onset": self.onset, "peak": self.peak}


def _episode_peak(y: np.ndarray, i: int, floor: float) -> float:
    """Max of ``y`` from ``i`` until it first drops below ``floor``."""
    below = np.flatnonzero(y[i:] < floor)
    stop = i + below[0] if below.size else y.size
    return float(y[i:stop].max())


def detect_thermal_events(
    traces: Mapping[tuple[str, str], tuple],
    warn: float,
    critical: float,
    runaway_rate: float = DEFAULT_RUNAWAY_RATE,
    window: float = DEFAULT_RUNAWAY_WINDOW,
    min_r2: float = DEFAULT_MIN_R2,
    min_points: int = 3,
) -> list[ThermalEvent]:
    """Scan ``(node, sensor) -> (times, degC)`` series for hazards.

    Each series yields at most one event of each kind: WARN at the first
    sample at or above ``warn``, CRITICAL likewise for ``critical``, and
    RUNAWAY at the first sample above ``warn`` whose trailing ``window``
    least-squares slope exceeds ``runaway_rate`` with a fit of at least
    ``min_r2``. Peaks run from onset until the series falls back below the
    kind's threshold (``warn`` for RUNAWAY).
    """
    if not warn < critical:
        raise ValueError("warn threshold must be below critical")
    events: list[ThermalEvent] = []
    for (node, sensor), (times, temps) in traces.items():
        t = np.asarray(times, dtype=np.float64)
        y = np.asarray(temps, dtype=np.float64)
        if t.size == 0:
            continue
        found = []
        for kind, thr in ((EventKind.WARN, warn), (EventKind.CRITICAL, critical)):
            hit = np.flatnonzero(y >= thr)
            if hit.size:
                i = int(hit[0])
                found.append(ThermalEvent(node, sensor, kind, float(t[i]), _episode_peak(y, i, thr)))
        if t.size >= min_points:
            slope, r2 = kernels.sliding_linfit(t, y, window, min_points)
            with np.errstate(invalid="ignore"):
                cond = (y >= warn) & (slope > runaway_rate) & (r2 >= min_r2)
            hit = np.flatnonzero(cond)
            if hit.size:
                i = int(hit[0])
                found.append(ThermalEvent(node, sensor, EventKind.RUNAWAY, float(t[i]), _episode_peak(y, i, warn)))
        events.extend(sorted(found, key=lambda e: e.onset))
    return events

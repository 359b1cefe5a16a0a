"""Power trace windowing, boot-phase segmentation and power breakdowns."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .. import kernels
from ..model import RAILS, SUBSYSTEM_MAP, PowerTrace, Rail, Subsystem, parse_rail

# samples this close (in window units) below a boundary count for the next window
_EDGE_EPS = 1e-9


class EmptyTrace(ValueError):
    pass


class NoPllActivation(ValueError):
    pass


class TooShort(ValueError):
    pass


class NonMonotone(ValueError):
    pass


class MissingRail(KeyError):
    pass


def window_mean(times, values, window: float, origin: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Average ``values`` over windows ``[origin + k*w, origin + (k+1)*w)``.

    Returns window midpoints and means; windows with no samples are omitted.
    ``times`` must be sorted. ``origin`` defaults to the first timestamp.
    """
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.size == 0:
        raise EmptyTrace("cannot window an empty trace")
    if not window > 0:
        raise ValueError("window must be positive")
    if origin is None:
        origin = float(t[0])
    keys = np.floor((t - origin) / window + _EDGE_EPS).astype(np.int64)
    k, means = kernels.group_means(keys, v)
    return origin + (k + 0.5) * window, means


def window_average(trace: PowerTrace, window: float, origin: float | None = None) -> PowerTrace:
    mid, means = window_mean(trace.times, trace.power, window, origin)
    return PowerTrace(trace.rail, mid, np.maximum(means, 0.0))


@dataclass(frozen=True)
class BootSegmentation:
    r1: tuple[float, float]
    r2: tuple[float, float]
    r3: tuple[float, float]
    mean_power: dict[str, dict[Rail, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        (a, b), (c, d), (e, f) = self.r1, self.r2, self.r3
        if not (a < b <= c < d <= e < f):
            raise ValueError(f"boot regions out of order: {self.r1} {self.r2} {self.r3}")

    def mean(self, region: str, rail: str | Rail = Rail.CORE) -> float:
        return self.mean_power[region][parse_rail(rail)]

    def region(self, name: str) -> tuple[float, float]:
        return {"R1": self.r1, "R2": self.r2, "R3": self.r3}[name]


def _region_mean(trace: PowerTrace, start: float, end: float, inclusive: bool = False) -> float:
    lo = np.searchsorted(trace.times, start, side="left")
    hi = np.searchsorted(trace.times, end, side="right" if inclusive else "left")
    if hi <= lo:
        return math.nan
    return float(trace.power[lo:hi].mean())


def _first_rise(trace: PowerTrace, lo: float, hi: float, threshold: float) -> float:
    """Time of the first raw sample above ``threshold`` in ``[lo, hi)``; ``lo`` if none."""
    a, b = np.searchsorted(trace.times, [lo, hi], side="left")
    above = np.flatnonzero(trace.power[a:b] > threshold)
    return float(trace.times[a + above[0]]) if above.size else lo


def segment_boot(
    core: PowerTrace,
    pll: PowerTrace,
    os_ready_marker: float | None = None,
    others: Mapping[str | Rail, PowerTrace] | None = None,
    resolution: float = 0.01,
    settle_window: float = 5.0,
    final_window: float = 10.0,
    settle_tol: float = 0.02,
    min_pll_threshold: float = 0.5,
    confirm: int = 5,
) -> BootSegmentation:
    """Split a boot trace into leakage-only, bootloader and OS phases.

    R1 ends where the PLL rail first rises above half of its final plateau
    (never below ``min_pll_threshold`` mW). R1 starts where core power last
    exceeded half of its level just before that. R2 ends at
    ``os_ready_marker`` when given; otherwise the settling point (trailing
    ``settle_window`` mean within ``settle_tol`` of the final
    ``final_window`` mean, for good) bounds a least-squares mean-shift
    search for the R2/R3 step. Region means are reported for core, pll and
    every trace in ``others``.
    """
    if len(core) < 2 or len(pll) < 2:
        raise TooShort("core and pll traces need at least two samples")
    origin = min(core.times[0], pll.times[0])
    t_end = float(core.times[-1])

    tail_from = pll.times[-1] - 0.1 * (pll.times[-1] - pll.times[0])
    plateau = float(np.median(pll.power[pll.times >= tail_from]))
    pll_thr = max(min_pll_threshold, 0.5 * plateau)
    p_mid, p_mean = window_mean(pll.times, pll.power, resolution, origin)
    above = p_mean > pll_thr
    if confirm > 1 and above.size >= confirm:
        run = np.convolve(above.astype(np.int64), np.ones(confirm, dtype=np.int64), mode="valid")
        hits = np.flatnonzero(run == confirm)
    else:
        hits = np.flatnonzero(above)
    if hits.size == 0:
        raise NoPllActivation(f"pll never exceeds {pll_thr:.3g} mW")
    w0 = p_mid[hits[0]] - resolution / 2
    t_act = _first_rise(pll, w0, w0 + resolution, pll_thr)

    c_mid, c_mean = window_mean(core.times, core.power, resolution, origin)
    before = (c_mid < t_act) & (c_mid >= t_act - 1.0)
    if not before.any():
        raise TooShort("no core samples before pll activation")
    core_floor = 0.5 * float(np.median(c_mean[before]))
    low = np.flatnonzero((c_mid < t_act) & (c_mean <= core_floor))
    if low.size:
        w1 = c_mid[low[-1]] - resolution / 2
        r1_start = _first_rise(core, w1, t_act, core_floor)
    else:
        r1_start = float(core.times[0])
    if not r1_start < t_act:
        raise TooShort("empty R1 region")

    if os_ready_marker is not None:
        if not t_act < os_ready_marker < t_end:
            raise ValueError("os_ready_marker must fall between pll activation and trace end")
        t_os = float(os_ready_marker)
    else:
        if t_end - t_act < settle_window + final_window:
            raise TooShort("trace too short after pll activation to find settling")
        final = _region_mean(core, t_end - final_window, t_end, inclusive=True)
        post = c_mid >= t_act
        mids, vals = c_mid[post], c_mean[post]
        csum = np.concatenate(([0.0], np.cumsum(vals)))
        lo = np.searchsorted(mids, mids - settle_window, side="right")
        idx = np.arange(mids.size)
        trailing = (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)
        full = mids - settle_window >= t_act
        bad = full & (np.abs(trailing - final) > settle_tol * abs(final))
        first_full = int(np.argmax(full))
        settle_i = int(np.flatnonzero(bad)[-1]) + 1 if bad.any() else first_full
        settle_i = min(settle_i, mids.size - 1)
        seg = vals[: settle_i + 1]
        if seg.size >= 2:
            k = kernels.best_split(seg)
            t_os = float(mids[k] - resolution / 2)
        else:
            t_os = float(mids[settle_i] - resolution / 2)
        t_os = min(max(t_os, t_act + resolution), t_end - resolution)

    r1, r2, r3 = (r1_start, t_act), (t_act, t_os), (t_os, t_end)
    traces: dict[Rail, PowerTrace] = {Rail.CORE: core, Rail.PLL: pll}
    for name, tr in (others or {}).items():
        traces[parse_rail(name)] = tr
    means = {
        "R1": {r: _region_mean(tr, *r1) for r, tr in traces.items()},
        "R2": {r: _region_mean(tr, *r2) for r, tr in traces.items()},
        "R3": {r: _region_mean(tr, *r3, inclusive=True) for r, tr in traces.items()},
    }
    return BootSegmentation(r1, r2, r3, means)


@dataclass(frozen=True)
class PowerDecomposition:
    rail: Rail
    leakage: float
    dynamic_clock: float
    os_power: float
    reference_idle: float

    @property
    def leakage_fraction(self) -> float:
        return self.leakage / self.reference_idle

    @property
    def dynamic_clock_fraction(self) -> float:
        return self.dynamic_clock / self.reference_idle

    @property
    def os_fraction(self) -> float:
        return self.os_power / self.reference_idle

    def as_dict(self) -> dict[str, float | str]:
        return {
            "rail": self.rail.value,
            "leakage_mw": self.leakage,
            "dynamic_clock_mw": self.dynamic_clock,
            "os_mw": self.os_power,
            "idle_mw": self.reference_idle,
            "leakage_pct": 100 * self.leakage_fraction,
            "dynamic_clock_pct": 100 * self.dynamic_clock_fraction,
            "os_pct": 100 * self.os_fraction,
        }


def _closing_term(target: float, partial: float) -> float:
    """``x`` with ``partial + x == target`` in floating point, when one exists nearby."""
    x = target - partial
    for _ in range(8):
        s = partial + x
        if s == target:
            return x
        x = math.nextafter(x, math.inf if s < target else -math.inf)
    return x


def _close_split(leak: float, r2: float, idle: float) -> tuple[float, float]:
    """Pick ``dyn`` and ``os`` so ``leak + dyn + os == idle`` (left to right).

    A rounding tie can make ``idle`` unreachable from ``r2``; moving the
    partial sum ``leak + dyn`` a few ulps off ``r2`` breaks the tie.
    """
    cand = [r2]
    up = down = r2
    for _ in range(4):
        up, down = math.nextafter(up, math.inf), math.nextafter(down, -math.inf)
        cand += [up, down]
    for part in cand:
        if not leak <= part <= idle:
            continue
        dyn = _closing_term(part, leak)
        if dyn < 0 or leak + dyn != part:
            continue
        os_p = _closing_term(idle, part)
        if os_p >= 0 and part + os_p == idle:
            return dyn, os_p
    dyn = r2 - leak
    return dyn, max(idle - (leak + dyn), 0.0)


def decompose_levels(r1: float, r2: float, idle: float, rail: str | Rail = Rail.CORE) -> PowerDecomposition:
    """Leakage = R1, dynamic+clock = R2 - R1, OS = idle - R2.

    The three parts sum to ``idle`` exactly. Requires ``0 <= R1 <= R2 <= idle``.
    """
    if not all(map(math.isfinite, (r1, r2, idle))):
        raise NonMonotone("decomposition inputs must be finite")
    if not 0 <= r1 <= r2 <= idle or idle <= 0:
        raise NonMonotone(f"need 0 <= R1 ({r1}) <= R2 ({r2}) <= idle ({idle}), idle > 0")
    leak, r2, idle = float(r1), float(r2), float(idle)
    dyn, os_p = _close_split(leak, r2, idle)
    return PowerDecomposition(parse_rail(rail), leak, dyn, os_p, idle)


def decompose_power(seg: BootSegmentation, idle_power: float, rail: str | Rail = Rail.CORE) -> PowerDecomposition:
    return decompose_levels(seg.mean("R1", rail), seg.mean("R2", rail), idle_power, rail)


def leakage_fraction(seg: BootSegmentation, idle_power: float, rail: str | Rail) -> float:
    """R1 mean over idle power, for rails whose R2 level overshoots idle."""
    r1 = seg.mean("R1", rail)
    if not 0 <= r1 <= idle_power or idle_power <= 0:
        raise NonMonotone(f"need 0 <= R1 ({r1}) <= idle ({idle_power})")
    return r1 / idle_power


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class WorkloadPowerTable:
    workload: str
    rail_mean: dict[Rail, float]

    @property
    def total(self) -> float:
        return math.fsum(self.rail_mean.values())

    @property
    def percent(self) -> dict[Rail, float]:
        tot = self.total
        return {r: (100.0 * v / tot if tot > 0 else 0.0) for r, v in self.rail_mean.items()}

    @property
    def subsystem_percent(self) -> dict[Subsystem, float]:
        out = dict.fromkeys(Subsystem, 0.0)
        for r, p in self.percent.items():
            out[SUBSYSTEM_MAP[r]] += p
        return out

    def display_mw(self, rail: Rail) -> int:
        return _half_up(self.rail_mean[rail])

    def display_percent(self, rail: Rail) -> int:
        return _half_up(self.percent[rail])

    def display_total(self) -> int:
        return _half_up(self.total)

    def as_dict(self) -> dict:
        pct = self.percent
        return {
            "workload": self.workload,
            "total_mw": self.total,
            "rails": {r.value: {"mw": self.rail_mean[r], "pct": pct[r]} for r in RAILS},
            "subsystems": {s.value: v for s, v in self.subsystem_percent.items()},
        }


def workload_table(
    traces: Mapping[str | Rail, PowerTrace],
    workload: str,
    start: float | None = None,
    end: float | None = None,
) -> WorkloadPowerTable:
    """Per-rail mean power over ``[start, end)`` (whole traces by default)."""
    by_rail = {parse_rail(k): v for k, v in traces.items()}
    missing = [r.value for r in RAILS if r not in by_rail]
    if missing:
        raise MissingRail(f"missing rails: {', '.join(missing)}")
    means = {}
    for r in RAILS:
        tr = by_rail[r]
        lo = 0 if start is None else np.searchsorted(tr.times, start, side="left")
        hi = len(tr) if end is None else np.searchsorted(tr.times, end, side="left")
        if hi <= lo:
            raise EmptyTrace(f"rail {r.value} has no samples in the measurement window")
        means[r] = float(tr.power[lo:hi].mean())
    return WorkloadPowerTable(workload, means)

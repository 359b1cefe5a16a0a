"""Synthetic cluster traces and their replay through a transport.

A scenario describes nodes, a workload timeline per node, optional thermal
scripts and counter rates. :func:`generate` turns it into per-node bundles
of ``(times, values)`` series addressed by topic; :func:`replay` publishes
them again with their original timestamps.
"""

from __future__ import annotations

import json
import logging
import math
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .model import (
    PAYLOAD_DIGITS,
    RAILS,
    MetricSample,
    PowerTrace,
    Rail,
    TopicPath,
    decode_topic,
    encode_topic,
    power_metric,
    rail_of_metric,
    wire_quantize,
)
from .profiles import RAIL_MEANS, WORKLOADS, BootSchedule
from .sources import SYNTHETIC_STATS

logger = logging.getLogger(__name__)

SIM_WORKLOADS = (*WORKLOADS, "Boot")

# retired instructions per second per core while a phase runs (scenario defaults, not measurements)
INSTRET_RATES = {"Idle": 2.0e7, "HPL": 9.0e8, "STREAM.L2": 5.0e8, "STREAM.DDR": 3.0e8,
                 "QE": 8.0e8, "Boot": 1.0e8}
CYCLE_RATE = 1.2e9
BASE_TEMPS = {"cpu_temp": 45.0, "mb_temp": 38.0, "nvme_temp": 36.0}


class InvalidScenario(ValueError):
    pass


@dataclass(frozen=True)
class Phase:
    workload: str
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class ThermalScript:
    """Plateau at ``start_temp`` for ``hold`` s, then a linear ramp to ``peak``.

    Before ``at`` the sensor sits at its base temperature. With ``shutdown``
    the node stops at the peak and cools toward ``ambient``.
    """

    node: int
    sensor: str = "cpu_temp"
    at: float = 0.0
    start_temp: float = 71.0
    hold: float = 60.0
    peak: float = 107.0
    span: float = 300.0
    shutdown: bool = True
    ambient: float = 30.0
    cool_tau: float = 60.0

    def level(self, t: np.ndarray, base: float) -> np.ndarray:
        ramp0 = self.at + self.hold
        ramp1 = ramp0 + self.span
        out = np.full(t.shape, base)
        out = np.where(t >= self.at, self.start_temp, out)
        if self.span > 0:
            frac = np.clip((t - ramp0) / self.span, 0.0, 1.0)
            out = np.where(t >= ramp0, self.start_temp + frac * (self.peak - self.start_temp), out)
        if self.shutdown:
            cool = self.ambient + (self.peak - self.ambient) * np.exp(-(t - ramp1) / self.cool_tau)
            out = np.where(t > ramp1, cool, out)
        return out


@dataclass
class SimScenario:
    nodes: int = 1
    duration: float = 60.0
    timelines: dict[int, list[Phase]] = field(default_factory=dict)
    thermal: list[ThermalScript] = field(default_factory=list)
    power_rate: float = 1000.0
    counter_rate: float = 2.0
    stats_rate: float = 0.2
    noise: float = 0.01
    temp_noise: float = 0.1
    seed: int = 0
    start: float = 1.65e9
    org: str = "org"
    cluster: str = "cluster"
    host_prefix: str = "mc"
    cores: int = 4
    instret_rates: dict[str, float] = field(default_factory=lambda: dict(INSTRET_RATES))
    comm_phases: list[tuple[float, float, float]] = field(default_factory=list)
    signals: tuple[str, ...] = ("power", "thermal", "counters")
    boot: BootSchedule = field(default_factory=BootSchedule)

    def __post_init__(self) -> None:
        if self.nodes < 1:
            raise InvalidScenario("need at least one node")
        if not self.duration > 0:
            raise InvalidScenario("duration must be positive")
        for name in ("power_rate", "counter_rate", "stats_rate"):
            if not getattr(self, name) > 0:
                raise InvalidScenario(f"{name} must be positive")
        if self.noise < 0 or self.temp_noise < 0:
            raise InvalidScenario("noise must be non-negative")
        unknown = set(self.signals) - {"power", "thermal", "counters", "stats"}
        if unknown:
            raise InvalidScenario(f"unknown signal groups {sorted(unknown)}")
        for node, phases in self.timelines.items():
            if not 0 <= node < self.nodes:
                raise InvalidScenario(f"timeline for missing node {node}")
            ordered = sorted(phases, key=lambda p: p.start)
            for p in ordered:
                if p.workload not in SIM_WORKLOADS:
                    raise InvalidScenario(f"unknown workload {p.workload!r}")
                if p.duration <= 0 or p.start < 0:
                    raise InvalidScenario(f"bad phase {p}")
            for a, b in zip(ordered, ordered[1:]):
                if b.start < a.end:
                    raise InvalidScenario(f"overlapping phases {a} and {b} on node {node}")
            self.timelines[node] = ordered
        for s in self.thermal:
            if not 0 <= s.node < self.nodes:
                raise InvalidScenario(f"thermal script for missing node {s.node}")
            if s.sensor not in BASE_TEMPS:
                raise InvalidScenario(f"unknown sensor {s.sensor!r}")

    def hostname(self, i: int) -> str:
        return f"{self.host_prefix}{i + 1:02d}"

    def timeline(self, i: int) -> list[Phase]:
        return self.timelines.get(i) or [Phase("Idle", 0.0, self.duration)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["timelines"] = {str(k): [asdict(p) for p in v] for k, v in self.timelines.items()}
        d["signals"] = list(self.signals)
        d["boot"] = {
            "r1_start": self.boot.r1_start, "r2_start": self.boot.r2_start,
            "r3_start": self.boot.r3_start, "end": self.boot.end,
            "r1": {r.value: v for r, v in self.boot.r1.items()},
            "r2": {r.value: v for r, v in self.boot.r2.items()},
            "r3": {r.value: v for r, v in self.boot.r3.items()},
        }
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> SimScenario:
        d = dict(d)
        try:
            if "timelines" in d:
                d["timelines"] = {int(k): [Phase(**p) for p in v] for k, v in d["timelines"].items()}
            if "thermal" in d:
                d["thermal"] = [ThermalScript(**s) for s in d["thermal"]]
            if "comm_phases" in d:
                d["comm_phases"] = [tuple(c) for c in d["comm_phases"]]
            if "signals" in d:
                d["signals"] = tuple(d["signals"])
            if "boot" in d:
                b = dict(d["boot"])
                for k in ("r1", "r2", "r3"):
                    if k in b:
                        b[k] = {Rail(r): float(v) for r, v in b[k].items()}
                d["boot"] = BootSchedule(**b)
            return cls(**d)
        except (TypeError, KeyError, ValueError) as exc:
            if isinstance(exc, InvalidScenario):
                raise
            raise InvalidScenario(str(exc)) from exc


@dataclass
class Signal:
    topic: TopicPath
    times: np.ndarray
    values: np.ndarray

    @property
    def key(self) -> str:
        return encode_topic(self.topic)


@dataclass
class NodeBundle:
    node: str
    timeline: list[Phase]
    signals: dict[str, Signal]

    def power_traces(self) -> dict[Rail, PowerTrace]:
        out = {}
        for s in self.signals.values():
            if s.topic.plugin == "power_pub":
                r = rail_of_metric(s.topic.metric_name)
                out[r] = PowerTrace(r, s.times, s.values)
        return out

    def find(self, plugin: str, metric: str, core: int | None = None) -> Signal:
        for s in self.signals.values():
            t = s.topic
            if t.plugin == plugin and t.metric_name == metric and t.core_id == core:
                return s
        raise KeyError(f"{self.node}: no {plugin} signal {metric!r} core={core}")


@dataclass
class Bundle:
    scenario: SimScenario
    nodes: list[NodeBundle]

    def series(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {k: (s.times, s.values) for nb in self.nodes for k, s in nb.signals.items()}

    def sample_count(self) -> int:
        return sum(s.times.size for nb in self.nodes for s in nb.signals.values())

    def node(self, name: str) -> NodeBundle:
        for nb in self.nodes:
            if nb.node == name:
                return nb
        raise KeyError(name)

    def save(self, directory: str | Path) -> Path:
        """Write one ``timestamp,value`` CSV per signal plus ``manifest.json``."""
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        manifest = {"format": 1, "scenario": self.scenario.to_dict(), "nodes": []}
        for nb in self.nodes:
            (root / nb.node).mkdir(exist_ok=True)
            entries = []
            for key, s in nb.signals.items():
                rel = f"{nb.node}/{_signal_filename(s.topic)}"
                with open(root / rel, "w", newline="") as fh:
                    fh.write("timestamp,value\n")
                    fh.writelines(f"{t!r},{v!r}\n" for t, v in zip(s.times.tolist(), s.values.tolist()))
                entries.append({"topic": key, "file": rel, "samples": int(s.times.size)})
            manifest["nodes"].append({
                "node": nb.node,
                "timeline": [asdict(p) for p in nb.timeline],
                "signals": entries,
            })
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return root

    @classmethod
    def load(cls, directory: str | Path) -> Bundle:
        root = Path(directory)
        manifest = json.loads((root / "manifest.json").read_text())
        scenario = SimScenario.from_dict(manifest["scenario"])
        nodes = []
        for entry in manifest["nodes"]:
            signals = {}
            for sig in entry["signals"]:
                data = np.loadtxt(root / sig["file"], delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
                t = data[:, 0].copy() if data.size else np.empty(0)
                v = data[:, 1].copy() if data.size else np.empty(0)
                signals[sig["topic"]] = Signal(decode_topic(sig["topic"]), t, v)
            nodes.append(NodeBundle(entry["node"], [Phase(**p) for p in entry["timeline"]], signals))
        return cls(scenario, nodes)


def _signal_filename(t: TopicPath) -> str:
    core = f"core{t.core_id}." if t.core_id is not None else ""
    return f"{t.plugin}.{core}{t.metric_name}.csv"


def _grid(sc: SimScenario, rate: float) -> np.ndarray:
    n = int(math.floor(sc.duration * rate + 1e-9))
    return np.arange(n, dtype=np.float64) / rate


def _rng(sc: SimScenario, node: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([sc.seed, node, stream]))


def _rail_levels(sc: SimScenario, timeline: Sequence[Phase], rel: np.ndarray, rail: Rail) -> np.ndarray:
    out = np.full(rel.shape, RAIL_MEANS["Idle"][rail])
    for p in timeline:
        lo, hi = np.searchsorted(rel, [p.start, p.end], side="left")
        if p.workload == "Boot":
            local = rel[lo:hi] - p.start
            b = sc.boot
            seg = np.select(
                [local < b.r1_start, local < b.r2_start, local < b.r3_start],
                [0.0, b.r1[rail], b.r2[rail]],
                b.r3[rail],
            )
            out[lo:hi] = seg
        else:
            out[lo:hi] = RAIL_MEANS[p.workload][rail]
    return out


def _instret_rate(sc: SimScenario, timeline: Sequence[Phase], rel: np.ndarray) -> np.ndarray:
    out = np.full(rel.shape, sc.instret_rates.get("Idle", INSTRET_RATES["Idle"]))
    for p in timeline:
        lo, hi = np.searchsorted(rel, [p.start, p.end], side="left")
        out[lo:hi] = sc.instret_rates.get(p.workload, INSTRET_RATES[p.workload])
    for start, dur, factor in sc.comm_phases:
        lo, hi = np.searchsorted(rel, [start, start + dur], side="left")
        out[lo:hi] *= factor
    return out


def _generate_node(sc: SimScenario, i: int) -> NodeBundle:
    host = sc.hostname(i)
    timeline = sc.timeline(i)
    signals: dict[str, Signal] = {}

    def add(plugin: str, metric: str, rel: np.ndarray, values: np.ndarray, core: int | None = None) -> None:
        topic = TopicPath(sc.org, sc.cluster, host, plugin, metric, core)
        t = wire_quantize(sc.start + rel)
        signals[encode_topic(topic)] = Signal(topic, t, wire_quantize(values))

    if "power" in sc.signals:
        rel = _grid(sc, sc.power_rate)
        for j, rail in enumerate(RAILS):
            level = _rail_levels(sc, timeline, rel, rail)
            noise = _rng(sc, i, j).standard_normal(rel.size)
            add("power_pub", power_metric(rail), rel, np.maximum(level * (1.0 + sc.noise * noise), 0.0))

    if "thermal" in sc.signals or "stats" in sc.signals:
        rel = _grid(sc, sc.stats_rate)
        for j, (sensor, base) in enumerate(BASE_TEMPS.items()):
            level = np.full(rel.shape, base)
            for script in sc.thermal:
                if script.node == i and script.sensor == sensor:
                    level = script.level(rel, base)
            noise = _rng(sc, i, 100 + j).standard_normal(rel.size)
            add("stats_pub", f"temperature.{sensor}", rel, level + sc.temp_noise * noise)

    if "stats" in sc.signals:
        rel = _grid(sc, sc.stats_rate)
        busy = np.zeros(rel.shape)
        for p in timeline:
            lo, hi = np.searchsorted(rel, [p.start, p.end], side="left")
            busy[lo:hi] = 0.0 if p.workload == "Idle" else 1.0
        for j, metric in enumerate(sorted(SYNTHETIC_STATS)):
            if metric.startswith("temperature."):
                continue
            base = SYNTHETIC_STATS[metric]
            if metric == "total_cpu_usage.usr":
                level = np.where(busy > 0, 98.5, base)
            elif metric == "total_cpu_usage.idl":
                level = np.where(busy > 0, 1.0, base)
            elif metric.startswith("load_avg."):
                level = np.where(busy > 0, float(sc.cores), base)
            else:
                level = np.full(rel.shape, base)
            noise = _rng(sc, i, 200 + j).standard_normal(rel.size)
            add("stats_pub", metric, rel, np.maximum(level * (1.0 + sc.noise * noise), 0.0))

    if "counters" in sc.signals:
        rel = _grid(sc, sc.counter_rate)
        fine_dt = 1e-3
        fine = np.arange(int(math.ceil(sc.duration / fine_dt)) + 1) * fine_dt
        inst = np.concatenate(([0.0], np.cumsum(_instret_rate(sc, timeline, fine[:-1]) * fine_dt)))
        idx = np.minimum(np.rint(rel / fine_dt).astype(np.int64), fine.size - 1)
        for core in range(sc.cores):
            add("pmu_pub", "cycle", rel, np.floor(CYCLE_RATE * rel), core)
            add("pmu_pub", "instret", rel, np.floor(inst[idx]), core)

    return NodeBundle(host, timeline, signals)


def generate(scenario: SimScenario) -> Bundle:
    """Deterministic per-node trace bundles for ``scenario``."""
    return Bundle(scenario, [_generate_node(scenario, i) for i in range(scenario.nodes)])


def iter_samples(nb: NodeBundle) -> Iterator[MetricSample]:
    for s in nb.signals.values():
        topic = s.topic
        for t, v in zip(s.times.tolist(), s.values.tolist()):
            yield MetricSample(topic, v, t)


def _payloads(s: Signal) -> list[str]:
    return [f"{v:.{PAYLOAD_DIGITS}f};{t:.{PAYLOAD_DIGITS}f}" for t, v in zip(s.times.tolist(), s.values.tolist())]


def _paced_node(nb: NodeBundle, transport, speed: float, wall0: float, sim0: float) -> int:
    times = np.concatenate([s.times for s in nb.signals.values()]) if nb.signals else np.empty(0)
    which = np.concatenate([np.full(s.times.size, k) for k, s in enumerate(nb.signals.values())]) if nb.signals else np.empty(0, int)
    pos = np.concatenate([np.arange(s.times.size) for s in nb.signals.values()]) if nb.signals else np.empty(0, int)
    order = np.argsort(times, kind="stable")
    sigs = list(nb.signals.values())
    n = 0
    for o in order:
        s = sigs[which[o]]
        t = float(times[o])
        delay = wall0 + (t - sim0) / speed - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        transport.publish(MetricSample(s.topic, float(s.values[pos[o]]), t))
        n += 1
    return n


def replay(bundle: Bundle, transport, speed: float = math.inf) -> int:
    """Publish every sample with its original timestamp; returns the count.

    ``speed`` scales wall-clock pacing (2.0 replays twice as fast); infinity
    publishes as fast as possible, series by series.
    """
    if not speed > 0:
        raise ValueError("speed must be positive")
    if math.isinf(speed):
        raw = getattr(transport, "publish_raw", None)
        n = 0
        for nb in bundle.nodes:
            if raw is None:
                for sample in iter_samples(nb):
                    transport.publish(sample)
                    n += 1
                continue
            # bundles hold finite values on the wire grid, so frames can be formatted in bulk
            for s in nb.signals.values():
                topic = encode_topic(s.topic)
                for payload in _payloads(s):
                    raw(topic, payload)
                n += s.times.size
        return n
    starts = [float(s.times[0]) for nb in bundle.nodes for s in nb.signals.values() if s.times.size]
    sim0 = min(starts) if starts else 0.0
    wall0 = time.monotonic()
    counts = [0] * len(bundle.nodes)
    errors: list[BaseException] = []

    def work(k: int, nb: NodeBundle) -> None:
        try:
            counts[k] = _paced_node(nb, transport, speed, wall0, sim0)
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(k, nb), daemon=True) for k, nb in enumerate(bundle.nodes)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    return sum(counts)


def table5_scenario(duration: float = 60.0, noise: float = 0.01, seed: int = 0, power_rate: float = 1000.0) -> SimScenario:
    """One node per workload column, each running its workload for ``duration``."""
    return SimScenario(
        nodes=len(WORKLOADS),
        duration=duration,
        timelines={i: [Phase(w, 0.0, duration)] for i, w in enumerate(WORKLOADS)},
        power_rate=power_rate,
        noise=noise,
        seed=seed,
        signals=("power",),
    )


def boot_scenario(noise: float = 0.01, seed: int = 0, power_rate: float = 1000.0) -> SimScenario:
    b = BootSchedule()
    return SimScenario(
        nodes=1,
        host_prefix="boot",
        duration=b.end,
        timelines={0: [Phase("Boot", 0.0, b.end)]},
        power_rate=power_rate,
        noise=noise,
        seed=seed,
        signals=("power",),
        boot=b,
    )


def thermal_scenario(span: float = 30.0, hold: float = 60.0, nodes: int = 8, hot_node: int = 6, seed: int = 0) -> SimScenario:
    """Cluster idling at base temperatures with one node running away."""
    script = ThermalScript(node=hot_node, hold=hold, span=span)
    return SimScenario(
        nodes=nodes,
        duration=hold + span + 120.0,
        thermal=[script],
        seed=seed,
        signals=("thermal",),
    )

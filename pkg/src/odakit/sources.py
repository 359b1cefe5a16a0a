"""Metric source backends for the sampling agent.

Two backends share one duck-typed surface: ``read_text`` (hwmon-style
files), ``read_power`` (rail power in mW), ``read_counter`` (raw per-core
counters) and ``read_stats`` (operating-system statistics). Every read
takes the sampling timestamp so synthetic sources stay reproducible.
"""

from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .model import STATS_METRICS, PowerTrace, Rail, parse_rail
from .profiles import RAIL_MEANS

logger = logging.getLogger(__name__)

_WHOLE_DISK = re.compile(r"(?:[shv]d[a-z]+|xvd[a-z]+|nvme\d+n\d+|mmcblk\d+)\Z")


class SourceError(RuntimeError):
    """A metric could not be read from its backend."""


@dataclass(frozen=True)
class ShuntChannel:
    """Rail power from a shunt-voltage file.

    The file holds the voltage drop across the shunt in microvolts; power is
    ``rail_volts * drop / shunt_ohms``.
    """

    path: str
    shunt_ohms: float
    rail_volts: float

    def __post_init__(self) -> None:
        if self.shunt_ohms <= 0 or self.rail_volts <= 0:
            raise ValueError("shunt resistance and rail voltage must be positive")

    def milliwatts(self, text: str) -> float:
        drop_v = int(text.strip()) * 1e-6
        return self.rail_volts * drop_v / self.shunt_ohms * 1e3


class FilesystemSource:
    """Reads sysfs/procfs style files below ``root``."""

    def __init__(
        self,
        root: str | os.PathLike = "/",
        power_channels: Mapping[str, str | ShuntChannel] | None = None,
        counter_paths: Mapping[str, str] | None = None,
        proc: str | os.PathLike | None = None,
    ) -> None:
        self.root = Path(root)
        self.power_channels = {parse_rail(k): v for k, v in (power_channels or {}).items()}
        # counter name -> path template with a ``{core}`` field
        self.counter_paths = dict(counter_paths or {})
        self.proc = Path(proc) if proc is not None else self.root / "proc"
        self._stats = ProcStats(self)

    def _path(self, path: str) -> Path:
        return self.root / path.lstrip("/")

    def read_text(self, path: str, now: float | None = None) -> str:
        try:
            return self._path(path).read_text()
        except OSError as exc:
            raise SourceError(f"cannot read {path}: {exc.strerror}") from exc

    def read_power(self, rail: str | Rail, now: float | None = None) -> float:
        try:
            rail = parse_rail(rail)
        except ValueError as exc:
            raise SourceError(str(exc)) from None
        chan = self.power_channels.get(rail)
        if chan is None:
            raise SourceError(f"no power channel configured for rail {rail.value}")
        if isinstance(chan, ShuntChannel):
            return chan.milliwatts(self.read_text(chan.path))
        text = self.read_text(chan)
        try:
            return float(text.strip())
        except ValueError:
            raise SourceError(f"bad power reading {text!r} for {rail.value}") from None

    def read_counter(self, core: int, name: str, now: float | None = None) -> int:
        template = self.counter_paths.get(name)
        if template is None:
            raise SourceError(f"counter {name!r} not exposed by this backend")
        text = self.read_text(template.format(core=core))
        try:
            return int(text.strip(), 0)
        except ValueError:
            raise SourceError(f"bad counter reading {text!r} for {name}") from None

    def read_stats(self, metrics, now: float) -> dict[str, float]:
        return self._stats.read(metrics, now)


class ProcStats:
    """dstat-like statistics from procfs.

    Cumulative kernel counters are turned into per-second rates against the
    previous read; the first read measures against boot time.
    """

    def __init__(self, fs: FilesystemSource) -> None:
        self.fs = fs
        self._prev: dict[str, float] = {}
        self._prev_t: float | None = None

    def _read(self, name: str) -> str:
        try:
            return (self.fs.proc / name).read_text()
        except OSError as exc:
            raise SourceError(f"cannot read /proc/{name}: {exc.strerror}") from exc

    def _counters(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for line in self._read("stat").splitlines():
            f = line.split()
            if not f:
                continue
            if f[0] == "cpu":
                vals = [float(x) for x in f[1:]]
                vals += [0.0] * (8 - len(vals))
                user, nice, system, idle, iowait, irq, softirq, steal = vals[:8]
                out["cpu.usr"] = user + nice
                out["cpu.sys"] = system + irq + softirq
                out["cpu.idl"] = idle
                out["cpu.wai"] = iowait
                out["cpu.stl"] = steal
            elif f[0] == "intr":
                out["system.int"] = float(f[1])
            elif f[0] == "ctxt":
                out["system.csw"] = float(f[1])
            elif f[0] == "processes":
                out["procs.new"] = float(f[1])
        try:
            for line in self._read("vmstat").splitlines():
                key, _, val = line.partition(" ")
                if key == "pswpin":
                    out["paging.in"] = float(val)
                elif key == "pswpout":
                    out["paging.out"] = float(val)
        except SourceError:
            pass
        try:
            rx = tx = 0.0
            for line in self._read("net/dev").splitlines()[2:]:
                iface, _, rest = line.partition(":")
                if iface.strip() == "lo":
                    continue
                f = rest.split()
                rx += float(f[0])
                tx += float(f[8])
            out["net_total.recv"] = rx
            out["net_total.send"] = tx
        except SourceError:
            pass
        try:
            rd = wr = rds = wrs = 0.0
            for line in self._read("diskstats").splitlines():
                f = line.split()
                if len(f) < 10 or not _WHOLE_DISK.match(f[2]):
                    continue
                rd += float(f[3])
                rds += float(f[5])
                wr += float(f[7])
                wrs += float(f[9])
            out["io_total.read"] = rd
            out["io_total.writ"] = wr
            out["dsk_total.read"] = rds * 512.0
            out["dsk_total.writ"] = wrs * 512.0
        except SourceError:
            pass
        return out

    def _gauges(self) -> dict[str, float]:
        out: dict[str, float] = {}
        load = self._read("loadavg").split()
        out["load_avg.1m"], out["load_avg.5m"], out["load_avg.15m"] = map(float, load[:3])
        for line in self._read("stat").splitlines():
            f = line.split()
            if f and f[0] == "procs_running":
                out["procs.run"] = float(f[1])
            elif f and f[0] == "procs_blocked":
                out["procs.blk"] = float(f[1])
        mem = {}
        for line in self._read("meminfo").splitlines():
            key, _, rest = line.partition(":")
            mem[key] = float(rest.split()[0]) * 1024.0
        buff = mem.get("Buffers", 0.0)
        cach = mem.get("Cached", 0.0) + mem.get("SReclaimable", 0.0)
        free = mem.get("MemFree", 0.0)
        out["memory_usage.used"] = mem.get("MemTotal", 0.0) - free - buff - cach
        out["memory_usage.free"] = free
        out["memory_usage.buff"] = buff
        out["memory_usage.cach"] = cach
        return out

    def read(self, metrics, now: float) -> dict[str, float]:
        wanted = set(metrics)
        out = self._gauges()
        cur = self._counters()
        if self._prev_t is None:
            uptime = float(self._read("uptime").split()[0])
            dt = max(uptime, 1e-9)
            prev = dict.fromkeys(cur, 0.0)
        else:
            dt = max(now - self._prev_t, 1e-9)
            prev = self._prev
        cpu_keys = [k for k in cur if k.startswith("cpu.")]
        busy = sum(cur[k] - prev.get(k, 0.0) for k in cpu_keys)
        for k in cpu_keys:
            share = (cur[k] - prev.get(k, 0.0)) / busy * 100.0 if busy > 0 else 0.0
            out["total_cpu_usage." + k[4:]] = share
        for k, v in cur.items():
            if not k.startswith("cpu."):
                out[k] = (v - prev.get(k, 0.0)) / dt
        self._prev, self._prev_t = cur, now
        res = {}
        for m in wanted:
            if m.startswith("temperature."):
                continue
            if m not in out:
                raise SourceError(f"statistic {m} unavailable")
            res[m] = out[m]
        return res


# nominal counter rates per core (events/s) for synthetic nodes
SYNTHETIC_COUNTER_RATES = {"cycle": 1.2e9, "instret": 0.9e9}

SYNTHETIC_STATS = {m: 0.0 for m in STATS_METRICS}
SYNTHETIC_STATS.update({
    "load_avg.1m": 0.05, "load_avg.5m": 0.04, "load_avg.15m": 0.01,
    "procs.run": 1.0, "memory_usage.used": 4.1e8, "memory_usage.free": 1.5e10,
    "memory_usage.buff": 6.0e7, "memory_usage.cach": 5.0e8,
    "system.int": 310.0, "system.csw": 420.0,
    "total_cpu_usage.usr": 0.4, "total_cpu_usage.sys": 0.3, "total_cpu_usage.idl": 99.3,
    "temperature.mb_temp": 38.0, "temperature.cpu_temp": 45.0, "temperature.nvme_temp": 36.0,
})


class SyntheticSource:
    """Deterministic stand-in for a node.

    Rails draw ``mean * (1 + noise * N(0, 1))`` from the workload profile unless
    a replay trace is installed for the rail, in which case the most recent
    trace sample at or before ``now`` is returned (the trace is looped).
    ``constant`` forces every numeric read to one value.
    """

    def __init__(
        self,
        workload: str = "Idle",
        noise: float = 0.01,
        seed: int = 0,
        files: Mapping[str, str] | None = None,
        counter_rates: Mapping[str, float] | None = None,
        stats: Mapping[str, float] | None = None,
        replay: Mapping[str, PowerTrace] | None = None,
        constant: float | None = None,
        start: float = 0.0,
    ) -> None:
        if workload not in RAIL_MEANS:
            raise ValueError(f"unknown workload profile {workload!r}")
        if noise < 0:
            raise ValueError("noise must be non-negative")
        self.means = RAIL_MEANS[workload]
        self.noise = noise
        self.rng = np.random.default_rng(seed)
        self.files = dict(files) if files is not None else _default_hwmon_files()
        self.counter_rates = dict(SYNTHETIC_COUNTER_RATES if counter_rates is None else counter_rates)
        self.stats = {**SYNTHETIC_STATS, **(stats or {})}
        self.replay = {parse_rail(k): v for k, v in (replay or {}).items()}
        self.constant = constant
        self.start = start

    def read_text(self, path: str, now: float | None = None) -> str:
        if self.constant is not None and path in self.files:
            return f"{int(round(self.constant * 1000))}\n"
        try:
            return self.files[path]
        except KeyError:
            raise SourceError(f"cannot read {path}: no such file") from None

    def read_power(self, rail: str | Rail, now: float | None = None) -> float:
        try:
            rail = parse_rail(rail)
        except ValueError as exc:
            raise SourceError(str(exc)) from None
        if self.constant is not None:
            return float(self.constant)
        trace = self.replay.get(rail)
        if trace is not None and len(trace):
            t0, t1 = trace.times[0], trace.times[-1]
            span = t1 - t0
            t = t0 if now is None else now
            if span > 0:
                t = t0 + math.fmod(t - t0, span) if t > t1 else max(t, t0)
            i = int(np.searchsorted(trace.times, t, side="right")) - 1
            return float(trace.power[max(i, 0)])
        mean = self.means[rail]
        return max(0.0, mean * (1.0 + self.noise * self.rng.standard_normal()))

    def read_counter(self, core: int, name: str, now: float | None = None) -> int:
        if self.constant is not None:
            return int(self.constant)
        rate = self.counter_rates.get(name)
        if rate is None:
            raise SourceError(f"counter {name!r} not exposed by this backend")
        elapsed = max(0.0, (now or self.start) - self.start)
        return int(rate * elapsed)

    def read_stats(self, metrics, now: float) -> dict[str, float]:
        out = {}
        for m in metrics:
            if m.startswith("temperature."):
                continue
            if m not in self.stats:
                raise SourceError(f"statistic {m} unavailable")
            out[m] = float(self.constant) if self.constant is not None else self.stats[m]
        return out


def _default_hwmon_files() -> dict[str, str]:
    from .model import DEFAULT_SENSORS

    deg = {"nvme_temp": 36.0, "mb_temp": 38.0, "cpu_temp": 45.0}
    return {path: f"{int(deg[name] * 1000)}\n" for name, path in DEFAULT_SENSORS.items()}


def read_thermal(sensors: Mapping[str, str], source, now: float | None = None) -> list[tuple[str, float]]:
    """Read each hwmon sensor (integer millidegrees) and return degrees Celsius."""
    out = []
    for name, path in sensors.items():
        try:
            raw = source.read_text(path, now)
            out.append((name, int(raw.strip()) / 1000.0))
        except (SourceError, ValueError) as exc:
            raise SourceError(name) from exc
    return out


def read_rail_power(rail: str | Rail, source, now: float | None = None) -> float:
    return source.read_power(rail, now)

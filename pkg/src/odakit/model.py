"""Telemetry domain types and the topic/payload wire codecs.

Topic layout::

    org/<org>/cluster/<cluster>/node/<host>/plugin/<plugin>/chnl/data[/core/<id>]/<metric>

Payload layout is ``<value>;<timestamp>`` with both fields rendered as
fixed-point decimals with six fractional digits.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from enum import Enum
from typing import Mapping

import numpy as np

PLUGINS = ("pmu_pub", "stats_pub", "power_pub")
PAYLOAD_DIGITS = 6

_CORE_ID = re.compile(r"(?:0|[1-9][0-9]*)\Z")
_DEC = r"[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?"
_DECIMAL = re.compile(_DEC + r"\Z")
_PAYLOAD = re.compile(f"({_DEC});({_DEC})\\Z")


class MalformedTopic(ValueError):
    pass


class MalformedPayload(ValueError):
    pass


class UnknownRail(ValueError):
    pass


class Rail(str, Enum):
    """The nine measurable power lines, in report row order."""

    CORE = "core"
    DDR_SOC = "ddr_soc"
    IO = "io"
    PLL = "pll"
    PCIEVP = "pcievp"
    PCIEVPH = "pcievph"
    DDR_MEM = "ddr_mem"
    DDR_PLL = "ddr_pll"
    DDR_VPP = "ddr_vpp"

    def __str__(self) -> str:
        return self.value


RAILS: tuple[Rail, ...] = tuple(Rail)


class Subsystem(str, Enum):
    CORE = "CORE"
    DDR = "DDR"
    PCI = "PCI"
    IO = "IO"
    PLL = "PLL"

    def __str__(self) -> str:
        return self.value


SUBSYSTEM_MAP: Mapping[Rail, Subsystem] = {
    Rail.CORE: Subsystem.CORE,
    Rail.DDR_SOC: Subsystem.DDR,
    Rail.DDR_MEM: Subsystem.DDR,
    Rail.DDR_PLL: Subsystem.DDR,
    Rail.DDR_VPP: Subsystem.DDR,
    Rail.PCIEVP: Subsystem.PCI,
    Rail.PCIEVPH: Subsystem.PCI,
    Rail.IO: Subsystem.IO,
    Rail.PLL: Subsystem.PLL,
}


def parse_rail(name: str | Rail) -> Rail:
    try:
        return Rail(name)
    except ValueError:
        raise UnknownRail(f"unknown power rail {name!r}") from None


def subsystem_of(rail: str | Rail) -> Subsystem:
    return SUBSYSTEM_MAP[parse_rail(rail)]


def power_metric(rail: str | Rail) -> str:
    """Metric name carried by ``power_pub`` for ``rail``."""
    return f"power.{parse_rail(rail).value}"


def rail_of_metric(metric: str) -> Rail:
    if not metric.startswith("power."):
        raise UnknownRail(f"not a power metric: {metric!r}")
    return parse_rail(metric[len("power.") :])


_FORBIDDEN = frozenset("/+#\x00")  # separators, MQTT wildcards, NUL


def _check_segment(what: str, value: str) -> None:
    if not isinstance(value, str) or not value or not _FORBIDDEN.isdisjoint(value):
        raise MalformedTopic(f"{what} must be a non-empty string without '/', '+', '#' or NUL: {value!r}")


@dataclass(frozen=True, slots=True)
class TopicPath:
    org: str
    cluster: str
    node: str
    plugin: str
    metric_name: str
    core_id: int | None = None

    def __post_init__(self) -> None:
        _check_segment("org", self.org)
        _check_segment("cluster", self.cluster)
        _check_segment("node", self.node)
        _check_segment("metric_name", self.metric_name)
        if self.plugin not in PLUGINS:
            raise MalformedTopic(f"unknown plugin {self.plugin!r}")
        if self.plugin == "pmu_pub":
            if (
                self.core_id is None
                or isinstance(self.core_id, bool)
                or not isinstance(self.core_id, int)
                or self.core_id < 0
            ):
                raise MalformedTopic("pmu_pub topics need a non-negative integer core id")
        elif self.core_id is not None:
            raise MalformedTopic(f"{self.plugin} topics carry no core id")

    def encode(self) -> str:
        return encode_topic(self)


def encode_topic(t: TopicPath) -> str:
    head = f"org/{t.org}/cluster/{t.cluster}/node/{t.node}/plugin/{t.plugin}/chnl/data/"
    if t.core_id is not None:
        return f"{head}core/{t.core_id}/{t.metric_name}"
    return head + t.metric_name


@lru_cache(maxsize=65536)
def decode_topic(s: str) -> TopicPath:
    if not isinstance(s, str):
        raise MalformedTopic(f"topic must be a string, got {type(s).__name__}")
    parts = s.split("/")
    if len(parts) not in (11, 13):
        raise MalformedTopic(f"wrong segment count ({len(parts)}) in {s!r}")
    for pos, word in ((0, "org"), (2, "cluster"), (4, "node"), (6, "plugin"), (8, "chnl"), (9, "data")):
        if parts[pos] != word:
            raise MalformedTopic(f"expected {word!r} at segment {pos} of {s!r}")
    core_id = None
    if len(parts) == 13:
        if parts[10] != "core":
            raise MalformedTopic(f"expected 'core' at segment 10 of {s!r}")
        if not _CORE_ID.match(parts[11]):
            raise MalformedTopic(f"bad core id {parts[11]!r}")
        core_id = int(parts[11])
    return TopicPath(
        org=parts[1],
        cluster=parts[3],
        node=parts[5],
        plugin=parts[7],
        metric_name=parts[-1],
        core_id=core_id,
    )


def encode_payload(value: float, timestamp: float) -> str:
    value = float(value)
    timestamp = float(timestamp)
    if not math.isfinite(value) or not math.isfinite(timestamp):
        raise MalformedPayload("value and timestamp must be finite")
    if timestamp <= 0:
        raise MalformedPayload("timestamp must be positive")
    return f"{value:.{PAYLOAD_DIGITS}f};{timestamp:.{PAYLOAD_DIGITS}f}"


def _parse_field(what: str, text: str) -> float:
    if not _DECIMAL.match(text):
        raise MalformedPayload(f"non-numeric {what} {text!r}")
    x = float(text)
    if not math.isfinite(x):
        raise MalformedPayload(f"non-finite {what} {text!r}")
    return x


def decode_payload(s: str) -> tuple[float, float]:
    if not isinstance(s, str):
        raise MalformedPayload(f"payload must be a string, got {type(s).__name__}")
    m = _PAYLOAD.match(s)
    if m is None:
        # slow path only to produce a precise message
        fields = s.split(";")
        if len(fields) != 2:
            raise MalformedPayload(f"expected exactly one ';' in {s!r}")
        _parse_field("value", fields[0])
        _parse_field("timestamp", fields[1])
        raise MalformedPayload(f"malformed payload {s!r}")
    value, timestamp = float(m[1]), float(m[2])
    if not (math.isfinite(value) and math.isfinite(timestamp)):
        raise MalformedPayload(f"non-finite field in {s!r}")
    if timestamp <= 0:
        raise MalformedPayload(f"timestamp must be positive in {s!r}")
    return value, timestamp


@dataclass(frozen=True, slots=True)
class MetricSample:
    topic: TopicPath
    value: float
    timestamp: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise MalformedPayload(f"non-finite value {self.value!r}")
        if not math.isfinite(self.timestamp) or self.timestamp <= 0:
            raise MalformedPayload(f"bad timestamp {self.timestamp!r}")

    def to_wire(self) -> tuple[str, str]:
        return encode_topic(self.topic), encode_payload(self.value, self.timestamp)

    @classmethod
    def from_wire(cls, topic: str, payload: str) -> MetricSample:
        value, timestamp = decode_payload(payload)
        return cls(decode_topic(topic), value, timestamp)


class PowerTrace:
    """Time-ordered instantaneous power readings (mW) for one rail."""

    __slots__ = ("rail", "times", "power")

    def __init__(self, rail: str | Rail, times, power) -> None:
        t = np.array(times, dtype=np.float64)
        p = np.array(power, dtype=np.float64)
        if t.ndim != 1 or t.shape != p.shape:
            raise ValueError("times and power must be 1-d arrays of equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("power readings must be finite and non-negative")
        t.flags.writeable = False
        p.flags.writeable = False
        self.rail = parse_rail(rail)
        self.times = t
        self.power = p

    def __len__(self) -> int:
        return self.times.size

    def __repr__(self) -> str:
        return f"PowerTrace(rail={self.rail.value!r}, n={len(self)})"

    def between(self, start: float, end: float) -> PowerTrace:
        """Samples with ``start <= t < end``."""
        lo, hi = np.searchsorted(self.times, [start, end], side="left")
        return PowerTrace(self.rail, self.times[lo:hi], self.power[lo:hi])


DEFAULT_SENSORS: Mapping[str, str] = {
    "nvme_temp": "/sys/class/hwmon/hwmon0/temp1_input",
    "mb_temp": "/sys/class/hwmon/hwmon1/temp1_input",
    "cpu_temp": "/sys/class/hwmon/hwmon1/temp2_input",
}


def sensor_map(overrides: Mapping[str, str] | None = None) -> dict[str, str]:
    """Sensor name -> hwmon file, starting from the board defaults."""
    sensors = dict(DEFAULT_SENSORS)
    if overrides:
        sensors.update(overrides)
    for name, path in sensors.items():
        if not name or not path:
            raise ValueError(f"empty sensor entry {name!r} -> {path!r}")
    return sensors


STATS_CATALOG: Mapping[str, tuple[str, ...]] = {
    "Load": ("load_avg.1m", "load_avg.5m", "load_avg.15m"),
    "I/O": ("io_total.read", "io_total.writ"),
    "Processes": ("procs.run", "procs.blk", "procs.new"),
    "Memory": (
        "memory_usage.used",
        "memory_usage.free",
        "memory_usage.buff",
        "memory_usage.cach",
        "paging.in",
        "paging.out",
    ),
    "Disk": ("dsk_total.read", "dsk_total.writ"),
    "System": ("system.int", "system.csw"),
    "CPU": (
        "total_cpu_usage.usr",
        "total_cpu_usage.sys",
        "total_cpu_usage.idl",
        "total_cpu_usage.wai",
        "total_cpu_usage.stl",
    ),
    "Network": ("net_total.recv", "net_total.send"),
    "Temperatures": ("temperature.mb_temp", "temperature.cpu_temp", "temperature.nvme_temp"),
}

STATS_METRICS: tuple[str, ...] = tuple(m for names in STATS_CATALOG.values() for m in names)
POWER_METRICS: tuple[str, ...] = tuple(power_metric(r) for r in RAILS)
REQUIRED_COUNTERS = ("cycle", "instret")


_QUANT_LIMIT = 2.0**53 / 10**PAYLOAD_DIGITS


def wire_quantize(x):
    """Round to the payload's fixed-point grid so values survive the wire unchanged."""
    a = np.asarray(x, dtype=np.float64)
    scale = float(10**PAYLOAD_DIGITS)
    small = np.abs(a) < _QUANT_LIMIT
    # beyond the limit the double spacing already exceeds the grid step
    return np.where(small, np.rint(a * scale) / scale, a)

"""Node-resident sampling agent.

One sampling task per :class:`SamplerSpec` reads its backend on a fixed
period and hands samples to a single outbound queue; one publisher drains
that queue into the transport. When the transport is down samples wait in
a bounded per-plugin backlog (oldest dropped first).
"""

from __future__ import annotations

import heapq
import logging
import math
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .model import (
    PLUGINS,
    POWER_METRICS,
    STATS_METRICS,
    MetricSample,
    TopicPath,
    rail_of_metric,
    sensor_map,
)
from .sources import SourceError, read_thermal
from .transport import TransportDown

logger = logging.getLogger(__name__)

DEFAULT_BUFFER_LIMIT = 10_000
DEFAULT_PERIODS = {"pmu_pub": 0.5, "stats_pub": 5.0, "power_pub": 0.001}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerSpec:
    plugin: str
    period: float
    metrics: tuple[str, ...]
    cores: int = 4

    def __post_init__(self) -> None:
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if self.plugin not in PLUGINS:
            raise ConfigError(f"unknown plugin {self.plugin!r}")
        if not self.period > 0:
            raise ConfigError(f"{self.plugin}: period must be positive")
        if not self.metrics:
            raise ConfigError(f"{self.plugin}: metric list is empty")
        if self.plugin == "stats_pub":
            catalog = STATS_METRICS
        elif self.plugin == "power_pub":
            catalog = POWER_METRICS
        else:
            # counters beyond cycle/instret are pass-through names
            catalog = None
            if self.cores < 1:
                raise ConfigError("pmu_pub needs at least one core")
        for m in self.metrics:
            if catalog is not None and m not in catalog:
                raise ConfigError(f"{self.plugin}: unknown metric {m!r}")
            if not m or "/" in m:
                raise ConfigError(f"bad metric name {m!r}")


@dataclass(frozen=True)
class CounterReading:
    core_id: int
    counter: str
    value: int
    timestamp: float
    reset: bool = False


@dataclass
class AgentConfig:
    node: str
    source: object
    transport: object
    samplers: Sequence[SamplerSpec]
    org: str = "org"
    cluster: str = "cluster"
    sensors: Mapping[str, str] = field(default_factory=sensor_map)
    buffer_limit: int = DEFAULT_BUFFER_LIMIT

    def __post_init__(self) -> None:
        if not self.samplers:
            raise ConfigError("agent has no samplers configured")
        if self.buffer_limit < 1:
            raise ConfigError("buffer_limit must be at least 1")
        # fails early on bad identity strings
        TopicPath(self.org, self.cluster, self.node, "stats_pub", "probe")


class Agent:
    def __init__(self, config: AgentConfig) -> None:
        self.config = config
        self.outbox: queue.Queue[MetricSample] = queue.Queue()
        self.backlog: dict[str, deque[MetricSample]] = {
            p: deque(maxlen=config.buffer_limit) for p in PLUGINS
        }
        self.dropped = dict.fromkeys(PLUGINS, 0)
        self._reported_drops = dict.fromkeys(PLUGINS, 0)
        self.published = 0
        self.skipped = 0
        self.last_counters: dict[tuple[int, str], CounterReading] = {}
        self._pending_reset: set[tuple[int, str]] = set()
        self._topics: dict[tuple[str, str, int | None], TopicPath] = {}
        self._publish_lock = threading.Lock()

    def topic(self, plugin: str, metric: str, core: int | None = None) -> TopicPath:
        key = (plugin, metric, core)
        t = self._topics.get(key)
        if t is None:
            c = self.config
            t = self._topics[key] = TopicPath(c.org, c.cluster, c.node, plugin, metric, core)
        return t

    def mark_reset(self, core: int, counter: str) -> None:
        """Flag the next reading of ``counter`` as following a reset."""
        self._pending_reset.add((core, counter))

    def read_counters(self, spec: SamplerSpec, now: float) -> list[CounterReading]:
        src = self.config.source
        out = []
        for core in range(spec.cores):
            for name in spec.metrics:
                try:
                    raw = src.read_counter(core, name, now)
                except SourceError as exc:
                    self.skipped += 1
                    logger.warning("pmu_pub core %d %s skipped: %s", core, name, exc)
                    continue
                reset = (core, name) in self._pending_reset
                self._pending_reset.discard((core, name))
                out.append(CounterReading(core, name, int(raw), now, reset))
        return out

    def collect(self, spec: SamplerSpec, now: float) -> list[MetricSample]:
        """Read every metric of ``spec`` once; unreadable metrics are skipped."""
        src = self.config.source
        out: list[MetricSample] = []
        if spec.plugin == "pmu_pub":
            for r in self.read_counters(spec, now):
                key = (r.core_id, r.counter)
                prev = self.last_counters.get(key)
                if prev is not None and r.value < prev.value and not r.reset:
                    logger.warning(
                        "counter %s on core %d went backwards (%d -> %d)",
                        r.counter, r.core_id, prev.value, r.value,
                    )
                    out.append(MetricSample(
                        self.topic("pmu_pub", f"{r.counter}.dq_decrease", r.core_id),
                        float(prev.value - r.value), now,
                    ))
                self.last_counters[key] = r
                out.append(MetricSample(self.topic("pmu_pub", r.counter, r.core_id), float(r.value), now))
        elif spec.plugin == "power_pub":
            for m in spec.metrics:
                try:
                    mw = src.read_power(rail_of_metric(m), now)
                except SourceError as exc:
                    self.skipped += 1
                    logger.warning("%s skipped: %s", m, exc)
                    continue
                out.append(MetricSample(self.topic("power_pub", m), float(mw), now))
        else:
            plain = [m for m in spec.metrics if not m.startswith("temperature.")]
            values: dict[str, float] = {}
            if plain:
                try:
                    values = src.read_stats(plain, now)
                except SourceError:
                    for m in plain:
                        try:
                            values.update(src.read_stats([m], now))
                        except SourceError as exc:
                            self.skipped += 1
                            logger.warning("%s skipped: %s", m, exc)
            for m in spec.metrics:
                if m.startswith("temperature."):
                    name = m[len("temperature."):]
                    path = self.config.sensors.get(name)
                    if path is None:
                        self.skipped += 1
                        continue
                    try:
                        [(_, deg)] = read_thermal({name: path}, src, now)
                    except SourceError as exc:
                        self.skipped += 1
                        logger.warning("sensor %s skipped: %s", exc, exc.__cause__)
                        continue
                    values[m] = deg
                if m in values:
                    out.append(MetricSample(self.topic("stats_pub", m), float(values[m]), now))
        return out

    def tick(self, spec: SamplerSpec, now: float) -> int:
        samples = self.collect(spec, now)
        for s in samples:
            self.outbox.put(s)
        return len(samples)

    def _send(self, sample: MetricSample) -> None:
        self.config.transport.publish(sample)
        self.published += 1

    def flush(self) -> int:
        """Publish queued samples; backlog first so per-series order holds."""
        sent = 0
        with self._publish_lock:
            try:
                for plugin, dq in self.backlog.items():
                    while dq:
                        self._send(dq[0])
                        dq.popleft()
                        sent += 1
            except TransportDown:
                self._stash_outbox()
                return sent
            while True:
                try:
                    s = self.outbox.get_nowait()
                except queue.Empty:
                    break
                try:
                    self._send(s)
                    sent += 1
                except TransportDown:
                    self._buffer(s)
                    self._stash_outbox()
                    return sent
            try:
                sent += self._report_drops()
            except TransportDown:
                pass
        return sent

    def _buffer(self, s: MetricSample) -> None:
        dq = self.backlog[s.topic.plugin]
        if len(dq) == dq.maxlen:
            self.dropped[s.topic.plugin] += 1
        dq.append(s)

    def _stash_outbox(self) -> None:
        while True:
            try:
                self._buffer(self.outbox.get_nowait())
            except queue.Empty:
                return

    def _report_drops(self) -> int:
        n = 0
        now = time.time()
        for plugin, count in self.dropped.items():
            if count != self._reported_drops[plugin]:
                self._send(MetricSample(self.topic("stats_pub", f"agent.dropped.{plugin}"), float(count), now))
                self._reported_drops[plugin] = count
                n += 1
        return n

    def run_virtual(self, duration: float, start: float = 1.0e9) -> int:
        """Run every sampler on a simulated clock for ``duration`` seconds."""
        specs = list(self.config.samplers)
        heap = [(start, i, 0) for i in range(len(specs))]
        heapq.heapify(heap)
        end = start + duration
        while heap:
            t, i, k = heapq.heappop(heap)
            if t >= end:
                continue
            self.tick(specs[i], t)
            self.flush()
            heapq.heappush(heap, (start + (k + 1) * specs[i].period, i, k + 1))
        return self.published

    def _sampler_loop(self, spec: SamplerSpec, t0: float, deadline: float, stop: threading.Event) -> None:
        # schedule on the monotonic clock; samples carry wall-clock timestamps
        k = 0
        while not stop.is_set():
            due = t0 + k * spec.period
            if due >= deadline:
                break
            delay = due - time.monotonic()
            if delay > 0 and stop.wait(delay):
                break
            behind = int((time.monotonic() - due) / spec.period)
            if behind > 10:
                logger.warning("%s sampler fell %d periods behind, skipping ahead", spec.plugin, behind)
                k += behind
                continue
            try:
                self.tick(spec, time.time())
            except Exception:
                logger.exception("%s sampler tick failed", spec.plugin)
            k += 1

    def run(self, duration: float | None = None, stop: threading.Event | None = None, flush_interval: float = 0.05) -> int:
        """Sample in real time until ``stop`` is set or ``duration`` elapses.

        With a ``duration`` every sampler takes the ticks due in
        ``[0, duration)``, so a period ``p`` yields ``ceil(duration / p)`` samples.
        """
        stop = stop or threading.Event()
        t0 = time.monotonic()
        deadline = math.inf if duration is None else t0 + duration
        threads = [
            threading.Thread(target=self._sampler_loop, args=(spec, t0, deadline, stop), daemon=True,
                             name=f"sampler-{spec.plugin}")
            for spec in self.config.samplers
        ]
        for th in threads:
            th.start()
        try:
            while any(th.is_alive() for th in threads) and not stop.wait(flush_interval):
                self.flush()
        finally:
            stop.set()
            for th in threads:
                th.join()
            self.flush()
        return self.published


def run_agent(config: AgentConfig, duration: float | None = None, stop: threading.Event | None = None) -> int:
    return Agent(config).run(duration=duration, stop=stop)

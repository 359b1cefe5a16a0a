"""Append-only timeseries store keyed by canonical topic string.

Each series keeps its samples in memory for range queries. When the store
has a root directory every series is also written to disk as segment files::

    <root>/<url-quoted key>/<segment index>.log

Each segment starts with a ``# timestamp;value`` header followed by one
``<timestamp>;<value>`` record per line, floats in shortest round-trip form.
"""

from __future__ import annotations

import bisect
import enum
import json
import logging
import math
import os
import shutil
import threading
from pathlib import Path
from urllib.parse import quote, unquote

from .model import MalformedPayload, MalformedTopic, decode_payload, decode_topic

logger = logging.getLogger(__name__)

SEGMENT_HEADER = "# timestamp;value\n"


class UnknownSeries(KeyError):
    pass


class BadRange(ValueError):
    pass


class Append(enum.Enum):
    OK = "ok"
    DUPLICATE = "duplicate"
    OUT_OF_ORDER = "out_of_order"


class _Series:
    __slots__ = ("key", "data", "lock", "seg", "fh", "dir")

    def __init__(self, key: str, directory: Path | None) -> None:
        self.key = key
        self.data: tuple[list[float], list[float]] = ([], [])
        self.lock = threading.Lock()
        self.seg: int | None = None
        self.fh = None
        self.dir = directory


class SeriesStore:
    """Single writer per series, any number of readers.

    ``retention`` (seconds) drops whole segments that end before
    ``latest - retention``; ``None`` keeps everything.
    """

    def __init__(
        self,
        root: str | os.PathLike | None = None,
        retention: float | None = None,
        segment_seconds: float = 3600.0,
    ) -> None:
        if retention is not None and retention <= 0:
            raise ValueError("retention must be positive")
        if segment_seconds <= 0:
            raise ValueError("segment_seconds must be positive")
        self.root = Path(root) if root is not None else None
        self.retention = retention
        self.segment_seconds = float(segment_seconds)
        self._series: dict[str, _Series] = {}
        self._lock = threading.Lock()
        self.counters = {"appended": 0, "duplicates": 0, "out_of_order": 0, "rejects": 0}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._load()

    def _load(self) -> None:
        for d in sorted(p for p in self.root.iterdir() if p.is_dir()):
            key = unquote(d.name)
            s = _Series(key, d)
            ts, vs = s.data
            for seg in sorted(d.glob("*.log"), key=lambda p: int(p.stem)):
                with open(seg) as fh:
                    for line in fh:
                        if line.startswith("#") or not line.strip():
                            continue
                        t, _, v = line.rstrip("\n").partition(";")
                        ts.append(float(t))
                        vs.append(float(v))
                s.seg = int(seg.stem)
            self._series[key] = s

    def _get(self, key: str, create: bool) -> _Series:
        s = self._series.get(key)
        if s is None:
            if not create:
                raise UnknownSeries(key)
            with self._lock:
                s = self._series.get(key)
                if s is None:
                    d = None
                    if self.root is not None:
                        d = self.root / quote(key, safe="")
                        d.mkdir(exist_ok=True)
                    s = _Series(key, d)
                    self._series[key] = s
        return s

    def append(self, key: str, timestamp: float, value: float) -> Append:
        s = self._get(key, create=True)
        with s.lock:
            ts, vs = s.data
            if ts:
                last = ts[-1]
                if timestamp == last:
                    self.counters["duplicates"] += 1
                    return Append.DUPLICATE
                if timestamp < last:
                    self.counters["out_of_order"] += 1
                    return Append.OUT_OF_ORDER
            if s.dir is not None:
                self._write(s, timestamp, value)
            ts.append(timestamp)
            vs.append(value)
            self.counters["appended"] += 1
            if self.retention is not None:
                self._truncate(s, timestamp)
        return Append.OK

    def _write(self, s: _Series, t: float, v: float) -> None:
        seg = math.floor(t / self.segment_seconds)
        if seg != s.seg or s.fh is None:
            if s.fh is not None:
                s.fh.close()
            path = s.dir / f"{seg}.log"
            fresh = not path.exists()
            s.fh = open(path, "a")
            if fresh:
                s.fh.write(SEGMENT_HEADER)
            s.seg = seg
        s.fh.write(f"{t!r};{v!r}\n")

    def _truncate(self, s: _Series, latest: float) -> None:
        cutoff = latest - self.retention
        # first segment boundary at or below the cutoff; everything before it goes
        keep_from = math.floor(cutoff / self.segment_seconds) * self.segment_seconds
        ts, vs = s.data
        if not ts or ts[0] >= keep_from:
            return
        i = bisect.bisect_left(ts, keep_from)
        s.data = (ts[i:], vs[i:])
        if s.dir is not None:
            first_seg = math.floor(keep_from / self.segment_seconds)
            for seg in s.dir.glob("*.log"):
                if int(seg.stem) < first_seg:
                    seg.unlink()

    def ingest_frame(self, topic: str, payload: str) -> Append | None:
        """Decode one wire frame and append it; malformed frames count as rejects."""
        try:
            decode_topic(topic)
            value, timestamp = decode_payload(payload)
        except (MalformedTopic, MalformedPayload) as exc:
            self.counters["rejects"] += 1
            logger.debug("rejected frame %r %r: %s", topic, payload, exc)
            return None
        return self.append(topic, timestamp, value)

    def keys(self) -> list[str]:
        return sorted(self._series)

    def __contains__(self, key: str) -> bool:
        return key in self._series

    def count(self, key: str) -> int:
        return len(self._get(key, create=False).data[1])

    def query_range(self, key: str, start: float | None = None, end: float | None = None) -> list[tuple[float, float]]:
        """Samples with ``start <= t <= end``, ascending."""
        for bound in (start, end):
            if bound is not None and not math.isfinite(bound):
                raise BadRange(f"non-finite range bound {bound}")
        if start is not None and end is not None and start > end:
            raise BadRange(f"start {start} is after end {end}")
        ts, vs = self._get(key, create=False).data
        n = len(vs)
        lo = 0 if start is None else bisect.bisect_left(ts, start, 0, n)
        hi = n if end is None else bisect.bisect_right(ts, end, 0, n)
        return list(zip(ts[lo:hi], vs[lo:hi]))

    def arrays(self, key: str) -> tuple[list[float], list[float]]:
        ts, vs = self._get(key, create=False).data
        n = len(vs)
        return ts[:n], vs[:n]

    def flush(self) -> None:
        for s in list(self._series.values()):
            with s.lock:
                if s.fh is not None:
                    s.fh.flush()

    def close(self) -> None:
        for s in list(self._series.values()):
            with s.lock:
                if s.fh is not None:
                    s.fh.close()
                    s.fh = None

    def drop(self) -> None:
        """Remove every series, including on-disk segments."""
        self.close()
        with self._lock:
            if self.root is not None:
                for s in self._series.values():
                    if s.dir is not None:
                        shutil.rmtree(s.dir, ignore_errors=True)
            self._series.clear()

    def __enter__(self) -> SeriesStore:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def rows_to_json(rows: list[tuple[float, float]]) -> list[dict[str, float]]:
    return [{"t": t, "v": v} for t, v in rows]


def rows_canonical_json(rows: list[tuple[float, float]]) -> str:
    """Same bytes as ``canonical_json(rows_to_json(rows))``, several times faster.

    ``json`` renders finite floats with ``float.__repr__``, so formatting
    the rows directly is equivalent.
    """
    if not all(math.isfinite(t) and math.isfinite(v) for t, v in rows):
        return canonical_json(rows_to_json(rows))  # raises like the generic path
    return "[" + ",".join([f'{{"t":{float(t)!r},"v":{float(v)!r}}}' for t, v in rows]) + "]"


class Ingester:
    """Binds a subscription on a transport to a store."""

    def __init__(self, store: SeriesStore, transport, pattern: str = "#") -> None:
        self.store = store
        self.transport = transport
        self.pattern = pattern
        self._handle = None

    def start(self) -> Ingester:
        self._handle = self.transport.subscribe(self.pattern, self.on_frame)
        return self

    def on_frame(self, topic: str, payload: str) -> None:
        try:
            self.store.ingest_frame(topic, payload)
        except Exception:  # poison frames must never stop ingestion
            self.store.counters["rejects"] += 1
            logger.exception("unexpected error ingesting %r", topic)

    def stop(self) -> None:
        if self._handle is not None and hasattr(self.transport, "unsubscribe"):
            self.transport.unsubscribe(self._handle)
        self._handle = None


def ingest_loop(store: SeriesStore, transport, pattern: str = "#", stop: threading.Event | None = None) -> None:
    """Subscribe and keep ingesting until ``stop`` is set (forever if omitted)."""
    ing = Ingester(store, transport, pattern).start()
    stop = stop or threading.Event()
    try:
        while not stop.wait(1.0):
            store.flush()
    finally:
        ing.stop()
        store.flush()

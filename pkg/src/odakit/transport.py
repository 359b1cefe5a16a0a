"""Publish/subscribe transports carrying the topic/payload wire strings.

All transports expose ``publish(sample)``; those that can deliver inbound
traffic also expose ``subscribe(pattern, callback)`` where ``callback``
receives the raw ``(topic, payload)`` strings. Patterns use MQTT wildcards
(``+`` for one level, trailing ``#`` for any remainder).
"""

from __future__ import annotations

import logging
import sys
import threading
from typing import Callable, Iterable, Protocol

from .model import MetricSample

logger = logging.getLogger(__name__)

FrameCallback = Callable[[str, str], None]


class TransportDown(ConnectionError):
    """The transport cannot accept messages right now."""


class Transport(Protocol):
    def publish(self, sample: MetricSample) -> bool: ...


def topic_matches(pattern: str, topic: str) -> bool:
    if pattern == "#":
        return True
    p = pattern.split("/")
    t = topic.split("/")
    for i, seg in enumerate(p):
        if seg == "#":
            return i == len(p) - 1
        if i >= len(t):
            return False
        if seg != "+" and seg != t[i]:
            return False
    return len(p) == len(t)


class InProcessBus:
    """Broker-free bus with the same publish/subscribe contract as MQTT.

    Delivery is synchronous and in publish order. Messages without a matching
    subscriber are acknowledged and dropped. Setting ``down`` simulates an
    unreachable broker.
    """

    def __init__(self) -> None:
        self._subs: list[tuple[str, FrameCallback]] = []
        self._lock = threading.Lock()
        self.down = False
        self.published = 0

    def subscribe(self, pattern: str, callback: FrameCallback) -> tuple[str, FrameCallback]:
        handle = (pattern, callback)
        with self._lock:
            self._subs = [*self._subs, handle]
        return handle

    def unsubscribe(self, handle: tuple[str, FrameCallback]) -> None:
        with self._lock:
            self._subs = [s for s in self._subs if s is not handle]

    def publish(self, sample: MetricSample) -> bool:
        topic, payload = sample.to_wire()
        return self.publish_raw(topic, payload)

    def publish_many(self, samples: Iterable[MetricSample]) -> int:
        n = 0
        for s in samples:
            self.publish(s)
            n += 1
        return n

    def publish_raw(self, topic: str, payload: str) -> bool:
        """Inject a frame as-is; nothing is validated on this side."""
        if self.down:
            raise TransportDown("in-process bus is down")
        self.published += 1
        for pattern, cb in self._subs:
            if topic_matches(pattern, topic):
                cb(topic, payload)
        return True


class StdoutTransport:
    """Writes ``<topic> <payload>`` lines; handy for inspecting an agent."""

    def __init__(self, stream=None) -> None:
        self.stream = stream or sys.stdout

    def publish(self, sample: MetricSample) -> bool:
        topic, payload = sample.to_wire()
        self.stream.write(f"{topic} {payload}\n")
        return True


class HttpTransport:
    """Posts frames to the ingest service's ``/frames`` endpoint."""

    def __init__(self, url: str, timeout: float = 5.0) -> None:
        import httpx

        self._httpx = httpx
        self.url = url.rstrip("/") + "/frames"
        self.client = httpx.Client(timeout=timeout)

    def publish(self, sample: MetricSample) -> bool:
        return self.publish_many([sample]) == 1

    def publish_many(self, samples: Iterable[MetricSample]) -> int:
        frames = [dict(zip(("topic", "payload"), s.to_wire())) for s in samples]
        try:
            r = self.client.post(self.url, json=frames)
            r.raise_for_status()
        except self._httpx.HTTPError as exc:
            raise TransportDown(str(exc)) from exc
        return len(frames)

    def close(self) -> None:
        self.client.close()


class MqttTransport:
    """Thin wrapper over a paho-mqtt client (install the ``mqtt`` extra)."""

    def __init__(self, host: str = "localhost", port: int = 1883, client_id: str = "", qos: int = 1) -> None:
        try:
            import paho.mqtt.client as mqtt
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise RuntimeError("MQTT transport needs the paho-mqtt package") from exc
        self.qos = qos
        self._subs: list[tuple[str, FrameCallback]] = []
        self.client = mqtt.Client(mqtt.CallbackAPIVersion.VERSION2, client_id=client_id)
        self.client.on_message = self._on_message
        self.client.on_connect = self._on_connect
        self.client.connect_async(host, port)
        self.client.loop_start()

    def _on_connect(self, client, userdata, flags, reason_code, properties=None) -> None:
        for pattern, _ in self._subs:
            client.subscribe(pattern, qos=self.qos)

    def _on_message(self, client, userdata, msg) -> None:
        try:
            payload = msg.payload.decode("ascii")
        except UnicodeDecodeError:
            payload = "�"
        for pattern, cb in self._subs:
            if topic_matches(pattern, msg.topic):
                cb(msg.topic, payload)

    def subscribe(self, pattern: str, callback: FrameCallback) -> None:
        self._subs.append((pattern, callback))
        if self.client.is_connected():
            self.client.subscribe(pattern, qos=self.qos)

    def publish(self, sample: MetricSample) -> bool:
        if not self.client.is_connected():
            raise TransportDown("MQTT client not connected")
        topic, payload = sample.to_wire()
        info = self.client.publish(topic, payload, qos=self.qos)
        if info.rc != 0:
            raise TransportDown(f"MQTT publish failed with rc={info.rc}")
        return True

    def close(self) -> None:
        self.client.loop_stop()
        self.client.disconnect()

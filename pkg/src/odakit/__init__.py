"""Node telemetry collection, transport, storage and power/performance analysis."""

from .model import (
    MetricSample,
    PowerTrace,
    Rail,
    Subsystem,
    TopicPath,
    decode_payload,
    decode_topic,
    encode_payload,
    encode_topic,
    subsystem_of,
)

__version__ = "0.1.0"

__all__ = [
    "MetricSample",
    "PowerTrace",
    "Rail",
    "Subsystem",
    "TopicPath",
    "decode_payload",
    "decode_topic",
    "encode_payload",
    "encode_topic",
    "subsystem_of",
]

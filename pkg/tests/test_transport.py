import io
import threading

import pytest

from odakit.model import MetricSample, TopicPath
from odakit.store import Ingester, ingest_loop
from odakit.transport import InProcessBus, StdoutTransport, TransportDown, topic_matches

TOPIC = TopicPath("uni", "mc", "mc01", "pmu_pub", "instret", core_id=2)


@pytest.mark.parametrize(
    "pattern,topic,ok",
    [
        ("#", "a/b/c", True),
        ("a/+/c", "a/b/c", True),
        ("a/+/c", "a/b/d", False),
        ("a/#", "a", True),
        ("a/+", "a/b/c", False),
        ("a/b", "a/b", True),
        ("org/+/cluster/+/node/mc01/#", "org/u/cluster/m/node/mc01/plugin/x/chnl/data/y", True),
    ],
)
def test_topic_matches(pattern, topic, ok):
    assert topic_matches(pattern, topic) is ok


def test_loopback_identical_payload(bus):
    got = []
    bus.subscribe("#", lambda t, p: got.append((t, p)))
    s = MetricSample(TOPIC, 12345.0, 1.65e9)
    assert bus.publish(s)
    assert got == [s.to_wire()]
    assert got[0][1] == "12345.000000;1650000000.000000"


def test_no_subscriber_still_acks(bus):
    assert bus.publish(MetricSample(TOPIC, 1.0, 1.0)) is True
    assert bus.published == 1


def test_unsubscribe(bus):
    got = []
    h = bus.subscribe("#", lambda t, p: got.append(t))
    bus.unsubscribe(h)
    bus.publish(MetricSample(TOPIC, 1.0, 1.0))
    assert got == []


def test_down(bus):
    bus.down = True
    with pytest.raises(TransportDown):
        bus.publish(MetricSample(TOPIC, 1.0, 1.0))


def test_corrupt_frame_increments_rejects(wired):
    bus, store = wired
    bus.publish_raw("org/uni/cluster/mc/node/mc01/plugin/pmu_pub/chnl/data/core/2/instret", "1.0;;2")
    bus.publish_raw("org/uni/node/mc01", "1.000000;2.000000")
    bus.publish(MetricSample(TOPIC, 1.0, 2.0))
    assert store.counters["rejects"] == 2
    assert store.counters["appended"] == 1


def test_ingester_survives_unexpected_errors(bus, store):
    ing = Ingester(store, bus).start()
    store.ingest_frame = lambda t, p: (_ for _ in ()).throw(RuntimeError("boom"))
    bus.publish_raw("a", "b")
    assert store.counters["rejects"] == 1
    ing.stop()


def test_stdout_transport():
    buf = io.StringIO()
    StdoutTransport(buf).publish(MetricSample(TOPIC, 2.5, 3.0))
    assert buf.getvalue() == "org/uni/cluster/mc/node/mc01/plugin/pmu_pub/chnl/data/core/2/instret 2.500000;3.000000\n"


def test_ingest_loop_stops(bus, store):
    stop = threading.Event()
    th = threading.Thread(target=ingest_loop, args=(store, bus, "#", stop))
    th.start()
    import time

    for _ in range(100):
        if bus._subs:
            break
        time.sleep(0.01)
    bus.publish(MetricSample(TOPIC, 1.0, 1.0))
    stop.set()
    th.join(5)
    assert not th.is_alive()
    assert store.counters["appended"] == 1
    assert bus._subs == []

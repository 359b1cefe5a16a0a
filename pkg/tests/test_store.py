import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odakit.agent import Agent, AgentConfig, SamplerSpec
from odakit.model import MetricSample, TopicPath, encode_topic
from odakit.sources import SyntheticSource
from odakit.store import Append, BadRange, SeriesStore, UnknownSeries, canonical_json, rows_canonical_json, rows_to_json

KEY = encode_topic(TopicPath("uni", "mc", "mc01", "power_pub", "power.core"))


def naive_range(rows, start, end):
    return [(t, v) for t, v in rows if (start is None or t >= start) and (end is None or t <= end)]


def test_append_rules(store):
    assert store.append(KEY, 1.0, 5.0) is Append.OK
    assert store.append(KEY, 1.0, 6.0) is Append.DUPLICATE
    assert store.append(KEY, 0.5, 6.0) is Append.OUT_OF_ORDER
    assert store.append(KEY, 2.0, 7.0) is Append.OK
    assert store.query_range(KEY) == [(1.0, 5.0), (2.0, 7.0)]
    assert store.counters == {"appended": 2, "duplicates": 1, "out_of_order": 1, "rejects": 0}


def test_range_inclusive_and_point(store):
    for t in range(10):
        store.append(KEY, float(t), float(t * t))
    assert store.query_range(KEY, 3, 5) == [(3.0, 9.0), (4.0, 16.0), (5.0, 25.0)]
    assert store.query_range(KEY, 4, 4) == [(4.0, 16.0)]
    assert store.query_range(KEY, 4.5, 4.5) == []
    assert store.query_range(KEY, 20, 30) == []


def test_errors(store):
    with pytest.raises(UnknownSeries):
        store.query_range("org/x/cluster/y/node/z/plugin/pmu_pub/chnl/data/cycle")
    store.append(KEY, 1.0, 1.0)
    with pytest.raises(BadRange):
        store.query_range(KEY, 5, 4)
    with pytest.raises(BadRange):
        store.query_range(KEY, math.nan, 4)


def test_reject_counting(store):
    assert store.ingest_frame("not/a/topic", "1;2") is None
    assert store.ingest_frame(KEY, "garbage") is None
    assert store.ingest_frame(KEY, "1.000000;2.000000") is Append.OK
    assert store.counters["rejects"] == 2


@settings(max_examples=200, deadline=None)
@given(
    ts=st.lists(st.floats(0, 1e4, allow_nan=False), max_size=60),
    a=st.one_of(st.none(), st.floats(-10, 1.1e4, allow_nan=False)),
    b=st.one_of(st.none(), st.floats(-10, 1.1e4, allow_nan=False)),
)
def test_range_matches_naive(ts, a, b):
    store = SeriesStore()
    rows = []
    for t in ts:
        if store.append(KEY, t, t + 1) is Append.OK:
            rows.append((t, t + 1))
    assert [t for t, _ in rows] == sorted({t for t, _ in rows})
    if a is not None and b is not None and a > b:
        a, b = b, a
    if not rows:
        return
    assert store.query_range(KEY, a, b) == naive_range(rows, a, b)


def test_persistence_roundtrip(tmp_path):
    values = [(1.65e9 + k * 0.001, 3075.123456 + k / 7) for k in range(500)]
    with SeriesStore(tmp_path, segment_seconds=0.1) as s:
        for t, v in values:
            s.append(KEY, t, v)
    segs = list((tmp_path).rglob("*.log"))
    assert len(segs) >= 5
    assert all(p.read_text().startswith("# timestamp;value\n") for p in segs)
    reloaded = SeriesStore(tmp_path, segment_seconds=0.1)
    assert reloaded.query_range(KEY) == values
    # reload then continue appending
    assert reloaded.append(KEY, values[-1][0], 0.0) is Append.DUPLICATE
    assert reloaded.append(KEY, values[-1][0] + 1, 0.0) is Append.OK


def test_retention_drops_whole_segments(tmp_path):
    s = SeriesStore(tmp_path, retention=10, segment_seconds=5)
    for t in range(100):
        s.append(KEY, float(t), 1.0)
    s.close()
    ts = [t for t, _ in s.query_range(KEY)]
    # cutoff 89 rounds down to segment boundary 85
    assert ts[0] == 85.0 and ts[-1] == 99.0
    assert sorted(int(p.stem) for p in tmp_path.rglob("*.log")) == [17, 18, 19]
    assert [t for t, _ in SeriesStore(tmp_path).query_range(KEY)] == ts


def test_drop(tmp_path):
    s = SeriesStore(tmp_path)
    s.append(KEY, 1.0, 1.0)
    s.drop()
    assert s.keys() == [] and not list(tmp_path.rglob("*.log"))


def test_sixteen_per_second_for_a_minute(wired):
    bus, store = wired
    cfg = AgentConfig("mc01", SyntheticSource(seed=3), bus,
                      [SamplerSpec("pmu_pub", 0.5, ("cycle", "instret"), cores=4)], org="uni", cluster="mc")
    Agent(cfg).run_virtual(60.0)
    keys = store.keys()
    assert len(keys) == 8
    for k in keys:
        assert abs(store.count(k) - 120) <= 1


def test_lossless_wire_values(wired):
    bus, store = wired
    topic = TopicPath("uni", "mc", "mc01", "power_pub", "power.ddr_mem")
    sent = [MetricSample(topic, 404.0 + k * 1e-6, 1.6e9 + k * 0.001) for k in range(1000)]
    bus.publish_many(sent)
    rows = store.query_range(encode_topic(topic))
    assert [(float(f"{t:.6f}"), float(f"{v:.6f}")) for t, v in rows] == rows
    assert rows == [(float(f"{s.timestamp:.6f}"), float(f"{s.value:.6f}")) for s in sent]


def test_canonical_json():
    assert canonical_json({"b": 1, "a": [1.5]}) == '{"a":[1.5],"b":1}'
    assert canonical_json(rows_to_json([(1.0, 2.0)])) == '[{"t":1.0,"v":2.0}]'


@settings(max_examples=500)
@given(st.lists(st.tuples(st.floats(allow_nan=False, allow_infinity=False),
                          st.floats(allow_nan=False, allow_infinity=False)), max_size=20))
def test_fast_rows_json_matches_canonical(rows):
    assert rows_canonical_json(rows) == canonical_json(rows_to_json(rows))


def test_fast_rows_json_rejects_nan():
    with pytest.raises(ValueError):
        rows_canonical_json([(1.0, math.nan)])

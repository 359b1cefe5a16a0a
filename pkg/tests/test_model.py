import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odakit.model import (
    DEFAULT_SENSORS,
    RAILS,
    STATS_METRICS,
    SUBSYSTEM_MAP,
    MalformedPayload,
    MalformedTopic,
    MetricSample,
    PowerTrace,
    Rail,
    Subsystem,
    TopicPath,
    UnknownRail,
    decode_payload,
    decode_topic,
    encode_payload,
    encode_topic,
    parse_rail,
    sensor_map,
    subsystem_of,
    wire_quantize,
)

segment = st.text(
    alphabet=st.characters(blacklist_characters="/+#\x00", blacklist_categories=("Cs",)), min_size=1, max_size=12
)


@st.composite
def topics(draw):
    plugin = draw(st.sampled_from(["pmu_pub", "stats_pub", "power_pub"]))
    core = draw(st.integers(0, 10_000)) if plugin == "pmu_pub" else None
    return TopicPath(draw(segment), draw(segment), draw(segment), plugin, draw(segment), core)


def test_encode_pmu_topic():
    t = TopicPath("uni", "mc", "mc01", "pmu_pub", "cycles", 2)
    assert encode_topic(t) == "org/uni/cluster/mc/node/mc01/plugin/pmu_pub/chnl/data/core/2/cycles"


def test_encode_stats_topic():
    t = TopicPath("uni", "mc", "mc01", "stats_pub", "temperature.cpu_temp")
    assert encode_topic(t) == "org/uni/cluster/mc/node/mc01/plugin/stats_pub/chnl/data/temperature.cpu_temp"


def test_decode_pmu_topic():
    t = decode_topic("org/a/cluster/b/node/n/plugin/pmu_pub/chnl/data/core/0/instret")
    assert t == TopicPath("a", "b", "n", "pmu_pub", "instret", 0)


@pytest.mark.parametrize(
    "bad",
    [
        "org/a/cluster/b",
        "org/a/cluster/b/node/n/plugin/pmu_pub/chnl/data/core/x/instret",
        "org/a/cluster/b/node/n/plugin/pmu_pub/chnl/data/core/01/instret",
        "org/a/cluster/b/node/n/plugin/pmu_pub/chnl/data/core/-1/instret",
        "org/a/cluster/b/node/n/plugin/pmu_pub/chnl/data/instret",
        "org/a/cluster/b/node/n/plugin/stats_pub/chnl/data/core/0/x",
        "org/a/cluster/b/node/n/plugin/dstat_pub/chnl/data/load_avg.1m",
        "org/a/clusterX/b/node/n/plugin/stats_pub/chnl/data/m",
        "org/a/cluster/b/node/n/plugin/stats_pub/chnl/meta/m",
        "org//cluster/b/node/n/plugin/stats_pub/chnl/data/m",
        "org/a/cluster/b/node/n/plugin/stats_pub/chnl/data/",
        "",
    ],
)
def test_decode_rejects(bad):
    with pytest.raises(MalformedTopic):
        decode_topic(bad)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(plugin="pmu_pub", core_id=None),
        dict(plugin="stats_pub", core_id=1),
        dict(plugin="pmu_pub", core_id=-1),
        dict(plugin="pmu_pub", core_id=True),
        dict(plugin="bogus", core_id=None),
    ],
)
def test_topic_invariants_checked_at_construction(kwargs):
    with pytest.raises(MalformedTopic):
        TopicPath("o", "c", "n", metric_name="m", **kwargs)


def test_segments_reject_slash():
    with pytest.raises(MalformedTopic):
        TopicPath("o/x", "c", "n", "stats_pub", "m")
    with pytest.raises(MalformedTopic):
        TopicPath("o", "c", "n", "stats_pub", "a/b")


@settings(max_examples=300)
@given(topics())
def test_topic_round_trip(t):
    s = encode_topic(t)
    assert decode_topic(s) == t
    assert encode_topic(decode_topic(s)) == s


def test_payload_format():
    assert encode_payload(3075.0, 1650000000.5) == "3075.000000;1650000000.500000"


def test_payload_decode():
    assert decode_payload("1206;1650000000.0") == (1206.0, 1650000000.0)


@pytest.mark.parametrize(
    "bad", ["abc;1", "1", "1;2;3", "nan;1", "1;inf", "1;0", "1;-5", "1_0;1", " 1;1", "1;", ";1", "0x10;1"]
)
def test_payload_rejects(bad):
    with pytest.raises(MalformedPayload):
        decode_payload(bad)


@pytest.mark.parametrize("v,t", [(math.nan, 1.0), (1.0, math.inf), (1.0, 0.0)])
def test_encode_payload_rejects(v, t):
    with pytest.raises(MalformedPayload):
        encode_payload(v, t)


@settings(max_examples=300)
@given(
    st.floats(-1e12, 1e12, allow_nan=False),
    st.floats(1e-3, 4e9, allow_nan=False),
)
def test_payload_round_trip_within_last_digit(v, t):
    v2, t2 = decode_payload(encode_payload(v, t))
    assert abs(v2 - v) <= 1e-6 * max(1.0, abs(v) * 1e-9)
    assert abs(t2 - t) <= 1e-6


@given(st.floats(-1e15, 1e15, allow_nan=False))
def test_quantized_values_survive_wire(x):
    q = float(wire_quantize(x))
    assert decode_payload(encode_payload(q, 1.0))[0] == q


def test_sample_rejects_non_finite():
    t = TopicPath("o", "c", "n", "stats_pub", "m")
    with pytest.raises(MalformedPayload):
        MetricSample(t, math.nan, 1.0)
    with pytest.raises(MalformedPayload):
        MetricSample(t, 1.0, 0.0)
    s = MetricSample(t, 2.5, 10.0)
    assert MetricSample.from_wire(*s.to_wire()) == s


@pytest.mark.parametrize(
    "rail,sub", [("ddr_vpp", Subsystem.DDR), ("pcievph", Subsystem.PCI), ("core", Subsystem.CORE)]
)
def test_subsystem_of(rail, sub):
    assert subsystem_of(rail) is sub


def test_subsystem_map_partitions_rails():
    assert len(RAILS) == 9
    assert set(SUBSYSTEM_MAP) == set(RAILS)
    groups = {}
    for r, s in SUBSYSTEM_MAP.items():
        groups.setdefault(s, set()).add(r)
    assert set(groups) == set(Subsystem)
    assert sum(len(g) for g in groups.values()) == len(RAILS)
    assert groups[Subsystem.DDR] == {Rail.DDR_SOC, Rail.DDR_MEM, Rail.DDR_PLL, Rail.DDR_VPP}
    assert groups[Subsystem.PCI] == {Rail.PCIEVP, Rail.PCIEVPH}


def test_unknown_rail_rejected():
    with pytest.raises(UnknownRail):
        parse_rail("ddr_vdd")


def test_stats_catalog_names():
    assert len(STATS_METRICS) == len(set(STATS_METRICS)) == 28
    assert "total_cpu_usage.stl" in STATS_METRICS
    assert "temperature.nvme_temp" in STATS_METRICS


def test_sensor_defaults():
    assert DEFAULT_SENSORS["cpu_temp"] == "/sys/class/hwmon/hwmon1/temp2_input"
    assert sensor_map({"cpu_temp": "/x"})["cpu_temp"] == "/x"
    with pytest.raises(ValueError):
        sensor_map({"cpu_temp": ""})


def test_power_trace_invariants():
    PowerTrace("core", [0, 1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        PowerTrace("core", [0, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        PowerTrace("core", [0, 1, 2], [1, -2, 3])
    with pytest.raises(UnknownRail):
        PowerTrace("vcc", [0], [1])
    tr = PowerTrace("pll", [0, 1, 2, 3], [0, 1, 2, 3])
    assert list(tr.between(1, 3).times) == [1, 2]

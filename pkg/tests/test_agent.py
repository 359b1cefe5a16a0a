import logging
from collections import Counter

import pytest

from odakit.agent import Agent, AgentConfig, ConfigError, SamplerSpec, run_agent
from odakit.config import agent_config_from_dict
from odakit.model import POWER_METRICS, STATS_METRICS, decode_payload, decode_topic
from odakit.sources import SourceError, SyntheticSource
from odakit.transport import InProcessBus, TransportDown


class Recorder:
    def __init__(self):
        self.frames = []
        self.down = False

    def publish(self, sample):
        if self.down:
            raise TransportDown("down")
        self.frames.append(sample.to_wire())
        return True


def make_agent(samplers, source=None, transport=None, **kw):
    cfg = AgentConfig(
        node="mc01", org="uni", cluster="mc",
        source=source or SyntheticSource(seed=0),
        transport=transport or Recorder(),
        samplers=samplers, **kw,
    )
    return Agent(cfg)


def test_pmu_rate_16_per_second():
    agent = make_agent([SamplerSpec("pmu_pub", 0.5, ("cycle", "instret"), cores=4)])
    agent.run_virtual(10.0)
    frames = agent.config.transport.frames
    assert len(frames) == 16 * 10
    keys = Counter(t for t, _ in frames)
    assert len(keys) == 8 and set(keys.values()) == {20}


def test_stats_every_period():
    agent = make_agent([SamplerSpec("stats_pub", 5.0, STATS_METRICS)])
    agent.run_virtual(60.0)
    per_metric = Counter(decode_topic(t).metric_name for t, _ in agent.config.transport.frames)
    assert set(per_metric) == set(STATS_METRICS)
    assert set(per_metric.values()) == {12}


def test_constant_source():
    src = SyntheticSource(constant=7)
    agent = make_agent(
        [SamplerSpec("pmu_pub", 0.5, ("cycle",), cores=2),
         SamplerSpec("power_pub", 0.1, POWER_METRICS),
         SamplerSpec("stats_pub", 1.0, STATS_METRICS)],
        source=src,
    )
    agent.run_virtual(3.0)
    frames = agent.config.transport.frames
    assert frames
    assert all(decode_payload(p)[0] == 7.0 for _, p in frames)


def test_topics_decode_to_origin():
    agent = make_agent([SamplerSpec("pmu_pub", 1.0, ("cycle",), cores=3),
                        SamplerSpec("power_pub", 1.0, ("power.core",))])
    agent.run_virtual(1.0)
    seen = {(d.plugin, d.metric_name, d.core_id) for d in (decode_topic(t) for t, _ in agent.config.transport.frames)}
    assert seen == {("pmu_pub", "cycle", 0), ("pmu_pub", "cycle", 1), ("pmu_pub", "cycle", 2),
                    ("power_pub", "power.core", None)}


def test_virtual_jitter_window():
    agent = make_agent([SamplerSpec("power_pub", 0.013, ("power.core",))])
    agent.run_virtual(0.013 * 100)
    assert abs(len(agent.config.transport.frames) - 100) <= 1


def test_real_time_jitter_window():
    period = 0.01
    agent = make_agent([SamplerSpec("power_pub", period, ("power.core",))])
    agent.run(duration=period * 100)
    assert abs(len(agent.config.transport.frames) - 100) <= 1


@pytest.mark.parametrize(
    "spec",
    [
        dict(plugin="gpu_pub", period=1.0, metrics=("x",)),
        dict(plugin="stats_pub", period=1.0, metrics=("load_avg.2m",)),
        dict(plugin="power_pub", period=1.0, metrics=("power.gpu",)),
        dict(plugin="pmu_pub", period=0.0, metrics=("cycle",)),
        dict(plugin="pmu_pub", period=1.0, metrics=()),
    ],
)
def test_config_errors(spec):
    with pytest.raises(ConfigError):
        SamplerSpec(**spec)


def test_extra_counters_pass_through():
    src = SyntheticSource(counter_rates={"cycle": 1.0, "instret": 1.0, "l2_miss": 5.0}, start=10.0)
    agent = make_agent([SamplerSpec("pmu_pub", 1.0, ("l2_miss",), cores=1)], source=src)
    agent.run_virtual(3.0, start=10.0)
    assert [decode_payload(p)[0] for _, p in agent.config.transport.frames] == [0.0, 5.0, 10.0]


def test_source_error_skips_metric_and_continues(caplog):
    src = SyntheticSource(files={})
    agent = make_agent([SamplerSpec("stats_pub", 1.0, ("load_avg.1m", "temperature.cpu_temp"))], source=src)
    with caplog.at_level(logging.WARNING):
        agent.run_virtual(3.0)
    names = [decode_topic(t).metric_name for t, _ in agent.config.transport.frames]
    assert names == ["load_avg.1m"] * 3
    assert agent.skipped == 3


def test_buffering_and_retry():
    rec = Recorder()
    agent = make_agent([SamplerSpec("power_pub", 1.0, ("power.core",))], transport=rec, buffer_limit=5)
    rec.down = True
    for k in range(8):
        agent.tick(agent.config.samplers[0], 100.0 + k)
        agent.flush()
    assert rec.frames == []
    assert len(agent.backlog["power_pub"]) == 5
    assert agent.dropped["power_pub"] == 3
    rec.down = False
    agent.flush()
    times = [decode_payload(p)[1] for t, p in rec.frames if "power.core" in t]
    assert times == [103.0, 104.0, 105.0, 106.0, 107.0]
    drops = [(t, p) for t, p in rec.frames if "agent.dropped.power_pub" in t]
    assert len(drops) == 1 and decode_payload(drops[0][1])[0] == 3.0


class Decreasing(SyntheticSource):
    def __init__(self, seq):
        super().__init__()
        self.seq = iter(seq)

    def read_counter(self, core, name, now=None):
        return next(self.seq)


def test_counter_decrease_flagged(caplog):
    agent = make_agent([SamplerSpec("pmu_pub", 1.0, ("instret",), cores=1)], source=Decreasing([10, 20, 5, 7]))
    spec = agent.config.samplers[0]
    with caplog.at_level(logging.WARNING):
        for k in range(3):
            agent.tick(spec, 1.0 + k)
    agent.flush()
    names = [decode_topic(t).metric_name for t, _ in agent.config.transport.frames]
    assert names == ["instret", "instret", "instret.dq_decrease", "instret"]
    assert "went backwards" in caplog.text
    agent.mark_reset(0, "instret")
    agent.last_counters[(0, "instret")] = agent.last_counters[(0, "instret")].__class__(0, "instret", 100, 3.0)
    agent.tick(spec, 4.0)
    agent.flush()
    assert decode_topic(agent.config.transport.frames[-1][0]).metric_name == "instret"


def test_raw_counter_access():
    agent = make_agent([SamplerSpec("pmu_pub", 1.0, ("cycle",), cores=2)],
                       source=SyntheticSource(counter_rates={"cycle": 3.0}, start=0.0))
    readings = agent.read_counters(agent.config.samplers[0], 2.0)
    assert [(r.core_id, r.value) for r in readings] == [(0, 6), (1, 6)]
    assert all(isinstance(r.value, int) for r in readings)


def test_run_agent_through_bus():
    bus = InProcessBus()
    got = []
    bus.subscribe("org/uni/cluster/mc/node/+/plugin/pmu_pub/#", lambda t, p: got.append(t))
    cfg = AgentConfig("mc01", SyntheticSource(), bus, [SamplerSpec("pmu_pub", 0.05, ("cycle",), cores=1)],
                      org="uni", cluster="mc")
    n = run_agent(cfg, duration=0.3)
    assert n == len(got) >= 5


def test_agent_config_from_dict():
    rec = Recorder()
    cfg = agent_config_from_dict(
        {
            "node": {"hostname": "mc02", "org": "uni", "cluster": "mc"},
            "backend": {"kind": "synthetic", "workload": "HPL", "seed": 1},
            "sampler": [{"plugin": "power_pub", "period": 0.001, "metrics": ["power.core"]}],
            "sensors": {"cpu_temp": "/tmp/x"},
        },
        transport=rec,
    )
    assert cfg.node == "mc02" and cfg.sensors["cpu_temp"] == "/tmp/x"
    Agent(cfg).run_virtual(1.0)
    assert len(rec.frames) == 1000
    with pytest.raises(ConfigError):
        agent_config_from_dict({"node": {}}, transport=rec)
    with pytest.raises(ConfigError):
        agent_config_from_dict({"node": {"hostname": "a/b"}}, transport=rec)
    with pytest.raises(ConfigError):
        agent_config_from_dict({"node": {"hostname": "a"}, "backend": {"kind": "psychic"}}, transport=rec)

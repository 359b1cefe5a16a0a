"""TOML configuration for the agent and for simulation scenarios."""

from __future__ import annotations

import os
import sys
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .agent import DEFAULT_BUFFER_LIMIT, DEFAULT_PERIODS, AgentConfig, ConfigError, SamplerSpec
from .model import POWER_METRICS, REQUIRED_COUNTERS, STATS_METRICS, PowerTrace, parse_rail, sensor_map
from .sim import InvalidScenario, SimScenario
from .sources import FilesystemSource, ShuntChannel, SyntheticSource
from .transport import HttpTransport, MqttTransport, StdoutTransport

CONFIG_ENV = "ODAKIT_CONFIG"


def read_toml(path: str | os.PathLike | None) -> dict[str, Any]:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        raise ConfigError(f"no config file given (pass --config or set {CONFIG_ENV})")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _trace_from_csv(rail: str, path: str) -> PowerTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return PowerTrace(rail, data[:, 0], data[:, 1])


def build_source(cfg: Mapping[str, Any]):
    kind = cfg.get("kind", "synthetic")
    if kind == "synthetic":
        try:
            replay = {r: _trace_from_csv(r, p) for r, p in cfg.get("replay", {}).items()}
            return SyntheticSource(
                workload=cfg.get("workload", "Idle"),
                noise=float(cfg.get("noise", 0.01)),
                seed=int(cfg.get("seed", 0)),
                counter_rates=cfg.get("counter_rates"),
                stats=cfg.get("stats"),
                replay=replay,
                constant=cfg.get("constant"),
                start=float(cfg.get("start", 0.0)),
            )
        except (OSError, ValueError) as exc:
            raise ConfigError(f"synthetic backend: {exc}") from exc
    if kind == "filesystem":
        channels: dict[str, str | ShuntChannel] = {}
        for rail, spec in cfg.get("power_channels", {}).items():
            parse_rail(rail)
            channels[rail] = ShuntChannel(**spec) if isinstance(spec, Mapping) else str(spec)
        return FilesystemSource(
            root=cfg.get("root", "/"),
            power_channels=channels,
            counter_paths=cfg.get("counter_paths"),
            proc=cfg.get("proc"),
        )
    raise ConfigError(f"unknown backend kind {kind!r}")


def build_transport(cfg: Mapping[str, Any]):
    kind = cfg.get("kind", "stdout")
    if kind == "stdout":
        return StdoutTransport()
    if kind == "http":
        return HttpTransport(cfg.get("url", "http://127.0.0.1:8080"))
    if kind == "mqtt":
        return MqttTransport(cfg.get("host", "localhost"), int(cfg.get("port", 1883)), cfg.get("client_id", ""))
    raise ConfigError(f"unknown transport kind {kind!r}")


def _default_samplers(backend_kind: str) -> list[SamplerSpec]:
    specs = [
        SamplerSpec("pmu_pub", DEFAULT_PERIODS["pmu_pub"], REQUIRED_COUNTERS),
        SamplerSpec("stats_pub", DEFAULT_PERIODS["stats_pub"], STATS_METRICS),
    ]
    if backend_kind == "synthetic":
        specs.append(SamplerSpec("power_pub", DEFAULT_PERIODS["power_pub"], POWER_METRICS))
    return specs


def agent_config_from_dict(cfg: Mapping[str, Any], transport=None, source=None) -> AgentConfig:
    node = cfg.get("node", {})
    if "hostname" not in node:
        raise ConfigError("[node] hostname is required")
    backend = cfg.get("backend", {})
    try:
        samplers = [
            SamplerSpec(s["plugin"], float(s.get("period", DEFAULT_PERIODS.get(s["plugin"], 1.0))),
                        tuple(s["metrics"]), int(s.get("cores", 4)))
            for s in cfg.get("sampler", [])
        ] or _default_samplers(backend.get("kind", "synthetic"))
    except KeyError as exc:
        raise ConfigError(f"sampler entry missing {exc}") from None
    try:
        return AgentConfig(
            node=node["hostname"],
            org=node.get("org", "org"),
            cluster=node.get("cluster", "cluster"),
            source=source if source is not None else build_source(backend),
            transport=transport if transport is not None else build_transport(cfg.get("transport", {})),
            samplers=samplers,
            sensors=sensor_map(cfg.get("sensors")),
            buffer_limit=int(cfg.get("agent", {}).get("buffer_limit", DEFAULT_BUFFER_LIMIT)),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_agent_config(path: str | os.PathLike | None = None, **overrides) -> AgentConfig:
    return agent_config_from_dict(read_toml(path), **overrides)


def scenario_from_dict(cfg: Mapping[str, Any]) -> SimScenario:
    """Scenario tables: top-level scalars plus ``[[phase]]`` and ``[[thermal]]`` arrays."""
    d = {k: v for k, v in cfg.items() if k not in ("phase", "thermal")}
    timelines: dict[str, list] = {}
    for p in cfg.get("phase", []):
        p = dict(p)
        node = str(p.pop("node", 0))
        timelines.setdefault(node, []).append(p)
    if timelines:
        d["timelines"] = timelines
    if "thermal" in cfg:
        d["thermal"] = list(cfg["thermal"])
    return SimScenario.from_dict(d)


def load_scenario(path: str | os.PathLike) -> SimScenario:
    try:
        return scenario_from_dict(read_toml(path))
    except InvalidScenario as exc:
        raise ConfigError(f"{Path(path).name}: {exc}") from exc

"""odakit command line.

Exit codes:
  0  success
  1  configuration error (bad flags, unreadable or invalid config/scenario)
  2  missing data (unknown series, node, rail or bundle)
  3  analysis precondition violated (e.g. non-monotone decomposition)
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis as an
from .agent import Agent, ConfigError
from .model import RAILS, MalformedTopic, PowerTrace, Rail, decode_topic, parse_rail, rail_of_metric
from .report import (
    decomposition_rows,
    plot_series,
    render_csv,
    render_decomposition_text,
    render_table5_csv,
    render_table5_text,
    table5_rows,
)
from .sim import Bundle, InvalidScenario, Phase, boot_scenario, generate, replay, table5_scenario, thermal_scenario

logger = logging.getLogger("odakit")

EXIT_CONFIG, EXIT_MISSING, EXIT_PRECONDITION = 1, 2, 3


class MissingData(LookupError):
    pass


@dataclass
class DataSet:
    series: dict[str, tuple[np.ndarray, np.ndarray]]
    timelines: dict[str, list[Phase]] = field(default_factory=dict)

    def nodes(self) -> list[str]:
        return sorted({decode_topic(k).node for k in self.series})

    def power_traces(self, node: str) -> dict[Rail, PowerTrace]:
        out = {}
        for k, (t, v) in self.series.items():
            tp = decode_topic(k)
            if tp.node == node and tp.plugin == "power_pub":
                r = rail_of_metric(tp.metric_name)
                out[r] = PowerTrace(r, t, v)
        if not out:
            raise MissingData(f"no power series for node {node!r}")
        return out

    def temperatures(self) -> dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]:
        out = {}
        for k, tv in self.series.items():
            tp = decode_topic(k)
            if tp.plugin == "stats_pub" and tp.metric_name.startswith("temperature."):
                out[(tp.node, tp.metric_name.split(".", 1)[1])] = tv
        return out


def load_dataset(args) -> DataSet:
    if getattr(args, "bundle", None):
        ds = DataSet({}, {})
        for path in args.bundle:
            if not (Path(path) / "manifest.json").exists():
                raise MissingData(f"no bundle manifest in {path}")
            b = Bundle.load(path)
            clash = set(ds.timelines) & {nb.node for nb in b.nodes}
            if clash:
                raise ConfigError(f"node names repeat across bundles: {', '.join(sorted(clash))}")
            ds.series.update(b.series())
            ds.timelines.update({nb.node: nb.timeline for nb in b.nodes})
        return ds
    if getattr(args, "store", None):
        from .store import SeriesStore

        if not Path(args.store).is_dir():
            raise MissingData(f"no store at {args.store}")
        st = SeriesStore(args.store)
        series = {}
        for k in st.keys():
            t, v = st.arrays(k)
            series[k] = (np.asarray(t), np.asarray(v))
        return DataSet(series)
    raise ConfigError("give --bundle or --store")


def _emit(args, text: str) -> None:
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _pct(x: float) -> str:
    return f"{100 * x:.1f}%"


# --- agent / serve / sim / query -------------------------------------------------


def cmd_agent_run(args) -> int:
    from .config import load_agent_config

    cfg = load_agent_config(args.config)
    agent = Agent(cfg)
    try:
        n = agent.run(duration=args.duration)
    except KeyboardInterrupt:
        n = agent.published
    logger.info("published %d samples", n)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app
    from .store import SeriesStore, ingest_loop

    store = SeriesStore(args.store, retention=args.retention)
    stop = threading.Event()
    if args.mqtt:
        from .transport import MqttTransport

        host, _, port = args.mqtt.partition(":")
        mqtt = MqttTransport(host, int(port or 1883))
        threading.Thread(target=ingest_loop, args=(store, mqtt, args.pattern, stop), daemon=True).start()
    else:
        threading.Thread(target=_flusher, args=(store, stop), daemon=True).start()
    try:
        uvicorn.run(create_app(store), host=args.host, port=args.port, log_level="warning")
    finally:
        stop.set()
        store.close()
    return 0


def _flusher(store, stop: threading.Event) -> None:
    while not stop.wait(1.0):
        store.flush()


PRESETS = {
    "table5": lambda a: table5_scenario(duration=a.duration or 60.0, noise=a.noise, seed=a.seed),
    "boot": lambda a: boot_scenario(noise=a.noise, seed=a.seed),
    "thermal": lambda a: thermal_scenario(seed=a.seed),
}


def cmd_sim_generate(args) -> int:
    if args.scenario:
        from .config import load_scenario

        sc = load_scenario(args.scenario)
    elif args.preset:
        sc = PRESETS[args.preset](args)
    else:
        raise ConfigError("give --scenario or --preset")
    bundle = generate(sc)
    bundle.save(args.out)
    print(f"wrote {len(bundle.nodes)} node bundle(s), {bundle.sample_count()} samples to {args.out}")
    return 0


def cmd_sim_replay(args) -> int:
    if not (Path(args.bundle) / "manifest.json").exists():
        raise MissingData(f"no bundle manifest in {args.bundle}")
    bundle = Bundle.load(args.bundle)
    speed = math.inf if args.speed in (None, 0) else args.speed
    if args.url:
        from .transport import HttpTransport

        transport = _Batched(HttpTransport(args.url))
        n = replay(bundle, transport, speed)
        transport.flush()
    elif args.mqtt:
        from .transport import MqttTransport

        host, _, port = args.mqtt.partition(":")
        transport = MqttTransport(host, int(port or 1883))
        n = replay(bundle, transport, speed)
        transport.close()
    elif args.store:
        from .store import Ingester, SeriesStore
        from .transport import InProcessBus

        bus = InProcessBus()
        store = SeriesStore(args.store)
        Ingester(store, bus).start()
        n = replay(bundle, bus, speed)
        store.close()
        print(json.dumps(store.counters, sort_keys=True))
    else:
        raise ConfigError("give --store, --url or --mqtt")
    print(f"replayed {n} samples")
    return 0


class _Batched:
    """Groups samples into HTTP posts of ``size`` frames."""

    def __init__(self, inner, size: int = 5000) -> None:
        self.inner, self.size, self.buf = inner, size, []
        self.lock = threading.Lock()

    def publish(self, sample) -> bool:
        with self.lock:
            self.buf.append(sample)
            if len(self.buf) >= self.size:
                self.inner.publish_many(self.buf)
                self.buf = []
        return True

    def flush(self) -> None:
        with self.lock:
            if self.buf:
                self.inner.publish_many(self.buf)
                self.buf = []


def cmd_query(args) -> int:
    from .store import SeriesStore, UnknownSeries, rows_to_json

    if not Path(args.store).is_dir():
        raise MissingData(f"no store at {args.store}")
    st = SeriesStore(args.store)
    if not args.key:
        keys = st.keys()
        _emit(args, _json(keys) if args.format == "json" else "".join(k + "\n" for k in keys))
        return 0
    try:
        rows = st.query_range(args.key, args.start, args.end)
    except UnknownSeries:
        raise MissingData(f"unknown series {args.key}") from None
    if args.format == "json":
        _emit(args, _json(rows_to_json(rows)))
    elif args.format == "csv":
        _emit(args, render_csv(["timestamp", "value"], [[repr(t), repr(v)] for t, v in rows]))
    else:
        _emit(args, "".join(f"{t:.6f}  {v:.6f}\n" for t, v in rows))
    return 0


# --- analyses ------------------------------------------------------------------


def _pick_node(ds: DataSet, node: str | None) -> str:
    nodes = ds.nodes()
    if node is None:
        if len(nodes) != 1:
            raise ConfigError(f"several nodes present, pick one with --node: {', '.join(nodes)}")
        return nodes[0]
    if node not in nodes:
        raise MissingData(f"node {node!r} not in data")
    return node


def _phase_window(ds: DataSet, node: str, workload: str):
    for p in ds.timelines.get(node, []):
        if p.workload == workload:
            traces = ds.power_traces(node)
            t0 = float(traces[Rail.CORE].times[0])
            return t0 + p.start, t0 + p.end
    return None, None


def workload_columns(ds: DataSet, labels: dict[str, str] | None = None) -> tuple[list[an.WorkloadPowerTable], an.BootSegmentation | None]:
    cols, boot = [], None
    labels = labels or {}
    for node in ds.nodes():
        try:
            traces = ds.power_traces(node)
        except MissingData:
            continue
        phases = ds.timelines.get(node) or [Phase(labels.get(node, node), 0.0, math.inf)]
        t0 = float(traces[Rail.CORE].times[0]) if Rail.CORE in traces else 0.0
        for p in phases:
            if p.workload == "Boot":
                window = {r: tr.between(t0 + p.start, t0 + p.end) for r, tr in traces.items()}
                boot = an.segment_boot(window[Rail.CORE], window[Rail.PLL], others=window)
                continue
            cols.append(an.workload_table(traces, labels.get(node, p.workload), t0 + p.start, t0 + p.end))
    order = {w: i for i, w in enumerate(("Idle", "HPL", "STREAM.L2", "STREAM.DDR", "QE"))}
    cols.sort(key=lambda c: order.get(c.workload, len(order)))
    return cols, boot


def cmd_power_table(args) -> int:
    ds = load_dataset(args)
    node = _pick_node(ds, args.node)
    start, end = args.start, args.end
    workload = args.workload
    phases = ds.timelines.get(node, [])
    if workload is None and len(phases) == 1:
        workload = phases[0].workload
    if start is None and end is None and workload:
        start, end = _phase_window(ds, node, workload)
    tab = an.workload_table(ds.power_traces(node), workload or node, start, end)
    pct = tab.percent
    if args.format == "json":
        _emit(args, _json(tab.as_dict()))
    else:
        header = ["rail", "mW", "pct"]
        rows = [[r.value, f"{tab.rail_mean[r]:.1f}", f"{pct[r]:.1f}"] for r in RAILS]
        rows.append(["total", f"{tab.total:.1f}", "100.0"])
        if args.format == "csv":
            _emit(args, render_csv(header, rows))
        else:
            lines = [f"workload: {tab.workload}"] + [f"{a:<9}{b:>10}{c:>8}%" for a, b, c in rows]
            lines += [f"subsystem {s.value:<5}{p:>13.1f}%" for s, p in tab.subsystem_percent.items()]
            _emit(args, "\n".join(lines) + "\n")
    return 0


def cmd_boot_decompose(args) -> int:
    ds = load_dataset(args)
    node = _pick_node(ds, args.node)
    traces = ds.power_traces(node)
    if Rail.CORE not in traces or Rail.PLL not in traces:
        raise MissingData("boot decomposition needs core and pll rails")
    seg = an.segment_boot(traces[Rail.CORE], traces[Rail.PLL], os_ready_marker=args.os_ready, others=traces)
    rail = parse_rail(args.rail)
    if rail not in traces:
        raise MissingData(f"no {rail.value} rail")
    d = an.decompose_power(seg, args.idle_power, rail)
    regions = {name: list(seg.region(name)) for name in ("R1", "R2", "R3")}
    if args.format == "json":
        _emit(args, _json({**d.as_dict(), "regions": regions,
                           "region_mean_mw": {k: {r.value: v for r, v in m.items()} for k, m in seg.mean_power.items()}}))
    elif args.format == "csv":
        _emit(args, render_csv(*decomposition_rows(d)))
    else:
        head = "".join(f"{k}: [{a:.3f}, {b:.3f}) s  mean {seg.mean(k, rail):.1f} mW\n" for k, (a, b) in regions.items())
        _emit(args, head + render_decomposition_text(d))
    return 0


def cmd_efficiency(args) -> int:
    spec = an.MachineSpec(
        cores_per_node=args.cores,
        peak_flops_per_core=args.peak_per_core,
        nodes=max(args.nodes, 1),
        peak_mem_bw=args.peak_bw or 7760e6,
    )
    rec = an.BenchmarkRecord(args.name, args.sustained, args.nodes)
    if args.peak_bw:
        kind, eff = "bandwidth", an.bandwidth_efficiency(rec, spec)
    else:
        kind, eff = "flops", an.flops_efficiency(rec, spec)
    if args.format == "json":
        _emit(args, _json({"kind": kind, "efficiency": eff, "percent": 100 * eff}))
    elif args.format == "csv":
        _emit(args, render_csv(["kind", "efficiency", "percent"], [[kind, repr(eff), f"{100 * eff:.1f}"]]))
    else:
        _emit(args, f"{kind} efficiency: {_pct(eff)}\n")
    return 0


def cmd_scaling(args) -> int:
    single = an.BenchmarkRecord("single", args.single, 1)
    multi = an.BenchmarkRecord("multi", args.multi, args.nodes)
    s = an.scaling_summary(single, multi)
    if args.format == "json":
        _emit(args, _json({"speedup": s.speedup, "linear_fraction": s.linear_fraction, "nodes": args.nodes}))
    elif args.format == "csv":
        _emit(args, render_csv(["speedup", "linear_fraction"], [[f"{s.speedup:.2f}", f"{s.linear_fraction:.3f}"]]))
    else:
        _emit(args, f"speedup: {s.speedup:.2f}x on {args.nodes} nodes\nlinear fraction: {_pct(s.linear_fraction)}\n")
    return 0


def cmd_thermal(args) -> int:
    ds = load_dataset(args)
    temps = ds.temperatures()
    if not temps:
        raise MissingData("no temperature series")
    events = an.detect_thermal_events(temps, args.warn, args.critical, args.rate, args.window)
    if args.format == "json":
        _emit(args, _json([e.as_dict() for e in events]))
    else:
        rows = [[e.node, e.sensor, e.kind.value, f"{e.onset:.3f}", f"{e.peak:.1f}"] for e in events]
        header = ["node", "sensor", "kind", "onset", "peak_C"]
        if args.format == "csv":
            _emit(args, render_csv(header, rows))
        else:
            lines = [f"{n:<8}{s:<11}{k:<10}{o:>20}{p:>8}" for n, s, k, o, p in rows]
            _emit(args, "\n".join(lines) + "\n" if lines else "no thermal events\n")
    return 0


def cmd_report_table5(args) -> int:
    ds = load_dataset(args)
    labels = dict(x.split("=", 1) for x in args.label or [])
    cols, boot = workload_columns(ds, labels)
    if not cols and boot is None:
        raise MissingData("no power data to tabulate")
    if args.format == "csv":
        _emit(args, render_table5_csv(cols, boot))
    elif args.format == "json":
        header, rows = table5_rows(cols, boot)
        _emit(args, _json({"header": header, "rows": rows}))
    else:
        _emit(args, render_table5_text(cols, boot))
    return 0


def cmd_plot(args) -> int:
    ds = load_dataset(args)
    series = {}
    for key in args.key:
        if key not in ds.series:
            raise MissingData(f"unknown series {key}")
        t, v = ds.series[key]
        lo = 0 if args.start is None else np.searchsorted(t, args.start)
        hi = len(t) if args.end is None else np.searchsorted(t, args.end, side="right")
        t, v = t[lo:hi], v[lo:hi]
        if args.window and len(t):
            t, v = an.window_mean(t, v, args.window)
        series[decode_topic(key).metric_name if len(args.key) > 1 else key] = (t, v)
    svg, sidecar = plot_series(series, args.out, ylabel=args.ylabel)
    print(f"wrote {svg} and {sidecar}")
    return 0


# --- parser ----------------------------------------------------------------------


def _fmt(p, choices=("text", "csv", "json")):
    p.add_argument("--format", choices=choices, default="text")
    p.add_argument("--out", help="write output to this file instead of stdout")


def _source(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bundle", action="append", help="simulation bundle directory (repeatable)")
    g.add_argument("--store", help="series store directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="odakit", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    agent = sub.add_parser("agent", help="node sampling agent").add_subparsers(dest="action", required=True)
    p = agent.add_parser("run", help="sample and publish until interrupted")
    p.add_argument("--config", help="agent TOML (default: $ODAKIT_CONFIG)")
    p.add_argument("--duration", type=float, help="stop after this many seconds")
    p.set_defaults(func=cmd_agent_run)

    p = sub.add_parser("serve", help="ingest service with HTTP query API")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--retention", type=float, help="retention horizon in seconds")
    p.add_argument("--mqtt", help="also subscribe to an MQTT broker at HOST[:PORT]")
    p.add_argument("--pattern", default="#", help="MQTT subscription pattern")
    p.set_defaults(func=cmd_serve)

    simp = sub.add_parser("sim", help="synthetic cluster traces").add_subparsers(dest="action", required=True)
    p = simp.add_parser("generate", help="generate a trace bundle")
    p.add_argument("--scenario", help="scenario TOML")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--duration", type=float)
    p.set_defaults(func=cmd_sim_generate)
    p = simp.add_parser("replay", help="republish a bundle with original timestamps")
    p.add_argument("--bundle", required=True)
    p.add_argument("--store", help="ingest into this store via the in-process bus")
    p.add_argument("--url", help="post to a running `odakit serve`")
    p.add_argument("--mqtt", help="publish to an MQTT broker at HOST[:PORT]")
    p.add_argument("--speed", type=float, help="pacing multiplier; omit or 0 for batch")
    p.set_defaults(func=cmd_sim_replay)

    p = sub.add_parser("query", help="list series or read a range from a store")
    p.add_argument("--store", required=True)
    p.add_argument("key", nargs="?")
    p.add_argument("--start", type=float)
    p.add_argument("--end", type=float)
    _fmt(p)
    p.set_defaults(func=cmd_query)

    anp = sub.add_parser("analyze", help="analyses").add_subparsers(dest="action", required=True)
    p = anp.add_parser("power-table", help="per-rail mean power for one workload")
    _source(p)
    p.add_argument("--node")
    p.add_argument("--workload")
    p.add_argument("--start", type=float)
    p.add_argument("--end", type=float)
    _fmt(p)
    p.set_defaults(func=cmd_power_table)

    p = anp.add_parser("boot-decompose", help="leakage / dynamic+clock / OS split from a boot trace")
    _source(p)
    p.add_argument("--node")
    p.add_argument("--idle-power", type=float, default=3075.0, help="idle reference in mW")
    p.add_argument("--rail", default="core")
    p.add_argument("--os-ready", type=float, help="timestamp the OS reported ready")
    _fmt(p)
    p.set_defaults(func=cmd_boot_decompose)

    p = anp.add_parser("efficiency", help="sustained over peak throughput")
    p.add_argument("--sustained", type=float, required=True, help="FLOP/s, or bytes/s with --peak-bw")
    p.add_argument("--nodes", type=int, default=1)
    p.add_argument("--cores", type=int, default=4)
    p.add_argument("--peak-per-core", type=float, default=1.0e9)
    p.add_argument("--peak-bw", type=float, help="memory bandwidth peak (same unit as --sustained)")
    p.add_argument("--name", default="benchmark")
    _fmt(p)
    p.set_defaults(func=cmd_efficiency)

    p = anp.add_parser("scaling", help="strong-scaling speedup and linear fraction")
    p.add_argument("--single", type=float, required=True)
    p.add_argument("--multi", type=float, required=True)
    p.add_argument("--nodes", type=int, required=True)
    _fmt(p)
    p.set_defaults(func=cmd_scaling)

    p = anp.add_parser("thermal", help="threshold and runaway events")
    _source(p)
    p.add_argument("--warn", type=float, default=60.0)
    p.add_argument("--critical", type=float, default=95.0)
    p.add_argument("--rate", type=float, default=1.0, help="runaway slope in degC/s")
    p.add_argument("--window", type=float, default=10.0, help="runaway fit window in s")
    _fmt(p)
    p.set_defaults(func=cmd_thermal)

    rep = sub.add_parser("report", help="formatted reports").add_subparsers(dest="action", required=True)
    p = rep.add_parser("table5", help="nine-rail power table across workloads")
    _source(p)
    p.add_argument("--label", action="append", help="NODE=WORKLOAD column label for store input")
    _fmt(p)
    p.set_defaults(func=cmd_report_table5)

    p = sub.add_parser("plot", help="SVG line chart with CSV sidecar")
    _source(p)
    p.add_argument("--key", action="append", required=True, help="series key (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=float, help="average into windows of this many seconds")
    p.add_argument("--start", type=float)
    p.add_argument("--end", type=float)
    p.add_argument("--ylabel", default="")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidScenario) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingData, an.MissingRail, MalformedTopic, KeyError, FileNotFoundError) as exc:
        print(f"missing data: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (an.NonMonotone, an.NoPllActivation, an.TooShort, an.EmptyTrace) as exc:
        print(f"analysis precondition violated: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Text/CSV tables and SVG line charts."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .analysis.power import BootSegmentation, PowerDecomposition, WorkloadPowerTable, _half_up
from .model import RAILS


def table5_rows(columns: Sequence[WorkloadPowerTable], boot: BootSegmentation | None = None) -> tuple[list[str], list[list]]:
    """Header and integer rows: one mW/% pair per workload, then boot R1/R2 mW."""
    header = ["line"]
    for c in columns:
        header += [f"{c.workload}_mW", f"{c.workload}_pct"]
    if boot is not None:
        header += ["Boot_R1_mW", "Boot_R2_mW"]
    rows = []
    for r in RAILS:
        row: list = [r.value]
        for c in columns:
            row += [c.display_mw(r), c.display_percent(r)]
        if boot is not None:
            row += [_half_up(boot.mean("R1", r)), _half_up(boot.mean("R2", r))]
        rows.append(row)
    total: list = ["Total"]
    for c in columns:
        total += [c.display_total(), 100]
    if boot is not None:
        total += [
            _half_up(math.fsum(boot.mean_power["R1"][r] for r in RAILS)),
            _half_up(math.fsum(boot.mean_power["R2"][r] for r in RAILS)),
        ]
    rows.append(total)
    return header, rows


def render_table5_text(columns: Sequence[WorkloadPowerTable], boot: BootSegmentation | None = None) -> str:
    _, rows = table5_rows(columns, boot)
    top = ["Line"] + [c.workload for c in columns] + (["Boot"] if boot is not None else [])
    sub = [""] + ["[mW]   [%]"] * len(columns) + (["R1 [mW]  R2 [mW]"] if boot is not None else [])
    cells = []
    for row in rows:
        out = [row[0]]
        k = 1
        for _ in columns:
            out.append(f"{row[k]:>6} {row[k + 1]:>5}")
            k += 2
        if boot is not None:
            out.append(f"{row[k]:>7}  {row[k + 1]:>7}")
        cells.append(out)
    widths = [max(len(x) for x in col) for col in zip(top, sub, *cells)]

    def line(parts):
        return "  ".join(p.ljust(w) if i == 0 else p.rjust(w) for i, (p, w) in enumerate(zip(parts, widths))).rstrip()

    rule = "-" * len(line(top))
    body = [line(c) for c in cells]
    return "\n".join([line(top), line(sub), rule, *body[:-1], rule, body[-1]]) + "\n"


def render_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_table5_csv(columns: Sequence[WorkloadPowerTable], boot: BootSegmentation | None = None) -> str:
    return render_csv(*table5_rows(columns, boot))


def decomposition_rows(d: PowerDecomposition) -> tuple[list[str], list[list]]:
    header = ["component", "mW", "pct_of_idle"]
    rows = [
        ["leakage", round(d.leakage, 1), round(100 * d.leakage_fraction, 1)],
        ["dynamic_clock", round(d.dynamic_clock, 1), round(100 * d.dynamic_clock_fraction, 1)],
        ["os", round(d.os_power, 1), round(100 * d.os_fraction, 1)],
        ["idle", round(d.reference_idle, 1), 100.0],
    ]
    return header, rows


def render_decomposition_text(d: PowerDecomposition) -> str:
    header, rows = decomposition_rows(d)
    lines = [f"rail: {d.rail.value}", f"{header[0]:<14}{header[1]:>10}{header[2]:>14}"]
    lines += [f"{name:<14}{mw:>10.1f}{pct:>13.1f}%" for name, mw, pct in rows]
    return "\n".join(lines) + "\n"


def plot_series(
    series: Mapping[str, tuple[np.ndarray, np.ndarray]],
    out: str | Path,
    ylabel: str = "",
    title: str | None = None,
) -> tuple[Path, Path]:
    """Write an SVG line chart and a ``label,t,value`` CSV sidecar of the plotted points."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    if out.suffix != ".svg":
        out = out.with_suffix(".svg")
    t0 = min((float(t[0]) for t, _ in series.values() if len(t)), default=0.0)
    fig, ax = plt.subplots(figsize=(9, 4))
    with open(out.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "timestamp", "value"])
        for label, (t, v) in series.items():
            t = np.asarray(t)
            v = np.asarray(v)
            ax.plot(t - t0, v, linewidth=0.8, label=label)
            w.writerows((label, repr(a), repr(b)) for a, b in zip(t.tolist(), v.tolist()))
    ax.set_xlabel("time [s]")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    # fixed metadata keeps the SVG reproducible
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out, out.with_suffix(".csv")

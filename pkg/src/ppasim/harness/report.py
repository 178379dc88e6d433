"""Artifact writers: per-scenario CSVs, summary.json and plot-ready aggregates."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from ..autoscaler import ScalingDecision
from ..simcore import SimulationReport, TierMetrics
from ..telemetry import response_times, rir_series, summarize

SCHEMA_VERSION = 1
TASKS_HEADER = "id,kind,zone,arrival,start,completion"


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def clean_json(obj: Any) -> Any:
    """Recursively turn numpy scalars into Python ones and non-finite floats into None."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dump_json(obj: Any, path: Path) -> None:
    text = json.dumps(clean_json(obj), sort_keys=True, indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def write_tasks(report: SimulationReport, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TASKS_HEADER + "\n")
        for t in report.tasks:
            fh.write(f"{t.id},{t.kind.value},{t.origin_zone},{t.arrival_time!r},"
                     f"{_num(t.start_time)},{_num(t.completion_time)}\n")


def write_metrics(report: SimulationReport, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TierMetrics.CSV_HEADER + "\n")
        for rows in report.metrics.values():
            for m in rows:
                fh.write(m.row() + "\n")


def write_decisions(report: SimulationReport, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(ScalingDecision.CSV_HEADER + "\n")
        for decs in report.decisions.values():
            for d in decs:
                fh.write(d.row() + "\n")


def histogram(values, bins: int = 40) -> list[tuple[float, float, int]]:
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return []
    counts, edges = np.histogram(v, bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]


def write_plot_data(report: SimulationReport, plots: Path) -> list[str]:
    """Aggregates shaped for figures; returns the written file names."""
    plots.mkdir(parents=True, exist_ok=True)
    written = []
    for tier, decs in report.decisions.items():
        key = report.key_metrics.get(tier, "cpu")
        obs = {m.tick: m.sample.get(key) for m in report.metrics.get(tier, [])}
        name = f"prediction_vs_actual_{tier}.csv"
        with open(plots / name, "w", encoding="utf-8") as fh:
            fh.write("tick,predicted,actual_next\n")
            for d in decs:
                fh.write(f"{d.tick},{_num(d.predicted_key_metric)},{_num(obs.get(d.tick + 1))}\n")
        written.append(name)
        name = f"rir_{tier}.csv"
        with open(plots / name, "w", encoding="utf-8") as fh:
            fh.write("tick,time,rir,replicas,ready\n")
            for m in report.metrics.get(tier, []):
                r = "" if math.isnan(m.rir) else repr(m.rir)
                fh.write(f"{m.tick},{m.sample.time!r},{r},{m.replicas},{m.ready}\n")
        written.append(name)
    for kind in ("sort", "eigen"):
        name = f"response_hist_{kind}.csv"
        with open(plots / name, "w", encoding="utf-8") as fh:
            fh.write("lo,hi,count\n")
            for lo, hi, c in histogram(response_times(report, kind)):
                fh.write(f"{lo!r},{hi!r},{c}\n")
        written.append(name)
    for tier in report.metrics:
        name = f"rir_hist_{tier}.csv"
        with open(plots / name, "w", encoding="utf-8") as fh:
            fh.write("lo,hi,count\n")
            for lo, hi, c in histogram(rir_series(report, tier)):
                fh.write(f"{lo!r},{hi!r},{c}\n")
        written.append(name)
    return written


def render_svg(plots: Path) -> list[str]:
    """Static line and histogram renderings of the plot CSVs (needs matplotlib)."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return []
    out = []
    for csv in sorted(plots.glob("*.csv")):
        data = np.genfromtxt(csv, delimiter=",", names=True)
        if data.size == 0 or data.ndim == 0:
            continue
        fig, ax = plt.subplots(figsize=(7, 3))
        cols = data.dtype.names
        if cols[:2] == ("lo", "hi"):
            ax.bar(data["lo"], data["count"], width=data["hi"] - data["lo"], align="edge")
            ax.set_ylabel("count")
        else:
            for c in cols[1:3]:
                ax.plot(data[cols[0]], data[c], label=c, lw=0.8)
            ax.legend()
            ax.set_xlabel(cols[0])
        ax.set_title(csv.stem)
        fig.tight_layout()
        svg = csv.with_suffix(".svg")
        fig.savefig(svg, metadata={"Date": None})
        plt.close(fig)
        out.append(svg.name)
    return out


def scenario_summary(report: SimulationReport, config: dict | None = None) -> dict:
    stats = summarize(report)
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config or {},
        "statistics": stats.as_dict(),
        "updates": report.updates,
        "capacity": {"checks": report.capacity_checks,
                     "violations": len(report.capacity_violations)},
        "events": report.events,
        "control_ticks": report.control_ticks,
        "horizon": report.horizon,
    }


def write_scenario(report: SimulationReport, out: Path, config: dict | None = None,
                   svg: bool = False) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    write_tasks(report, out / "tasks.csv")
    write_metrics(report, out / "metrics.csv")
    write_decisions(report, out / "decisions.csv")
    write_plot_data(report, out / "plots")
    if svg:
        render_svg(out / "plots")
    dump_json(scenario_summary(report, config), out / "summary.json")
    return out

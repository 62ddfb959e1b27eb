"""Aggregate tables and running-return plots from run directories."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .evaluation import evaluate_mot, sample_generator, EVAL_SEED
from .nets import load_checkpoint
from .problems import problem_from_config
from .trainer import read_trace_csv, stability_metric

AGG_COLUMNS = ["group", "runs", "aborted", "value", "marginal_error", "martingale_error", "stability"]


def _load_run(run: Path):
    summary = json.loads((run / "summary.json").read_text())
    trace = read_trace_csv(run / "trace.csv")
    return summary, trace


def run_row(run: Path) -> dict:
    """Value and stability recomputed from the trace; feasibility errors from the summary."""
    summary, trace = _load_run(run)
    cfg = summary["config"]
    phi = trace["phi"]
    n_ret = cfg["train"]["n_return"]
    sign = summary.get("problem", {}).get("value_sign", 1.0)
    aborted = summary.get("status") != "ok"
    ev = summary.get("evaluation") or {}
    row = {"run": str(run), "seed": summary["seed"], "aborted": aborted,
           "value": None, "stability": None,
           "marginal_error": ev.get("marginal_error"), "martingale_error": ev.get("martingale_error")}
    if not aborted and len(phi) >= n_ret:
        row["value"] = float(sign * np.mean(phi[-n_ret:]))
        row["stability"] = stability_metric(phi, min(cfg["stability_window"], len(phi)))
    return row


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def aggregate(rows: list[dict], group: str) -> dict:
    return {
        "group": group, "runs": len(rows), "aborted": sum(r["aborted"] for r in rows),
        "value": _mean(r["value"] for r in rows),
        "marginal_error": _mean(r["marginal_error"] for r in rows),
        "martingale_error": _mean(r["martingale_error"] for r in rows),
        "stability": _mean(r["stability"] for r in rows),
    }


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def plot_running_return(trace: dict, path: Path, title: str = ""):
    """One polyline of running_return against iteration, written as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "minmax-measure", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(trace["iter"], trace["running_return"], lw=1.0)
        ax.set_xlabel("iteration")
        ax.set_ylabel("running return")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def find_runs(paths) -> list[Path]:
    """Run directories (holding summary.json) among ``paths`` and their children."""
    runs = []
    for p in paths:
        p = Path(p)
        if (p / "summary.json").exists():
            runs.append(p)
        elif p.is_dir():
            runs.extend(sorted(d for d in p.iterdir() if (d / "summary.json").exists()))
    return runs


def build_report(paths, out: Path | None = None) -> dict:
    """Write ``aggregate.csv`` plus one SVG per run; returns paths and the missing runs."""
    if not paths:
        raise ValueError("report needs at least one run directory")
    runs = find_runs(paths)
    if not runs:
        raise ValueError(f"no run directories found under {[str(p) for p in paths]}")
    out = Path(out) if out else Path(paths[0]) / "report"
    out.mkdir(parents=True, exist_ok=True)
    groups: dict[str, list] = {}
    missing, plots = [], []
    for run in runs:
        if not (run / "trace.csv").exists():
            missing.append(str(run))
            continue
        row = run_row(run)
        groups.setdefault(run.parent.name, []).append(row)
        _, trace = _load_run(run)
        if len(trace.get("iter", [])):
            name = f"{run.parent.name}_{run.name}.svg"
            plot_running_return(trace, out / name, f"{run.parent.name} {run.name}")
            plots.append(str(out / name))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGG_COLUMNS)
    rows = [aggregate(groups[g], g) for g in sorted(groups)]
    for r in rows:
        w.writerow([_fmt(r[c]) for c in AGG_COLUMNS])
    agg = out / "aggregate.csv"
    agg.write_text(buf.getvalue())
    return {"aggregate": str(agg), "rows": rows, "plots": plots, "missing": missing}


def evaluate_run(run: Path, samples: int = 100_000) -> dict:
    """Recompute the Monte-Carlo value (and MOT feasibility errors) from a checkpoint."""
    summary = json.loads((run / "summary.json").read_text())
    if not (run / "checkpoint.npz").exists():
        raise FileNotFoundError(f"{run}: no checkpoint (aborted run?)")
    gen, _, _ = load_checkpoint(run / "checkpoint.npz")
    problem = problem_from_config(summary["config"]["problem"])
    if problem.name == "mot":
        out = evaluate_mot(gen, problem, samples)
    else:
        x = sample_generator(gen, samples, EVAL_SEED, problem.latent)
        out = {"value": float(problem.value_sign * np.mean(problem.cost(x))), "n": samples}
    out["run"] = str(run)
    return out

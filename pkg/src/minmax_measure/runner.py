"""Run configurations, per-seed execution and run-directory layout.

A run directory holds ``trace.csv``, ``summary.json`` and ``checkpoint.npz``.
``summary.json`` echoes the fully resolved config, so a directory is enough to
regenerate its figures and aggregate rows.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .autodiff import AdamHyper
from .evaluation import EVAL_SEED, evaluate_mot, sample_generator
from .nets import build_networks, save_checkpoint
from .objective import RegularizationConfig
from .problems import problem_from_config
from .trainer import NumericalAbort, TrainConfig, running_return, stability_metric, train, write_trace_csv

log = logging.getLogger(__name__)

OUTPUT_ENV = "MINMAX_MEASURE_OUTPUT"
TRAINING_SOURCES = ("autodiff.py", "nets.py", "problems.py", "objective.py", "trainer.py")

SETTINGS = {
    "base": {"unroll": 0, "mixture": 1},
    "mixtures": {"unroll": 0, "mixture": 5},
    "unrolling": {"unroll": 5, "mixture": 1},
    "combined": {"unroll": 5, "mixture": 5},
}

PRESET_DEFAULTS = {
    "mot": {"hidden_gen": 128, "hidden_disc": 128, "stability_window": 2500,
            "train": {"iterations": 15000, "n_return": 500, "n_inf": 1, "warmup": 0}},
    "dcot": {"hidden_gen": 64, "hidden_disc": 64, "stability_window": 5000,
             "train": {"iterations": 10000, "n_return": 500, "n_inf": 1, "warmup": 0}},
    "w2": {"hidden_gen": 64, "hidden_disc": 64, "stability_window": 5000,
           "train": {"iterations": 15000, "n_return": 500, "n_inf": 10, "warmup": 0}},
    "ot": {"hidden_gen": 64, "hidden_disc": 64, "stability_window": 5000,
           "train": {"iterations": 10000, "n_return": 500, "n_inf": 1, "warmup": 0}},
}

_TRAIN_KEYS = {"batch", "iterations", "n_inf", "n_return", "warmup", "unroll", "mixture",
               "trace_stride", "adam_gen", "adam_disc"}
_TOP_KEYS = {"problem", "setting", "hidden_gen", "hidden_disc", "depth", "train", "regularization",
             "seeds", "stability_window", "eval_samples", "output", "workers"}


class ConfigError(ValueError):
    """Invalid run configuration."""


def source_digest() -> str:
    """Hash of the modules that determine training results."""
    h = hashlib.sha256()
    here = Path(__file__).parent
    for name in TRAINING_SOURCES:
        h.update(name.encode())
        h.update((here / name).read_bytes())
    return h.hexdigest()[:16]


def _regularization(cfg: dict) -> RegularizationConfig:
    cfg = dict(cfg or {"mode": "none"})
    mode = cfg.pop("mode", "none")
    if mode == "none":
        extra = cfg
        reg = RegularizationConfig.none()
    elif mode == "divergence":
        c = cfg.pop("c", [25.0])
        extra = cfg
        reg = RegularizationConfig.divergence(c)
    elif mode == "lipschitz":
        L = cfg.pop("L", 1.0)
        lam = cfg.pop("lambda", 10.0)
        extra = cfg
        reg = RegularizationConfig.lipschitz(L, lam)
    else:
        raise ConfigError(f"unknown regularization mode {mode!r}")
    if extra:
        raise ConfigError(f"unknown regularization keys: {sorted(extra)}")
    return reg


@dataclass
class RunConfig:
    problem: dict
    setting: str | None = None
    hidden_gen: int = 64
    hidden_disc: int = 64
    depth: int = 4
    train: dict = field(default_factory=dict)
    regularization: dict = field(default_factory=lambda: {"mode": "none"})
    seeds: list = field(default_factory=lambda: [0])
    stability_window: int = 5000
    eval_samples: int = 100_000
    output: str | None = None
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        """Validate and resolve preset defaults; unknown keys are rejected."""
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "problem" not in raw:
            raise ConfigError("config needs a 'problem' entry")
        problem = dict(raw["problem"]) if isinstance(raw["problem"], dict) else {"preset": raw["problem"]}
        preset = problem.get("preset")
        base = json.loads(json.dumps(PRESET_DEFAULTS.get(preset, {})))
        train_cfg = base.pop("train", {})
        unknown = set(raw.get("train", {})) - _TRAIN_KEYS
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        train_cfg.update(raw.get("train", {}))
        setting = raw.get("setting")
        if setting is not None:
            if setting not in SETTINGS:
                raise ConfigError(f"unknown setting {setting!r}; choose from {sorted(SETTINGS)}")
            train_cfg.update(SETTINGS[setting])
        merged = {**base, **{k: v for k, v in raw.items() if k != "train"}}
        merged["problem"] = problem
        merged["train"] = train_cfg
        seeds = merged.get("seeds", [0])
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        merged["seeds"] = [int(s) for s in seeds]
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def validate(self):
        try:
            self.build_problem()
            self.train_config(self.seeds[0] if self.seeds else 0)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds: {self.seeds}")
        if min(self.hidden_gen, self.hidden_disc) < 1 or self.depth < 2:
            raise ConfigError("hidden sizes must be >= 1 and depth >= 2")
        if not 1 <= self.stability_window:
            raise ConfigError("stability_window must be >= 1")
        if self.eval_samples < 0 or self.workers < 1:
            raise ConfigError("eval_samples must be >= 0 and workers >= 1")

    def build_problem(self):
        return problem_from_config(self.problem)

    def train_config(self, seed: int) -> TrainConfig:
        t = dict(self.train)
        gen = AdamHyper(**t.pop("adam_gen", {}))
        disc = AdamHyper(**t.pop("adam_disc", {}))
        return TrainConfig(**t, regularization=_regularization(self.regularization),
                           adam_gen=gen, adam_disc=disc, seed=int(seed))

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("workers")
        return out


def resolve_output(path: str | None) -> Path:
    return Path(path or os.environ.get(OUTPUT_ENV) or "runs")


def run_seed(cfg: RunConfig, seed: int, out_dir) -> dict:
    """Train one seed, write its run directory, and return the summary dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = cfg.build_problem()
    tcfg = cfg.train_config(seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    nets = build_networks(problem, rng, gen_hidden=cfg.hidden_gen, disc_hidden=cfg.hidden_disc,
                          depth=cfg.depth, mixture=tcfg.mixture)
    summary = {"config": cfg.to_dict(), "seed": seed, "source_digest": source_digest(),
               "problem": problem.to_config()}
    try:
        result = train(problem, nets, tcfg)
    except NumericalAbort as exc:
        log.warning("seed %d aborted at iteration %d", seed, exc.iteration)
        phi = exc.trace.get("phi", np.zeros(0))
        _write_partial_trace(out_dir / "trace.csv", exc.trace, tcfg.n_return)
        summary.update(status="aborted", abort_iteration=exc.iteration,
                       abort_breakdown=_finite_or_str(exc.breakdown),
                       value=None, stability=None, iterations_completed=int(len(phi)))
        _write_json(out_dir / "summary.json", summary)
        return summary
    write_trace_csv(out_dir / "trace.csv", result)
    save_checkpoint(out_dir / "checkpoint.npz", result.generator, result.discriminators,
                    {"seed": seed, "preset": cfg.problem.get("preset")})
    window = min(cfg.stability_window, tcfg.iterations)
    summary.update(
        status="ok",
        value=problem.value_sign * result.value,
        phi_return=result.value,
        stability=stability_metric(result.phi, window),
        stability_window=window,
        wall_clock=result.wall_clock,
        draws=result.draws,
        evaluation=_evaluate(problem, result.generator, cfg.eval_samples),
    )
    _write_json(out_dir / "summary.json", summary)
    return summary


def _evaluate(problem, gen, n: int) -> dict:
    if n <= 0:
        return {}
    if problem.name == "mot":
        return evaluate_mot(gen, problem, n)
    x = sample_generator(gen, n, EVAL_SEED, problem.latent)
    return {"value": float(problem.value_sign * np.mean(problem.cost(x))), "n": n}


def _finite_or_str(d: dict) -> dict:
    return {k: (v if np.isfinite(v) else str(v)) for k, v in d.items()}


def _write_partial_trace(path, trace: dict, n_return: int):
    cols = list(trace)
    phi = trace.get("phi", np.zeros(0))
    rr = running_return(phi, n_return) if len(phi) else np.zeros(0)
    with open(path, "w") as fh:
        fh.write(",".join(["iter"] + cols + ["running_return"]) + "\n")
        for i in range(len(phi)):
            row = [str(i + 1)] + [repr(float(trace[c][i])) for c in cols] + [repr(float(rr[i]))]
            fh.write(",".join(row) + "\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _run_one(args):
    cfg_dict, seed, out_dir = args
    cfg = RunConfig.from_dict(cfg_dict)
    done = _completed(cfg, seed, out_dir)
    return done if done is not None else run_seed(cfg, seed, out_dir)


def _completed(cfg: RunConfig, seed: int, out_dir):
    """Existing summary for the same config, seed and training sources, else None."""
    path = Path(out_dir) / "summary.json"
    if not path.exists():
        return None
    try:
        old = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None
    same = (old.get("config") == cfg.to_dict() and old.get("seed") == seed
            and old.get("source_digest") == source_digest())
    return old if same else None


def run_all(cfg: RunConfig, out_root) -> list[dict]:
    """All seeds, one directory each (``seed-<k>``); a worker pool if ``cfg.workers > 1``."""
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    _write_json(out_root / "config.json", cfg.to_dict())
    jobs = [(cfg.to_dict(), s, out_root / f"seed-{s}") for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            summaries = list(pool.map(_run_one, jobs))
    else:
        summaries = [_run_one(j) for j in jobs]
    median = median_run(summaries)
    _write_json(out_root / "median_run.json", {"seed": median, "rule": "median stability metric"})
    return summaries


def median_run(summaries: list[dict]):
    """Seed whose stability metric is the (lower) median; aborted runs rank as unstable."""
    keyed = sorted(summaries, key=lambda s: (np.inf if s.get("stability") is None else s["stability"],
                                             s["seed"]))
    if not keyed:
        return None
    return keyed[(len(keyed) - 1) // 2]["seed"]

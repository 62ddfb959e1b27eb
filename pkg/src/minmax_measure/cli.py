"""Command line entry point: ``minmax-measure {train|oracle|evaluate|report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .runner import ConfigError, RunConfig, resolve_output, run_all

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 1, 2, 3

log = logging.getLogger("minmax_measure")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _train_config_from_args(args) -> dict:
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    else:
        if not args.preset:
            raise ConfigError("train needs --config or --preset")
        raw = {"problem": {"preset": args.preset}}
        if args.dim is not None:
            raw["problem"]["dim"] = args.dim
    train = raw.setdefault("train", {})
    for key in ("batch", "iterations", "n_inf", "n_return", "warmup", "unroll", "mixture",
                "trace_stride"):
        val = getattr(args, key)
        if val is not None:
            train[key] = val
    if args.setting:
        raw["setting"] = args.setting
    if args.reg:
        reg = {"mode": {"div": "divergence", "lip": "lipschitz"}.get(args.reg, args.reg)}
        if reg["mode"] == "divergence" and args.c:
            reg["c"] = _floats(args.c)
        if reg["mode"] == "lipschitz":
            if args.L is not None:
                reg["L"] = args.L
            if args.lam is not None:
                reg["lambda"] = args.lam
        raw["regularization"] = reg
    if args.hidden is not None:
        raw["hidden_gen"] = raw["hidden_disc"] = args.hidden
    if args.hidden_gen is not None:
        raw["hidden_gen"] = args.hidden_gen
    if args.hidden_disc is not None:
        raw["hidden_disc"] = args.hidden_disc
    if args.seeds is not None:
        raw["seeds"] = list(range(args.seeds))
    if args.seed_list:
        raw["seeds"] = [int(s) for s in args.seed_list.split(",")]
    for key in ("stability_window", "eval_samples", "workers"):
        val = getattr(args, key)
        if val is not None:
            raw[key] = val
    if args.out:
        raw["output"] = args.out
    return raw


def cmd_train(args) -> int:
    try:
        cfg = RunConfig.from_dict(_train_config_from_args(args))
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = resolve_output(cfg.output)
    summaries = run_all(cfg, out)
    code = EXIT_OK
    for s in summaries:
        if s["status"] == "aborted":
            print(f"seed {s['seed']}: numeric abort at iteration {s['abort_iteration']}", file=sys.stderr)
            code = EXIT_NUMERIC
        else:
            print(f"seed {s['seed']}: value {s['value']:.6f} stability {s['stability']:.6f}")
    print(f"runs written to {out}")
    return code


def cmd_oracle(args) -> int:
    from .oracle import oracle_command
    try:
        result, status = oracle_command(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if status == "optimal" else EXIT_INFEASIBLE


def cmd_evaluate(args) -> int:
    from .report import evaluate_run
    try:
        rows = [evaluate_run(Path(d), args.samples) for d in args.runs]
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(rows, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import build_report
    try:
        rep = build_report([Path(d) for d in args.runs], Path(args.out) if args.out else None)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for m in rep["missing"]:
        print(f"missing trace: {m}", file=sys.stderr)
    print(Path(rep["aggregate"]).read_text(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minmax-measure", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one or more seeds")
    t.add_argument("--config", help="JSON run config")
    t.add_argument("--preset", choices=["mot", "dcot", "w2", "ot"])
    t.add_argument("--dim", type=int, help="dimension for the w2 preset")
    t.add_argument("--setting", choices=["base", "mixtures", "unrolling", "combined"])
    t.add_argument("--reg", choices=["none", "div", "divergence", "lip", "lipschitz"])
    t.add_argument("--c", help="divergence coefficients, comma separated")
    t.add_argument("--L", type=float)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--batch", type=int)
    t.add_argument("--iterations", "-N", type=int)
    t.add_argument("--n-inf", dest="n_inf", type=int)
    t.add_argument("--n-return", dest="n_return", type=int)
    t.add_argument("--warmup", type=int)
    t.add_argument("--unroll", type=int)
    t.add_argument("--mixture", type=int)
    t.add_argument("--trace-stride", dest="trace_stride", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--hidden-gen", dest="hidden_gen", type=int)
    t.add_argument("--hidden-disc", dest="hidden_disc", type=int)
    t.add_argument("--seeds", type=int, help="number of seeds, 0..k-1")
    t.add_argument("--seed-list", help="explicit seeds, comma separated")
    t.add_argument("--workers", type=int)
    t.add_argument("--stability-window", dest="stability_window", type=int)
    t.add_argument("--eval-samples", dest="eval_samples", type=int)
    t.add_argument("--out", help="output directory (default from $MINMAX_MEASURE_OUTPUT)")
    t.set_defaults(func=cmd_train)

    o = sub.add_parser("oracle", help="discrete LP reference values")
    o.add_argument("--preset", required=True, choices=["ot", "mot", "dcot", "w2", "ot-lipschitz"])
    o.add_argument("--grid", type=int, default=40)
    o.add_argument("--grid-sweep", dest="grid_sweep", help="start:stop:step")
    o.add_argument("--L", default="1", help="Lipschitz constants, comma separated")
    o.add_argument("--dim", type=int, default=1)
    o.add_argument("--bins", type=int, default=25)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("evaluate", help="Monte-Carlo value and feasibility of trained runs")
    e.add_argument("runs", nargs="+")
    e.add_argument("--samples", type=int, default=100_000)
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="aggregate CSV and running-return plots")
    r.add_argument("runs", nargs="*")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``ppasim <verb> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..forecast import ModelFileError, pretrain_seed, save_scaler
from ..forecast.base import TooShort
from ..simcore import ConfigError
from ..telemetry import read_metrics_csv, write_metrics_csv
from ..workload import ParseError
from .config import ScenarioConfig, load_config
from .experiments import EXPERIMENTS, pvalues, run_statistics
from .report import clean_json, dump_json, write_scenario
from .scenario import collect_config, run_scenario

EXPECTED_ERRORS = (ConfigError, ModelFileError, ParseError, TooShort, OSError, ValueError)


def _config(args) -> ScenarioConfig:
    if args.config:
        return load_config(args.config, seed=args.seed, horizon=args.horizon)
    cfg = ScenarioConfig()
    overrides = {k: v for k, v in (("seed", args.seed), ("horizon", args.horizon)) if v is not None}
    return cfg.replace(**overrides) if overrides else cfg


def _out_root(args, cfg: ScenarioConfig) -> Path:
    if args.out:
        return Path(args.out)
    return Path(cfg.resolve(cfg.output)) if cfg.output else Path("out")


def cmd_simulate(args) -> dict:
    cfg = _config(args)
    if args.name:
        cfg = cfg.replace(name=args.name)
    out = _out_root(args, cfg) / cfg.name
    res = run_scenario(cfg, workdir=out / "work" if cfg.autoscaler == "ppa" else None)
    write_scenario(res.report, out, cfg.as_dict(), svg=args.svg)
    return {"scenario": cfg.name, "output": str(out)}


def cmd_collect(args) -> dict:
    cfg = _config(args)
    ccfg = collect_config(cfg, args.records)
    res = run_scenario(ccfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for tier, rows in res.report.metrics.items():
        path = out / f"collect-{tier}.csv"
        write_metrics_csv(path, (m.sample for m in rows))
        files[tier] = str(path)
    return {"records": args.records, "files": files}


def cmd_pretrain(args) -> dict:
    samples = read_metrics_csv(args.data)
    data = np.vstack([s.vector() for s in samples]) if samples else np.empty((0, 5))
    model, info = pretrain_seed(data, args.model_type, args.out, seed=args.seed,
                                epochs=args.epochs, lr=args.lr)
    result = {"model": args.out, "type": args.model_type, "records": info.n_records,
              "train": info.n_train, "validation": info.n_validation,
              "validation_mse_before": info.validation_mse_before,
              "validation_mse_after": info.validation_mse_after}
    if args.scaler_out and hasattr(model, "scaler"):
        save_scaler(model.scaler, args.scaler_out)
        result["scaler"] = args.scaler_out
    return result


def cmd_compare(args) -> dict:
    a = load_config(args.config, seed=args.seed, horizon=args.horizon)
    b = load_config(args.other, seed=args.seed, horizon=args.horizon)
    if a.name == b.name:
        a, b = a.replace(name=f"{a.name}-a"), b.replace(name=f"{b.name}-b")
    out = Path(args.out) if args.out else _out_root(args, a)
    ra = run_scenario(a, workdir=out / a.name / "work" if a.autoscaler == "ppa" else None)
    rb = run_scenario(b, workdir=out / b.name / "work" if b.autoscaler == "ppa" else None)
    write_scenario(ra.report, out / a.name, a.as_dict(), svg=args.svg)
    write_scenario(rb.report, out / b.name, b.as_dict(), svg=args.svg)
    sa, sb = run_statistics(ra.report), run_statistics(rb.report)
    deltas = {
        "response_time": {k: sb["response_time"][k]["mean"] - sa["response_time"][k]["mean"]
                          for k in sa["response_time"]},
        "rir": {t: sb["rir"][t]["mean"] - sa["rir"][t]["mean"] for t in sa["rir"]},
    }
    comparison = {"schema_version": 1, "a": a.name, "b": b.name, "stats": {a.name: sa, b.name: sb},
                  "deltas_b_minus_a": deltas, "pvalues": pvalues(ra.report, rb.report)}
    dump_json(comparison, out / "comparison.json")
    return {"output": str(out), "pvalues": comparison["pvalues"]}


def cmd_experiment(args) -> dict:
    fn = EXPERIMENTS[args.name]
    kwargs = {}
    if args.records is not None:
        kwargs["records"] = args.records
    if args.epochs is not None:
        kwargs["epochs"] = args.epochs
    out = Path(args.out) / args.name if args.out else None
    report = fn(args.seed if args.seed is not None else 0, out, **kwargs)
    return {"experiment": args.name, "output": str(out) if out else None,
            "report": report if out is None else None}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppasim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def scenario_flags(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="scenario TOML file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=float, help="simulated seconds")
        sp.add_argument("--out", help="output root directory")

    sp = sub.add_parser("simulate", help="run one scenario")
    scenario_flags(sp)
    sp.add_argument("--name")
    sp.add_argument("--svg", action="store_true", help="also render plots as SVG")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("collect", help="record a pretraining dataset on unconstrained nodes")
    scenario_flags(sp)
    sp.add_argument("--records", type=int, default=1800)
    sp.set_defaults(func=cmd_collect)

    sp = sub.add_parser("pretrain", help="fit a seed model from a metrics history CSV")
    sp.add_argument("--data", required=True)
    sp.add_argument("--model-type", choices=("arma", "lstm"), default="lstm")
    sp.add_argument("--out", required=True, help="model file to write")
    sp.add_argument("--scaler-out", help="also write the LSTM scaler CSV here")
    sp.add_argument("--epochs", type=int, default=150)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("compare", help="run two scenarios and compare them")
    scenario_flags(sp, config_required=True)
    sp.add_argument("--other", required=True, help="second scenario TOML file")
    sp.add_argument("--svg", action="store_true")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("experiment", help="run a named study")
    sp.add_argument("name", choices=sorted(EXPERIMENTS))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--records", type=int)
    sp.add_argument("--epochs", type=int)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "collect" and not args.out:
        parser.error("collect requires --out")
    try:
        result = args.func(args)
    except EXPECTED_ERRORS as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "verb": args.verb}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 2
    print(json.dumps(clean_json(result), sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""The four studies: model choice, update policy, key metric and HPA-vs-PPA evaluation.

Every experiment is a pure function of (seed, settings). When ``out`` is
given, each scenario's artifacts land in ``out/<scenario>/`` and the
experiment report in ``out/report.json``.
"""
from __future__ import annotations

import hashlib
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from ..forecast import (ArmaForecaster, LstmForecaster, OracleForecaster, encode, load_model,
                        pretrain_seed)
from ..forecast.base import transitions
from ..simcore import SimulationReport
from ..telemetry import (channel_index, mean_std, prediction_mse, response_times, rir_series,
                         summarize, welch_pvalue)
from ..workload import drifting_trace, write_trace
from .config import ScenarioConfig
from .report import dump_json, write_scenario
from .scenario import TIERS, collect, run_scenario

PRETRAIN_RECORDS = 1800
SHORT_HORIZON = 200 * 60.0          # the 200-minute optimisation runs
EVALUATION_HORIZON = 48 * 3600.0


@contextmanager
def _dir(out):
    if out is not None:
        p = Path(out)
        p.mkdir(parents=True, exist_ok=True)
        yield p
    else:
        with tempfile.TemporaryDirectory(prefix="ppasim-exp-") as tmp:
            yield Path(tmp)


def _emit(out, name: str, result) -> None:
    if out is not None:
        write_scenario(result.report, Path(out) / name, result.config.as_dict())


def pooled_mse(report: SimulationReport) -> dict[str, float]:
    """Key-metric MSE per tier and pooled over tiers."""
    pairs_by_tier = report.prediction_pairs()
    out = {}
    pooled = []
    for tier, pairs in sorted(pairs_by_tier.items()):
        if pairs:
            p, a = zip(*pairs)
            out[tier] = prediction_mse(p, a)
            pooled.extend(pairs)
        else:
            out[tier] = float("nan")
    if pooled:
        p, a = zip(*pooled)
        out["all"] = prediction_mse(p, a)
    else:
        out["all"] = float("nan")
    return out


def build_seed_models(base: ScenarioConfig, model_types, directory: Path, *,
                      records: int = PRETRAIN_RECORDS, epochs: int = 150) -> dict:
    """Collect an unconstrained run and pretrain one seed model per tier and type.

    Files are written as ``<directory>/<type>-<tier>.ppam``; returns the
    pretraining info keyed by type and tier plus the collected data.
    """
    data = collect(base, records)
    info = {}
    for mt in model_types:
        info[mt] = {}
        for tier, matrix in data.items():
            _, pi = pretrain_seed(matrix, mt, directory / f"{mt}-{tier}.ppam",
                                  seed=base.seed, epochs=epochs)
            info[mt][tier] = {"records": pi.n_records, "train": pi.n_train,
                              "validation": pi.n_validation,
                              "validation_mse_before": pi.validation_mse_before,
                              "validation_mse_after": pi.validation_mse_after}
    return {"info": info, "data": data}


def _link(directory: Path, model_type: str) -> str:
    return str(directory / f"{model_type}-{{tier}}.ppam")


def open_loop_mse(models: dict[str, dict[str, object]], report: SimulationReport,
                  key: str = "cpu") -> dict[str, dict[str, float]]:
    """One-step forecasts over a recorded run's metric series, per model and tier."""
    k = channel_index(key)
    out: dict[str, dict[str, float]] = {}
    for name, per_tier in models.items():
        out[name] = {}
        for tier, model in per_tier.items():
            rows = report.metrics[tier]
            data = np.vstack([m.sample.vector() for m in rows])
            x, y = transitions(data)
            if isinstance(model, ArmaForecaster):
                pred = model.predict_series(data)[1:]
            elif isinstance(model, LstmForecaster):
                pred = model.predict_raw(x)
            else:
                oracle = OracleForecaster.from_samples(m.sample for m in rows)
                pred = np.vstack([oracle.predict(m.sample, key).values for m in rows[:-1]])
            out[name][tier] = prediction_mse(pred[:, k], y[:, k])
    return out


# -- model optimisation -------------------------------------------------------

def experiment_model_opt(seed: int = 0, out=None, *, records: int = PRETRAIN_RECORDS,
                         horizon: float = SHORT_HORIZON, epochs: int = 150) -> dict:
    """ARMA vs LSTM seed models driving the PPA under Random Access."""
    with _dir(out) as wd:
        seeds = wd / "seed-models"
        base = ScenarioConfig(name="model-opt", seed=seed)
        pre = build_seed_models(base, ("arma", "lstm"), seeds, records=records, epochs=epochs)
        run = base.replace(autoscaler="ppa", horizon=horizon, update_interval=None,
                           seed=seed + 1)
        mse, decisions = {}, {}
        for mt in ("arma", "lstm"):
            res = run_scenario(run.replace(name=f"ppa-{mt}", model_type=mt,
                                           model_link=_link(seeds, mt)))
            _emit(out, f"ppa-{mt}", res)
            mse[mt] = pooled_mse(res.report)
            decisions[mt] = summarize(res.report).decisions
        oracle = run_scenario(run.replace(name="ppa-oracle", model_type="oracle"))
        _emit(out, "ppa-oracle", oracle)
        models = {mt: {t.value: load_model(seeds / f"{mt}-{t.value}.ppam") for t in TIERS}
                  for mt in ("arma", "lstm")}
        models["oracle"] = {t.value: None for t in TIERS}
        offline = open_loop_mse(models, oracle.reference)
        lowest = {t.value: min(offline, key=lambda m: offline[m][t.value]) for t in TIERS}
        report = {
            "experiment": "model-opt", "seed": seed, "horizon": horizon,
            "mse": mse,
            "control": {"oracle_closed_loop": pooled_mse(oracle.report),
                        "open_loop": offline, "lowest_open_loop": lowest},
            "best_model": min(mse, key=lambda m: mse[m]["all"]),
            "pretraining": pre["info"], "decisions": decisions,
        }
        if out is not None:
            dump_json(report, wd / "report.json")
    return report


# -- update policy ------------------------------------------------------------

POLICIES = ("no-retrain", "retrain", "fine-tune")


def _file_digest(path: Path) -> str:
    return hashlib.sha256(encode(load_model(path))).hexdigest()


def experiment_update_policy(seed: int = 0, out=None, *, records: int = PRETRAIN_RECORDS,
                             hours: float = 5.0, epochs: int = 150,
                             model_type: str = "lstm") -> dict:
    """The three update policies on a workload whose level drifts over time."""
    with _dir(out) as wd:
        seeds = wd / "seed-models"
        base = ScenarioConfig(name="update-policy", seed=seed)
        pre = build_seed_models(base, (model_type,), seeds, records=records, epochs=epochs)
        trace = wd / "drifting_trace.csv"
        write_trace(trace, drifting_trace(seed=seed + 7, hours=hours))
        mse, applied, unchanged = {}, {}, {}
        for policy in POLICIES:
            cfg = base.replace(name=f"ppa-{policy}", autoscaler="ppa", model_type=model_type,
                               model_link=_link(seeds, model_type), update_policy=policy,
                               source="trace", trace=str(trace), horizon=hours * 3600.0,
                               update_interval=1.0, seed=seed + 1)
            run_dir = wd / f"ppa-{policy}"
            res = run_scenario(cfg, workdir=run_dir / "work")
            _emit(out, f"ppa-{policy}", res)
            mse[policy] = pooled_mse(res.report)
            applied[policy] = [u["applied"] for u in res.report.updates]
            unchanged[policy] = all(
                _file_digest(seeds / f"{model_type}-{t.value}.ppam")
                == _file_digest(run_dir / "work" / "models" / f"{t.value}.ppam") for t in TIERS)
        ordering = sorted(POLICIES, key=lambda p: mse[p]["all"])
        report = {
            "experiment": "update-policy", "seed": seed, "hours": hours,
            "mse": mse, "updates_applied": applied,
            "parameters_unchanged": unchanged,
            "ordering": ordering,
            "fine_tune_le_retrain_le_no_retrain":
                mse["fine-tune"]["all"] <= mse["retrain"]["all"] <= mse["no-retrain"]["all"],
            "pretraining": pre["info"],
        }
        if out is not None:
            dump_json(report, wd / "report.json")
    return report


# -- key metric ---------------------------------------------------------------

def run_statistics(report: SimulationReport) -> dict:
    out = {"response_time": {}, "rir": {}}
    for kind in ("sort", "eigen"):
        m, s = mean_std(response_times(report, kind))
        out["response_time"][kind] = {"mean": m, "std": s}
    for tier in report.metrics:
        m, s = mean_std(rir_series(report, tier))
        rows = report.metrics[tier]
        req = sum(r.cpu_requested for r in rows)
        weighted = (req - sum(r.sample.cpu for r in rows)) / req if req > 0 else float("nan")
        out["rir"][tier] = {"mean": m, "std": s, "weighted": weighted}
    return out


def pvalues(a: SimulationReport, b: SimulationReport) -> dict:
    out = {}
    for kind in ("sort", "eigen"):
        out[f"response_time_{kind}"] = welch_pvalue(response_times(a, kind),
                                                   response_times(b, kind))
    for tier in sorted(set(a.metrics) & set(b.metrics)):
        out[f"rir_{tier}"] = welch_pvalue(rir_series(a, tier), rir_series(b, tier))
    return out


def experiment_key_metric(seed: int = 0, out=None, *, records: int = PRETRAIN_RECORDS,
                          horizon: float = SHORT_HORIZON, epochs: int = 150) -> dict:
    """CPU utilisation vs request rate as the PPA's key metric."""
    with _dir(out) as wd:
        seeds = wd / "seed-models"
        base = ScenarioConfig(name="key-metric", seed=seed)
        pre = build_seed_models(base, ("lstm",), seeds, records=records, epochs=epochs)
        runs = {}
        for key in ("cpu", "net_in"):
            cfg = base.replace(name=f"ppa-{key}", autoscaler="ppa", model_type="lstm",
                               model_link=_link(seeds, "lstm"), key_metric=key,
                               horizon=horizon, seed=seed + 1)
            res = run_scenario(cfg)
            _emit(out, f"ppa-{key}", res)
            runs[key] = res.report
        report = {
            "experiment": "key-metric", "seed": seed, "horizon": horizon,
            "runs": {k: run_statistics(r) for k, r in runs.items()},
            "pvalues": pvalues(runs["cpu"], runs["net_in"]),
            "pretraining": pre["info"],
        }
        if out is not None:
            dump_json(report, wd / "report.json")
    return report


# -- evaluation ---------------------------------------------------------------

def experiment_evaluation(seed: int = 0, out=None, *, records: int = PRETRAIN_RECORDS,
                          horizon: float = EVALUATION_HORIZON, epochs: int = 150,
                          trace: str = "bundled", confidence_threshold: float = 0.5) -> dict:
    """HPA against the PPA (LSTM, fine-tune, CPU) on the same trace replay."""
    with _dir(out) as wd:
        seeds = wd / "seed-models"
        base = ScenarioConfig(name="evaluation", seed=seed)
        pre = build_seed_models(base, ("lstm",), seeds, records=records, epochs=epochs)
        common = dict(source="trace", trace=trace, horizon=horizon, seed=seed + 1)
        hpa = run_scenario(base.replace(name="hpa", autoscaler="hpa", **common))
        ppa = run_scenario(base.replace(name="ppa", autoscaler="ppa", model_type="lstm",
                                        model_link=_link(seeds, "lstm"),
                                        update_policy="fine-tune", key_metric="cpu",
                                        confidence_threshold=confidence_threshold, **common))
        _emit(out, "hpa", hpa)
        _emit(out, "ppa", ppa)
        h, p = run_statistics(hpa.report), run_statistics(ppa.report)
        checks = {
            "sort_response": p["response_time"]["sort"]["mean"] <= h["response_time"]["sort"]["mean"],
            "eigen_response": p["response_time"]["eigen"]["mean"] <= h["response_time"]["eigen"]["mean"],
        }
        for tier in ("edge", "cloud"):
            checks[f"rir_{tier}"] = p["rir"][tier]["mean"] <= h["rir"][tier]["mean"]
        report = {
            "experiment": "evaluation", "seed": seed, "horizon": horizon,
            "runs": {"hpa": h, "ppa": p},
            "pvalues": pvalues(hpa.report, ppa.report),
            "ppa_not_worse": checks,
            "ppa_decisions": summarize(ppa.report).decisions,
            "ppa_mse": pooled_mse(ppa.report),
            "pretraining": pre["info"],
        }
        if out is not None:
            dump_json(report, wd / "report.json")
    return report


EXPERIMENTS = {
    "model-opt": experiment_model_opt,
    "update-policy": experiment_update_policy,
    "key-metric": experiment_key_metric,
    "evaluation": experiment_evaluation,
}

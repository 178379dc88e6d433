import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ppasim.harness import cli
from ppasim.harness.config import ScenarioConfig, config_from_mapping, load_config
from ppasim.harness.experiments import (experiment_key_metric, experiment_model_opt,
                                        experiment_update_policy)
from ppasim.harness.report import clean_json, histogram
from ppasim.harness.scenario import (bundled_trace_path, collect, load_exporter, run_scenario)
from ppasim.simcore import ConfigError

ROOT = Path(__file__).resolve().parents[1]


def write_toml(path, text):
    path.write_text(text)
    return path


class TestConfig:
    def test_defaults_validate(self):
        cfg = ScenarioConfig()
        assert cfg.effective_edge_min == 2 and cfg.update_seconds == 3600.0
        assert cfg.threshold_for("cloud") == 400.0

    def test_both_threshold_spellings(self):
        for key in ("Threashold", "Threshold"):
            cfg = config_from_mapping({"autoscaler": {key: 250}})
            assert cfg.threshold == 250

    def test_duplicate_spellings_rejected(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"autoscaler": {"Threashold": 1, "Threshold": 2}})

    @pytest.mark.parametrize("data", [
        {"bogus": {}},
        {"scenario": {"nope": 1}},
        {"autoscaler": {"kind": "vpa"}},
        {"autoscaler": {"KeyMetric": "latency"}},
        {"autoscaler": {"kind": "hpa", "ModelType": "lstm"}},
        {"autoscaler": {"kind": "ppa", "ModelType": "lstm"}},
        {"autoscaler": {"UpdateInterval": 0.001}},
        {"autoscaler": {"ConfidenceThreshold": 2}},
        {"autoscaler": {"UpdatePolicy": "often"}},
        {"workload": {"source": "trace"}},
        {"scenario": {"horizon": 0}},
        {"cluster": {"edge_min_replicas": 0}},
    ])
    def test_errors(self, data):
        with pytest.raises(ConfigError):
            config_from_mapping(data)

    def test_links_expand_per_tier(self, tmp_path):
        cfg = config_from_mapping({"autoscaler": {"kind": "ppa", "ModelType": "arma",
                                                  "ModelLink": "m/{tier}.ppam"}}, tmp_path)
        assert cfg.resolve(cfg.model_link, "edge") == tmp_path / "m" / "edge.ppam"

    def test_load_config_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.toml")
        with pytest.raises(ConfigError):
            load_config(write_toml(tmp_path / "bad.toml", "[scenario\n"))

    def test_shipped_configs_parse(self):
        for path in (ROOT / "configs").glob("*.toml"):
            load_config(path)


class TestScenario:
    def test_bundled_trace_exists(self):
        assert bundled_trace_path().is_file()

    def test_exporters(self, tmp_path):
        assert load_exporter("queue_length").__name__ == "queue_length_metric"
        (tmp_path / "exp.py").write_text("def metric(view):\n    return 42.0\n")
        assert load_exporter("exp.py:metric", tmp_path)(None) == 42.0
        for spec in ("nope", "missing.py:f", "exp.py:absent"):
            with pytest.raises(ConfigError):
                load_exporter(spec, tmp_path)

    def test_missing_model_link(self, tmp_path):
        cfg = ScenarioConfig(autoscaler="ppa", model_type="arma",
                             model_link=str(tmp_path / "x-{tier}.ppam"), horizon=60)
        with pytest.raises(ConfigError):
            run_scenario(cfg)

    def test_collect_shape(self):
        data = collect(ScenarioConfig(seed=3), records=40)
        assert set(data) == {"edge", "cloud"}
        assert data["edge"].shape == (40, 5) and np.all(np.isfinite(data["cloud"]))

    def test_fixed_autoscaler(self):
        rep = run_scenario(ScenarioConfig(autoscaler="fixed", fixed_replicas=2, horizon=300)).report
        assert {d.desired_replicas for d in rep.decisions["cloud"]} == {2}


class TestReport:
    def test_clean_json(self):
        assert clean_json({"a": float("nan"), "b": np.float64(1.5), "c": (np.int64(2),)}) == \
            {"a": None, "b": 1.5, "c": [2]}

    def test_histogram_counts(self):
        h = histogram([0.0, 1.0, 1.0, 2.0], bins=2)
        assert sum(c for _, _, c in h) == 4


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "ppasim.harness.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


class TestCli:
    def test_simulate_is_deterministic(self, tmp_path):
        cfg = write_toml(tmp_path / "c.toml", '[scenario]\nname = "s"\nhorizon = 900\n')
        outs = []
        for i in range(2):
            assert cli.main(["simulate", "--config", str(cfg), "--seed", "7",
                             "--out", str(tmp_path / f"o{i}")]) == 0
            outs.append(tmp_path / f"o{i}" / "s")
        for name in ("tasks.csv", "metrics.csv", "decisions.csv", "summary.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        summary = json.loads((outs[0] / "summary.json").read_text())
        assert summary["schema_version"] == 1
        assert (outs[0] / "plots" / "rir_edge.csv").is_file()

    def test_compare_identical(self, tmp_path):
        cfg = write_toml(tmp_path / "c.toml", '[scenario]\nname = "s"\nhorizon = 900\n')
        assert cli.main(["compare", "--config", str(cfg), "--other", str(cfg),
                         "--out", str(tmp_path / "cmp")]) == 0
        comp = json.loads((tmp_path / "cmp" / "comparison.json").read_text())
        assert set(comp["pvalues"].values()) == {1.0}
        assert all(v == 0 for v in comp["deltas_b_minus_a"]["response_time"].values())
        assert all(v == 0 for v in comp["deltas_b_minus_a"]["rir"].values())

    def test_error_json(self, tmp_path):
        cfg = write_toml(tmp_path / "c.toml", '[autoscaler]\nkind = "vpa"\n')
        res = run_cli("simulate", "--config", str(cfg))
        assert res.returncode == 2
        err = json.loads(res.stderr.strip().splitlines()[-1])
        assert err["error"] == "ConfigError" and err["verb"] == "simulate"

    def test_collect_pretrain_simulate(self, tmp_path):
        assert cli.main(["collect", "--records", "150", "--out", str(tmp_path / "m")]) == 0
        for tier in ("edge", "cloud"):
            assert cli.main(["pretrain", "--data", str(tmp_path / "m" / f"collect-{tier}.csv"),
                             "--model-type", "lstm", "--epochs", "2",
                             "--out", str(tmp_path / "m" / f"lstm-{tier}.ppam"),
                             "--scaler-out", str(tmp_path / "m" / f"scaler-{tier}.csv")]) == 0
        cfg = write_toml(tmp_path / "p.toml", """
[scenario]
name = "p"
horizon = 1800
[autoscaler]
kind = "ppa"
ModelType = "lstm"
ModelLink = "m/lstm-{tier}.ppam"
ScalerLink = "m/scaler-{tier}.csv"
UpdateInterval = 0.25
[updater]
fine_tune_epochs = 1
""")
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        decisions = (tmp_path / "o" / "p" / "decisions.csv").read_text()
        assert "proactive" in decisions or "low-confidence" in decisions
        assert "reactive-fallback-invalid-model" in decisions  # update ticks

    def test_pretrain_too_short(self, tmp_path):
        (tmp_path / "d.csv").write_text("tick,time,cpu,ram,net_in,net_out,custom\n1,15,1,1,1,1,1\n")
        res = run_cli("pretrain", "--data", str(tmp_path / "d.csv"), "--out",
                      str(tmp_path / "m.ppam"))
        assert res.returncode == 2 and "TooShort" in res.stderr


class TestExperiments:
    def test_model_opt_structure(self):
        rep = experiment_model_opt(0, records=150, horizon=900, epochs=2)
        assert set(rep["mse"]) == {"arma", "lstm"}
        for mt in ("arma", "lstm"):
            assert 0 < rep["mse"][mt]["all"] < float("inf")
        assert rep["control"]["open_loop"]["oracle"]["edge"] == 0.0
        assert set(rep["control"]["lowest_open_loop"].values()) == {"oracle"}

    def test_update_policy_structure(self, tmp_path):
        rep = experiment_update_policy(0, tmp_path, records=150, hours=1.0, epochs=2)
        assert set(rep["mse"]) == {"no-retrain", "retrain", "fine-tune"}
        assert rep["parameters_unchanged"]["no-retrain"] is True
        assert (tmp_path / "report.json").is_file()

    def test_key_metric_structure(self):
        rep = experiment_key_metric(0, records=150, horizon=900, epochs=2)
        for key in ("cpu", "net_in"):
            run = rep["runs"][key]
            assert set(run["response_time"]) == {"sort", "eigen"}
            assert set(run["rir"]["edge"]) >= {"mean", "std"}
        assert set(rep["pvalues"]) >= {"response_time_sort", "rir_cloud"}

"""Turn a ScenarioConfig into a wired-up simulation and run it."""
from __future__ import annotations

import importlib.util
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..autoscaler import (FixedReplicas, HorizontalPodAutoscaler, PolicyConfig,
                          ProactivePodAutoscaler, UpdateSettings)
from ..cluster import ClusterState, Tier, default_topology, worker_spec
from ..forecast import (LstmForecaster, ModelFileError, ModelStore, OracleForecaster,
                        StaticModelSource, UpdatePolicy, load_model, load_scaler, save_model)
from ..simcore import (ConfigError, ServiceModel, SimConfig, Simulation, SimulationReport,
                       TierView, queue_length_metric)
from ..telemetry import MetricsHistory
from ..workload import TraceFile, load_trace, random_access_stream
from .config import BUNDLED_TRACE, ScenarioConfig

TIERS = (Tier.EDGE, Tier.CLOUD)


def bundled_trace_path() -> Path:
    return Path(str(resources.files("ppasim") / "data" / "sample_trace.csv"))


def in_flight_metric(view: TierView) -> float:
    return float(view.in_flight)


def waiting_plus_running(view: TierView) -> float:
    return float(view.queue_length + view.in_flight)


BUILTIN_EXPORTERS = {
    "queue_length": queue_length_metric,
    "in_flight": in_flight_metric,
    "backlog": waiting_plus_running,
}


def load_exporter(spec: str, base_dir: str | Path = "."):
    """A builtin exporter name or ``path/to/file.py:function``."""
    if spec in BUILTIN_EXPORTERS:
        return BUILTIN_EXPORTERS[spec]
    if ":" not in spec:
        raise ConfigError(f"unknown CustomExporter {spec!r}")
    file, func = spec.rsplit(":", 1)
    path = Path(file)
    if not path.is_absolute():
        path = Path(base_dir) / path
    if not path.is_file():
        raise ConfigError(f"CustomExporter file {path} not found")
    mod_spec = importlib.util.spec_from_file_location(f"ppasim_exporter_{path.stem}", path)
    module = importlib.util.module_from_spec(mod_spec)
    try:
        mod_spec.loader.exec_module(module)
    except Exception as exc:  # noqa: BLE001 - user code
        raise ConfigError(f"CustomExporter {path} failed to import: {exc}") from None
    fn = getattr(module, func, None)
    if not callable(fn):
        raise ConfigError(f"CustomExporter {path} has no function {func!r}")
    return fn


def build_topology(cfg: ScenarioConfig) -> ClusterState:
    return default_topology(
        edge_zones=cfg.edge_zones, edge_nodes_per_zone=cfg.edge_nodes_per_zone,
        edge_cpu=cfg.edge_cpu, edge_ram=cfg.edge_ram, cloud_workers=cfg.cloud_workers,
        cloud_cpu=cfg.cloud_cpu, cloud_ram=cfg.cloud_ram,
        static_cpu=cfg.static_cpu, static_ram=cfg.static_ram)


def load_scenario_trace(cfg: ScenarioConfig) -> TraceFile:
    path = bundled_trace_path() if cfg.trace == BUNDLED_TRACE else cfg.resolve(cfg.trace)
    if not path.is_file():
        raise ConfigError(f"trace file {path} not found")
    return load_trace(path, cfg.trace_scale)


def arrivals_for(cfg: ScenarioConfig, zones):
    if cfg.source == "trace":
        return (load_scenario_trace(cfg), cfg.seed)
    return random_access_stream(cfg.seed, cfg.horizon, zones)


def sim_config(cfg: ScenarioConfig) -> SimConfig:
    upd = cfg.update_seconds if cfg.autoscaler == "ppa" else None
    return SimConfig(cfg.horizon, cfg.control_interval, upd, cfg.idle_floor,
                     ServiceModel(cfg.sort_rate, cfg.eigen_rate), cfg.check_capacity)


def policy_for(cfg: ScenarioConfig, tier: Tier) -> PolicyConfig:
    mins = cfg.effective_edge_min if tier is Tier.EDGE else cfg.cloud_min_replicas
    return PolicyConfig(cfg.key_metric, cfg.threshold_for(tier.value), cfg.confidence_threshold, mins)


def _model_source(cfg: ScenarioConfig, tier: Tier, workdir: Path, reference):
    if cfg.model_type == "none":
        return StaticModelSource(None)
    if cfg.model_type == "oracle":
        return StaticModelSource(OracleForecaster.from_samples(
            m.sample for m in reference.metrics[tier.value]))
    src = cfg.resolve(cfg.model_link, tier.value)
    if not src.is_file():
        raise ConfigError(f"ModelLink {src} not found")
    # updates rewrite the model file, so work on a private copy
    dst = workdir / "models" / f"{tier.value}.ppam"
    dst.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(src, dst)
    scaler_path = cfg.resolve(cfg.scaler_link, tier.value)
    if scaler_path is not None:
        try:
            model = load_model(dst)
        except ModelFileError:
            model = None  # corrupt file: the evaluator falls back at runtime
        if isinstance(model, LstmForecaster):
            model.scaler = load_scaler(scaler_path)
            save_model(model, dst)
    return ModelStore(dst)


def build_simulation(cfg: ScenarioConfig, workdir: Path,
                     reference: SimulationReport | None = None) -> Simulation:
    cluster = build_topology(cfg)
    specs = {t: worker_spec(t, cfg.worker_cpu, cfg.worker_ram, cfg.startup_delay) for t in TIERS}
    autoscalers = {}
    for tier in TIERS:
        policy = policy_for(cfg, tier)
        if cfg.autoscaler == "hpa":
            autoscalers[tier] = HorizontalPodAutoscaler(tier, specs[tier], policy)
        elif cfg.autoscaler == "fixed":
            n = max(cfg.fixed_replicas, policy.min_replicas)
            autoscalers[tier] = FixedReplicas(tier, specs[tier], n, cfg.key_metric)
        else:
            source = _model_source(cfg, tier, workdir, reference)
            history = MetricsHistory(workdir / f"history-{tier.value}.csv")
            update = UpdateSettings(UpdatePolicy.parse(cfg.update_policy), cfg.fine_tune_epochs,
                                    cfg.scratch_epochs, cfg.lr, cfg.seed)
            autoscalers[tier] = ProactivePodAutoscaler(tier, specs[tier], policy, source,
                                                       history, update)
    exporter = load_exporter(cfg.custom_exporter, cfg.base_dir)
    return Simulation(cluster, arrivals_for(cfg, cluster.edge_zones), autoscalers, specs,
                      sim_config(cfg), custom_metric=exporter)


@contextmanager
def _workdir(path: str | Path | None):
    if path is not None:
        p = Path(path)
        p.mkdir(parents=True, exist_ok=True)
        yield p
    else:
        with tempfile.TemporaryDirectory(prefix="ppasim-") as tmp:
            yield Path(tmp)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    report: SimulationReport
    reference: SimulationReport | None = None


def run_scenario(cfg: ScenarioConfig, workdir: str | Path | None = None) -> ScenarioResult:
    """Run one scenario. The oracle model replays a reference HPA run first."""
    reference = None
    if cfg.autoscaler == "ppa" and cfg.model_type == "oracle":
        ref_cfg = cfg.replace(autoscaler="hpa", model_type="none")
        reference = run_scenario(ref_cfg).report
    with _workdir(workdir) as wd:
        report = build_simulation(cfg, wd, reference).run()
    return ScenarioResult(cfg, report, reference)


def collect_config(cfg: ScenarioConfig, records: int = 1800) -> ScenarioConfig:
    """An unconstrained single-node-per-zone HPA run of ``records`` control loops."""
    return cfg.replace(
        name=f"{cfg.name}-collect", horizon=records * cfg.control_interval,
        edge_nodes_per_zone=1, edge_cpu=256_000, edge_ram=262_144,
        cloud_workers=1, cloud_cpu=256_000, cloud_ram=262_144, static_cpu=0, static_ram=0,
        autoscaler="hpa", model_type="none", model_link=None, scaler_link=None,
        update_interval=None, check_capacity=False)


def collect(cfg: ScenarioConfig, records: int = 1800) -> dict[str, np.ndarray]:
    """Metric matrices (records x 5) per tier from an unconstrained run."""
    report = run_scenario(collect_config(cfg, records)).report
    return {tier: np.vstack([m.sample.vector() for m in rows])
            for tier, rows in report.metrics.items()}

"""Scenario configuration: a TOML file with one section per module.

The autoscaler section takes the PPA's container arguments under their
original names (``ModelLink``, ``ScalerLink``, ``ModelType``, ``KeyMetric``,
``ControlInterval``, ``UpdateInterval`` in hours, ``CustomExporter`` and
``Threashold``/``Threshold``). Links are local file paths; ``ModelLink`` and
``ScalerLink`` may contain ``{tier}``, expanded to ``edge`` and ``cloud``.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..autoscaler import default_threshold
from ..forecast.base import UpdatePolicy
from ..simcore import ConfigError
from ..telemetry import CHANNELS

AUTOSCALERS = ("hpa", "ppa", "fixed")
MODEL_TYPES = ("arma", "lstm", "oracle", "none")
SOURCES = ("random_access", "trace")
BUNDLED_TRACE = "bundled"

# config-file key -> ScenarioConfig field, per section
_KEYS = {
    "scenario": {"name": "name", "seed": "seed", "horizon": "horizon", "output": "output",
                 "check_capacity": "check_capacity"},
    "cluster": {"edge_zones": "edge_zones", "edge_nodes_per_zone": "edge_nodes_per_zone",
                "edge_cpu": "edge_cpu", "edge_ram": "edge_ram",
                "cloud_workers": "cloud_workers", "cloud_cpu": "cloud_cpu",
                "cloud_ram": "cloud_ram", "static_cpu": "static_cpu", "static_ram": "static_ram",
                "worker_cpu": "worker_cpu", "worker_ram": "worker_ram",
                "startup_delay": "startup_delay", "edge_min_replicas": "edge_min_replicas",
                "cloud_min_replicas": "cloud_min_replicas", "fixed_replicas": "fixed_replicas"},
    "workload": {"source": "source", "trace": "trace", "scale": "trace_scale",
                 "sort_rate": "sort_rate", "eigen_rate": "eigen_rate",
                 "idle_floor": "idle_floor"},
    "autoscaler": {"kind": "autoscaler", "ModelType": "model_type", "ModelLink": "model_link",
                   "ScalerLink": "scaler_link", "KeyMetric": "key_metric",
                   "ControlInterval": "control_interval", "UpdateInterval": "update_interval",
                   "CustomExporter": "custom_exporter", "Threashold": "threshold",
                   "Threshold": "threshold", "CloudThreshold": "cloud_threshold",
                   "ConfidenceThreshold": "confidence_threshold",
                   "UpdatePolicy": "update_policy"},
    "updater": {"fine_tune_epochs": "fine_tune_epochs", "scratch_epochs": "scratch_epochs",
                "lr": "lr"},
}


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    horizon: float = 7200.0
    output: str | None = None
    check_capacity: bool = False
    # cluster
    edge_zones: int = 2
    edge_nodes_per_zone: int = 2
    edge_cpu: int = 2000
    edge_ram: int = 2048
    cloud_workers: int = 2
    cloud_cpu: int = 3000
    cloud_ram: int = 3072
    static_cpu: int = 500
    static_ram: int = 512
    worker_cpu: int = 500
    worker_ram: int = 256
    startup_delay: float = 10.0
    edge_min_replicas: int | None = None   # None: one per edge zone
    cloud_min_replicas: int = 1
    fixed_replicas: int = 1
    # workload
    source: str = "random_access"
    trace: str | None = None
    trace_scale: float = 1.0
    sort_rate: float = 50.0
    eigen_rate: float = 166_667.0
    idle_floor: float = 10.0
    # autoscaler
    autoscaler: str = "hpa"
    model_type: str = "none"
    model_link: str | None = None
    scaler_link: str | None = None
    key_metric: str = "cpu"
    control_interval: float = 15.0
    update_interval: float | None = 1.0    # hours; None or 0 disables updates
    custom_exporter: str = "queue_length"
    threshold: float | None = None         # None: default for the key metric
    cloud_threshold: float | None = None   # cloud override; None: same as threshold
    confidence_threshold: float = 0.5
    update_policy: str = "fine-tune"
    # updater
    fine_tune_epochs: int = 10
    scratch_epochs: int = 100
    lr: float = 1e-3
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        self.validate()

    # -- derived values ----------------------------------------------------
    @property
    def update_seconds(self) -> float | None:
        if not self.update_interval:
            return None
        return float(self.update_interval) * 3600.0

    def threshold_for(self, tier: str) -> float:
        if tier == "cloud" and self.cloud_threshold is not None:
            return float(self.cloud_threshold)
        if self.threshold is not None:
            return float(self.threshold)
        try:
            return default_threshold(self.key_metric, tier)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def effective_edge_min(self) -> int:
        return self.edge_zones if self.edge_min_replicas is None else int(self.edge_min_replicas)

    def resolve(self, link: str | None, tier: str | None = None) -> Path | None:
        if not link:
            return None
        text = link.format(tier=tier) if tier is not None else link
        p = Path(text)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> None:
        if self.autoscaler not in AUTOSCALERS:
            raise ConfigError(f"autoscaler must be one of {AUTOSCALERS}, got {self.autoscaler!r}")
        if self.model_type not in MODEL_TYPES:
            raise ConfigError(f"ModelType must be one of {MODEL_TYPES}, got {self.model_type!r}")
        if self.source not in SOURCES:
            raise ConfigError(f"workload source must be one of {SOURCES}, got {self.source!r}")
        if self.key_metric not in CHANNELS:
            raise ConfigError(f"KeyMetric must be one of {CHANNELS}, got {self.key_metric!r}")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if not self.control_interval > 0:
            raise ConfigError("ControlInterval must be positive")
        if self.update_interval:
            ratio = self.update_seconds / self.control_interval
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError("UpdateInterval must be a whole number of control intervals")
        for t in (self.threshold, self.cloud_threshold):
            if t is not None and not t > 0:
                raise ConfigError("threshold must be positive")
        self.threshold_for("edge"), self.threshold_for("cloud")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ConfigError("ConfidenceThreshold must lie in [0, 1]")
        try:
            UpdatePolicy.parse(self.update_policy)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.autoscaler != "ppa" and self.model_type != "none":
            raise ConfigError("ModelType requires the ppa autoscaler")
        if self.autoscaler == "ppa" and self.model_type in ("arma", "lstm") and not self.model_link:
            raise ConfigError(f"ModelType {self.model_type} requires ModelLink")
        if self.source == "trace" and not self.trace:
            raise ConfigError("trace source requires a trace path")
        if self.effective_edge_min < 1 or self.cloud_min_replicas < 1:
            raise ConfigError("minimum replicas must be at least 1")
        for name in ("worker_cpu", "edge_cpu", "cloud_cpu", "edge_zones"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


def config_from_mapping(data: dict[str, Any], base_dir: str | Path = ".") -> ScenarioConfig:
    kwargs: dict[str, Any] = {}
    for section, body in data.items():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in body.items():
            target = _KEYS[section].get(key)
            if target is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            if target in kwargs:
                raise ConfigError(f"{key!r} given twice in [{section}]")
            kwargs[target] = value
    if kwargs.get("trace") == "":
        kwargs["trace"] = None
    kwargs["base_dir"] = str(base_dir)
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path, **overrides) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = config_from_mapping(data, base_dir=path.parent)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return cfg.replace(**overrides) if overrides else cfg

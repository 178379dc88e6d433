"""Scaling decisions: the threshold rule, the reactive HPA and the proactive evaluator."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .cluster import ClusterState, PodSpec, ScaleAction, Tier
from .forecast.base import Forecaster, UpdatePolicy
from .forecast.updater import UpdateResult, updater_run
from .telemetry import MetricSample, MetricsHistory, channel_index

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = {"cpu": 400.0, "net_in": 20.0}
# One cloud replica finishes 1.25 Eigen requests per 15 s interval; 1.0 keeps the
# same 80 % target as 400 of 500 millicores.
TIER_THRESHOLDS = {("net_in", "cloud"): 1.0}


def default_threshold(key_metric: str, tier: str) -> float:
    if (key_metric, tier) in TIER_THRESHOLDS:
        return TIER_THRESHOLDS[(key_metric, tier)]
    if key_metric not in DEFAULT_THRESHOLDS:
        raise ValueError(f"no default threshold for key metric {key_metric!r}")
    return DEFAULT_THRESHOLDS[key_metric]


class Provenance(str, Enum):
    PROACTIVE = "proactive"
    FALLBACK_INVALID = "reactive-fallback-invalid-model"
    FALLBACK_LOW_CONFIDENCE = "reactive-fallback-low-confidence"
    CLAMPED = "clamped"
    REACTIVE = "reactive"


@dataclass(frozen=True)
class PolicyConfig:
    key_metric: str = "cpu"
    threshold: float = 400.0
    confidence_threshold: float = 0.5
    min_replicas: int = 1

    def __post_init__(self):
        channel_index(self.key_metric)
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must lie in [0, 1]")
        if self.min_replicas < 1:
            raise ValueError("min_replicas must be at least 1")


@dataclass(frozen=True)
class ScalingDecision:
    tick: int
    tier: str
    current_key_metric: float
    predicted_key_metric: float | None
    confidence: float | None
    desired_replicas: int
    max_replicas: int
    clamped: bool
    provenance: Provenance

    CSV_HEADER = "tick,tier,current_metric,predicted_metric,confidence,desired,clamped,provenance"

    def row(self) -> str:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return (f"{self.tick},{self.tier},{fmt(self.current_key_metric)},"
                f"{fmt(self.predicted_key_metric)},{fmt(self.confidence)},"
                f"{self.desired_replicas},{int(self.clamped)},{self.provenance.value}")


def static_policy(key_metric_value: float, threshold: float, min_replicas: int = 1) -> int:
    """``max(min_replicas, ceil(value / threshold))`` in exact arithmetic."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if key_metric_value < 0 or not math.isfinite(key_metric_value):
        raise ValueError("key metric must be finite and non-negative")
    return max(min_replicas, math.ceil(Fraction(key_metric_value) / Fraction(threshold)))


def select_key_metric(sample: MetricSample, config: PolicyConfig | str) -> float:
    name = config if isinstance(config, str) else config.key_metric
    return float(sample.vector()[channel_index(name)])


def _clamp(n: int, max_replicas: int, min_replicas: int) -> tuple[int, bool]:
    if n > max_replicas:
        return max_replicas, True
    return max(n, min(min_replicas, max_replicas)), False


def hpa_decide(sample: MetricSample, config: PolicyConfig, max_replicas: int,
               tier: str = "") -> ScalingDecision:
    current = select_key_metric(sample, config)
    n, clamped = _clamp(static_policy(current, config.threshold, config.min_replicas),
                        max_replicas, config.min_replicas)
    return ScalingDecision(sample.tick, tier, current, None, None, n, max_replicas, clamped,
                           Provenance.CLAMPED if clamped else Provenance.REACTIVE)


def ppa_decide(sample: MetricSample, model: Forecaster | None, config: PolicyConfig,
               max_replicas: int, tier: str = "") -> ScalingDecision:
    """One pass of the evaluator, given an already loaded model (or ``None``)."""
    current = select_key_metric(sample, config)
    predicted = confidence = None
    if model is not None and model.is_valid():
        pred = model.predict(sample, config.key_metric)
        predicted = max(0.0, pred.key(config.key_metric))
        confidence = pred.confidence
        if model.is_bayesian() and (confidence is None or confidence < config.confidence_threshold):
            key_metric, prov = current, Provenance.FALLBACK_LOW_CONFIDENCE
        else:
            key_metric, prov = predicted, Provenance.PROACTIVE
    else:
        key_metric, prov = current, Provenance.FALLBACK_INVALID
    n = static_policy(key_metric, config.threshold, config.min_replicas)
    n, clamped = _clamp(n, max_replicas, config.min_replicas)
    if clamped:
        prov = Provenance.CLAMPED
    return ScalingDecision(sample.tick, tier, current, predicted, confidence, n, max_replicas,
                           clamped, prov)


class HorizontalPodAutoscaler:
    kind = "hpa"

    def __init__(self, tier: Tier, spec: PodSpec, policy: PolicyConfig):
        self.tier, self.spec, self.policy = tier, spec, policy

    def step(self, sample: MetricSample, cluster: ClusterState, now: float
             ) -> tuple[ScalingDecision, list[ScaleAction]]:
        max_r = cluster.max_replicas(self.spec, self.tier)
        d = hpa_decide(sample, self.policy, max_r, self.tier.value)
        return d, cluster.scale_to(self.spec, d.desired_replicas, now)


class FixedReplicas:
    """Holds the worker count constant (used for unconstrained data collection)."""
    kind = "fixed"

    def __init__(self, tier: Tier, spec: PodSpec, replicas: int, key_metric: str = "cpu"):
        self.tier, self.spec, self.replicas = tier, spec, replicas
        self.policy = PolicyConfig(key_metric=key_metric, min_replicas=max(1, replicas))

    def step(self, sample, cluster, now):
        max_r = cluster.max_replicas(self.spec, self.tier)
        n = min(self.replicas, max_r)
        d = ScalingDecision(sample.tick, self.tier.value, select_key_metric(sample, self.policy),
                            None, None, n, max_r, n < self.replicas, Provenance.REACTIVE)
        return d, cluster.scale_to(self.spec, n, now)


@dataclass
class UpdateSettings:
    policy: UpdatePolicy = UpdatePolicy.FINE_TUNE
    fine_tune_epochs: int = 10
    scratch_epochs: int = 100
    lr: float = 1e-3
    seed: int = 0


class ProactivePodAutoscaler:
    """Formulator + evaluator + updater for one worker group.

    ``source`` is a ``ModelStore`` over the model file (or any object with
    ``load``/``replace``/``updating``). While an update is in progress the
    model reads as invalid for the next control loop.
    """
    kind = "ppa"

    def __init__(self, tier: Tier, spec: PodSpec, policy: PolicyConfig, source,
                 history: MetricsHistory | None = None, update: UpdateSettings | None = None):
        self.tier, self.spec, self.policy = tier, spec, policy
        self.source = source
        self.history = history if history is not None else MetricsHistory()
        self.update_settings = update or UpdateSettings()
        self.updates: list[dict] = []
        self._n_updates = 0

    def step(self, sample: MetricSample, cluster: ClusterState, now: float
             ) -> tuple[ScalingDecision, list[ScaleAction]]:
        self.history.append(sample)
        max_r = cluster.max_replicas(self.spec, self.tier)
        model = self.source.load()
        d = ppa_decide(sample, model, self.policy, max_r, self.tier.value)
        if self.source.updating:
            self.source.updating = False
        return d, cluster.scale_to(self.spec, d.desired_replicas, now)

    def update(self, now: float) -> UpdateResult | None:
        s = self.update_settings
        self.source.updating = True
        self._n_updates += 1
        current = self._current_model()
        if current is None:
            logger.info("%s update at t=%s skipped: no valid model", self.tier.value, now)
            self.history.clear()
            self.updates.append({"time": now, "tier": self.tier.value, "applied": "skipped",
                                 "samples": 0})
            return None
        res = updater_run(current, self.history, s.policy, store=self.source,
                          fine_tune_epochs=s.fine_tune_epochs, scratch_epochs=s.scratch_epochs,
                          lr=s.lr, seed=s.seed + self._n_updates)
        self.updates.append({"time": now, "tier": self.tier.value, "applied": res.applied.value,
                             "samples": res.samples})
        return res

    def _current_model(self) -> Forecaster | None:
        flag = self.source.updating
        self.source.updating = False
        try:
            return self.source.load()
        finally:
            self.source.updating = flag

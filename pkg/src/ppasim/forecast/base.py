"""Forecaster protocol, feature scaler and update policies."""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar

import numpy as np

from ..telemetry import CHANNELS, MetricSample, channel_index


class ModelInvalid(RuntimeError):
    pass


class TooShort(ValueError):
    pass


class NonFinite(ArithmeticError):
    pass


class UpdatePolicy(str, Enum):
    NO_RETRAIN = "no-retrain"
    RETRAIN_FROM_SCRATCH = "retrain"
    FINE_TUNE = "fine-tune"

    @classmethod
    def parse(cls, value: "str | UpdatePolicy") -> "UpdatePolicy":
        if isinstance(value, cls):
            return value
        aliases = {
            "1": cls.NO_RETRAIN, "none": cls.NO_RETRAIN, "no-retrain": cls.NO_RETRAIN,
            "noretrain": cls.NO_RETRAIN,
            "2": cls.RETRAIN_FROM_SCRATCH, "retrain": cls.RETRAIN_FROM_SCRATCH,
            "scratch": cls.RETRAIN_FROM_SCRATCH, "retrainfromscratch": cls.RETRAIN_FROM_SCRATCH,
            "3": cls.FINE_TUNE, "fine-tune": cls.FINE_TUNE, "finetune": cls.FINE_TUNE,
            "update": cls.FINE_TUNE,
        }
        key = str(value).strip().lower().replace("_", "-")
        if key in aliases:
            return aliases[key]
        if key.replace("-", "") in aliases:
            return aliases[key.replace("-", "")]
        raise ValueError(f"unknown update policy {value!r}")


@dataclass(frozen=True)
class Prediction:
    values: np.ndarray  # all five channels, raw units
    confidence: float | None = None

    def key(self, name: str) -> float:
        return float(self.values[channel_index(name)])

    def as_sample(self, tick: int, time: float) -> MetricSample:
        return MetricSample.from_vector(tick, time, self.values)


class Scaler:
    """Per-channel min-max scaling fitted on the pretraining set."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float).copy()
        self.hi = np.asarray(hi, dtype=float).copy()
        if self.lo.shape != self.hi.shape:
            raise ValueError("scaler bounds differ in shape")

    @classmethod
    def fit(cls, data: np.ndarray) -> "Scaler":
        data = np.asarray(data, dtype=float)
        return cls(data.min(axis=0), data.max(axis=0))

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    def transform(self, x):
        x = np.asarray(x, dtype=float)
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (x - self.lo) / safe, 0.0)

    def inverse(self, z):
        z = np.asarray(z, dtype=float)
        span = self.span
        return np.where(span > 0, z * span + self.lo, self.lo)

    def __eq__(self, other):
        return (isinstance(other, Scaler) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))


class Forecaster(ABC):
    """Window-1 predictor: last control loop's five metrics in, next loop's out."""

    model_type: ClassVar[str] = "abstract"
    channels: tuple[str, ...] = CHANNELS

    def is_valid(self) -> bool:
        return True

    def is_bayesian(self) -> bool:
        return False

    @abstractmethod
    def predict(self, sample: MetricSample, key: str = "cpu") -> Prediction:
        ...

    def reset_state(self) -> None:
        """Forget recursion state carried between control loops."""

    # persistence hooks used by the model-file codec
    def header(self) -> dict:
        return {}

    def params(self) -> dict[str, np.ndarray]:
        return {}

    @classmethod
    def from_parts(cls, header: dict, params: dict[str, np.ndarray]) -> "Forecaster":
        raise NotImplementedError

    def save(self, path) -> None:
        from .modelfile import save_model
        save_model(self, path)

    def copy(self) -> "Forecaster":
        return type(self).from_parts(self.header(), {k: v.copy() for k, v in self.params().items()})


def confidence_from_jump(predicted: float, last: float, resid_std: float) -> float:
    """``exp(-z)`` with ``z`` the prediction jump in residual standard deviations."""
    jump = abs(predicted - last)
    if jump == 0:
        return 1.0
    if not resid_std > 0 or not math.isfinite(resid_std):
        return 0.0
    return math.exp(-jump / resid_std)


def transitions(history: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Consecutive (x_t, x_{t+1}) pairs of a metric matrix."""
    history = np.asarray(history, dtype=float)
    if history.ndim != 2 or history.shape[0] < 2:
        return np.empty((0, len(CHANNELS))), np.empty((0, len(CHANNELS)))
    return history[:-1], history[1:]

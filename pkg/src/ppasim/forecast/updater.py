"""The Updater: seed-model pretraining and the periodic model update."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..telemetry import CHANNELS, MetricsHistory
from .arma import MIN_HISTORY, ArmaForecaster
from .base import Forecaster, Scaler, TooShort, UpdatePolicy, transitions
from .lstm import LstmForecaster, LstmNet

logger = logging.getLogger(__name__)

MIN_PRETRAIN = 100


@dataclass
class UpdateResult:
    forecaster: Forecaster
    requested: UpdatePolicy
    applied: UpdatePolicy
    samples: int
    message: str = ""
    losses: list[float] = field(default_factory=list)


def _as_matrix(history) -> np.ndarray:
    if isinstance(history, MetricsHistory):
        return history.matrix()
    data = np.asarray(history, dtype=float)
    if data.size == 0:
        return np.empty((0, len(CHANNELS)))
    return data


def updater_run(forecaster: Forecaster, history, policy: UpdatePolicy | str, *,
                store=None, fine_tune_epochs: int = 10, scratch_epochs: int = 100,
                lr: float = 1e-3, seed: int = 0, min_history: int = MIN_HISTORY) -> UpdateResult:
    """Apply one update loop.

    The result is saved through ``store`` (when given) and a ``MetricsHistory``
    is cleared afterwards. Too little history downgrades the tick to
    no-retrain.
    """
    policy = UpdatePolicy.parse(policy)
    data = _as_matrix(history)
    applied = policy
    msg = ""
    losses: list[float] = []
    if policy is not UpdatePolicy.NO_RETRAIN and len(data) < min_history:
        applied = UpdatePolicy.NO_RETRAIN
        msg = f"history has {len(data)} samples (< {min_history}); skipping {policy.value}"
        logger.info(msg)

    model = forecaster
    if applied is UpdatePolicy.NO_RETRAIN:
        pass
    elif isinstance(forecaster, ArmaForecaster):
        model = forecaster.refit(data, warm=applied is UpdatePolicy.FINE_TUNE)
    elif isinstance(forecaster, LstmForecaster):
        if applied is UpdatePolicy.RETRAIN_FROM_SCRATCH:
            model = forecaster.reinitialized(seed)
            losses = model.train_on(data, scratch_epochs, lr=lr, seed=seed)
        else:
            model = LstmForecaster(forecaster.net.copy(), forecaster.scaler,
                                   forecaster.resid_std, forecaster.bayesian, forecaster.seed)
            losses = model.train_on(data, fine_tune_epochs, lr=lr, seed=seed)
        model.set_residuals(data)
    else:
        applied = UpdatePolicy.NO_RETRAIN
        msg = f"{forecaster.model_type} models are not trainable; kept as is"

    if store is not None:
        store.replace(model)
    if isinstance(history, MetricsHistory):
        history.clear()
    return UpdateResult(model, policy, applied, len(data), msg, losses)


@dataclass
class PretrainInfo:
    n_records: int
    n_train: int
    n_validation: int
    validation_mse_before: list[float]
    validation_mse_after: list[float]
    losses: list[float] = field(default_factory=list)


def split_pretraining(n: int) -> tuple[int, int]:
    """First two thirds train, last third validates."""
    n_train = (2 * n) // 3
    return n_train, n - n_train


def _channel_mse(model: Forecaster, data: np.ndarray) -> list[float]:
    x, y = transitions(data)
    if isinstance(model, LstmForecaster):
        pred = model.predict_raw(x)
    else:
        pred = model.predict_series(data)[1:]
    return [float(v) for v in np.mean((pred - y) ** 2, axis=0)]


def pretrain_seed(data, model_type: str = "lstm", path=None, *, seed: int = 0,
                  epochs: int = 150, lr: float = 1e-3, bayesian: bool = True):
    """Fit the seed model on the first two thirds of ``data``.

    Returns ``(forecaster, PretrainInfo)`` and writes the model file when
    ``path`` is given.
    """
    data = _as_matrix(data)
    if len(data) < MIN_PRETRAIN:
        raise TooShort(f"pretraining needs at least {MIN_PRETRAIN} records, got {len(data)}")
    n_train, n_val = split_pretraining(len(data))
    train, val = data[:n_train], data[n_train:]
    losses: list[float] = []
    if model_type == "arma":
        before = [float(v) for v in np.mean((val[1:] - val[1:].mean(axis=0)) ** 2, axis=0)]
        model: Forecaster = ArmaForecaster.fit(train)
        # residual spread is measured on held-out data
        model.set_residuals(val)
    elif model_type == "lstm":
        scaler = Scaler.fit(train)
        model = LstmForecaster(LstmNet.init(seed=seed), scaler, bayesian=bayesian, seed=seed)
        before = _channel_mse(model, val)
        losses = model.train_on(train, epochs, lr=lr, seed=seed)
        model.set_residuals(val)
    else:
        raise ValueError(f"cannot pretrain model type {model_type!r}")
    info = PretrainInfo(len(data), n_train, n_val, before, _channel_mse(model, val), losses)
    if path is not None:
        model.save(path)
    return model, info

"""ARMA(1,1) forecaster, one univariate model per metric channel.

Recursion: ``y_t = mu + eps_t + theta * eps_{t-1} + phi * y_{t-1}``. The
one-step forecast drops the unknown ``eps_t``. Fitting is conditional least
squares with ``eps_0 = 0``; the intercept is tied to the sample mean through
``mu = ybar * (1 - phi)`` so the fitted process keeps the observed level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..telemetry import CHANNELS, MetricSample, channel_index
from .base import Forecaster, ModelInvalid, NonFinite, Prediction, TooShort

MIN_HISTORY = 20
BOUND = 0.99
_GRID = np.round(np.linspace(-0.95, 0.95, 39), 10)


@dataclass(frozen=True)
class ArmaModel:
    mu: float
    phi: float
    theta: float

    def __post_init__(self):
        if not (abs(self.phi) < 1 and abs(self.theta) < 1):
            raise ValueError("ARMA coefficients must satisfy |phi| < 1 and |theta| < 1")


def arma_predict(model, y_prev, eps_prev):
    """One-step forecast ``mu + theta * eps_prev + phi * y_prev``.

    Works elementwise when the model fields and inputs are arrays.
    """
    if model is None:
        raise ModelInvalid("ARMA model is not fitted")
    return model.mu + model.theta * eps_prev + model.phi * y_prev


def _check(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size < MIN_HISTORY:
        raise TooShort(f"need at least {MIN_HISTORY} observations, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise NonFinite("series contains non-finite values")
    return y


def _sse(y, ybar, phi, theta) -> float:
    return float(_kernels.arma_css(y, ybar * (1.0 - phi), phi, theta))


def _refine(y, ybar, phi, theta, free_phi=True, free_theta=True, step=0.05, tol=1e-6):
    """Coordinate descent on a shrinking local grid of 9 points per axis."""
    best = _sse(y, ybar, phi, theta)
    offsets = np.arange(-4, 5)
    while step > tol:
        moved = False
        for axis in (0, 1):
            if (axis == 0 and not free_phi) or (axis == 1 and not free_theta):
                continue
            center = phi if axis == 0 else theta
            for cand in np.clip(center + step * offsets, -BOUND, BOUND):
                p, t = (cand, theta) if axis == 0 else (phi, cand)
                s = _sse(y, ybar, p, t)
                if s < best - 1e-15 * max(1.0, best):
                    best, phi, theta, moved = s, float(p), float(t), True
        if not moved:
            step /= 4.0
    return phi, theta, best


def _bic(sse: float, n: int, k: int) -> float:
    return n * math.log(max(sse, 1e-300) / n) + k * math.log(n)


def arma_fit(history, start: tuple[float, float] | None = None) -> ArmaModel:
    """Conditional-least-squares fit of one channel.

    Without ``start`` a coarse (phi, theta) grid seeds the search and the
    constant, AR-only, MA-only and full models compete on BIC, which keeps a
    white-noise series from wandering along the ``phi = -theta`` ridge. With
    ``start`` only the local refinement runs (used for fine-tuning).
    """
    y = _check(history)
    ybar = float(y.mean())
    if float(y.std()) == 0.0:
        return ArmaModel(ybar, 0.0, 0.0)
    if start is not None:
        phi, theta, _ = _refine(y, ybar, *start, step=0.02)
        return ArmaModel(ybar * (1.0 - phi), phi, theta)

    grid = np.asarray(_kernels.arma_grid(y, ybar, _GRID, _GRID))
    i, j = np.unravel_index(int(np.argmin(grid)), grid.shape)
    zero = int(np.argmin(np.abs(_GRID)))
    n_eff = y.size - 1
    candidates = [((0.0, 0.0), _sse(y, ybar, 0.0, 0.0), 0)]
    ar_phi = float(_GRID[int(np.argmin(grid[:, zero]))])
    phi_a, _, sse_a = _refine(y, ybar, ar_phi, 0.0, free_theta=False)
    candidates.append(((phi_a, 0.0), sse_a, 1))
    ma_theta = float(_GRID[int(np.argmin(grid[zero, :]))])
    _, theta_m, sse_m = _refine(y, ybar, 0.0, ma_theta, free_phi=False)
    candidates.append(((0.0, theta_m), sse_m, 1))
    phi_f, theta_f, sse_f = _refine(y, ybar, float(_GRID[i]), float(_GRID[j]))
    candidates.append(((phi_f, theta_f), sse_f, 2))
    (phi, theta), _, _ = min(candidates, key=lambda c: (_bic(c[1], n_eff, c[2]), c[2]))
    return ArmaModel(ybar * (1.0 - phi), phi, theta)


def arma_residuals(model: ArmaModel, y) -> np.ndarray:
    _, resid = _kernels.arma_filter(np.asarray(y, dtype=float), model.mu, model.phi, model.theta)
    return np.asarray(resid)


class ArmaForecaster(Forecaster):
    """Five independent ARMA(1,1) channels behind the forecaster protocol."""

    model_type = "arma"

    def __init__(self, mu, phi, theta, resid_std=None):
        self.mu = np.asarray(mu, dtype=float).copy()
        self.phi = np.asarray(phi, dtype=float).copy()
        self.theta = np.asarray(theta, dtype=float).copy()
        n = len(CHANNELS)
        if not (self.mu.shape == self.phi.shape == self.theta.shape == (n,)):
            raise ValueError(f"ARMA parameters must have shape ({n},)")
        self.resid_std = (np.zeros(n) if resid_std is None
                          else np.asarray(resid_std, dtype=float).copy())
        self.reset_state()

    @classmethod
    def fit(cls, data: np.ndarray) -> "ArmaForecaster":
        data = np.asarray(data, dtype=float)
        models = [arma_fit(data[:, c]) for c in range(data.shape[1])]
        return cls([m.mu for m in models], [m.phi for m in models], [m.theta for m in models])

    def channel(self, c: int) -> ArmaModel:
        return ArmaModel(float(self.mu[c]), float(self.phi[c]), float(self.theta[c]))

    def is_valid(self) -> bool:
        return bool(np.all(np.abs(self.phi) < 1) and np.all(np.abs(self.theta) < 1)
                    and np.all(np.isfinite(self.mu)))

    def reset_state(self) -> None:
        self._last_pred: np.ndarray | None = None
        self._last_tick: int | None = None

    def predict(self, sample: MetricSample, key: str = "cpu") -> Prediction:
        channel_index(key)
        y = sample.vector()
        if self._last_pred is not None and self._last_tick == sample.tick - 1:
            eps = y - self._last_pred
        else:
            eps = np.zeros_like(y)
        pred = arma_predict(self, y, eps)
        self._last_pred, self._last_tick = pred, sample.tick
        return Prediction(pred, None)

    def predict_series(self, data: np.ndarray) -> np.ndarray:
        """One-step forecasts for every row after the first (row 0 is nan)."""
        data = np.asarray(data, dtype=float)
        out = np.empty_like(data)
        for c in range(data.shape[1]):
            p, _ = _kernels.arma_filter(data[:, c], self.mu[c], self.phi[c], self.theta[c])
            out[:, c] = p
        return out

    def refit(self, data: np.ndarray, warm: bool) -> "ArmaForecaster":
        data = np.asarray(data, dtype=float)
        models = []
        for c in range(data.shape[1]):
            start = (float(self.phi[c]), float(self.theta[c])) if warm else None
            models.append(arma_fit(data[:, c], start=start))
        new = ArmaForecaster([m.mu for m in models], [m.phi for m in models],
                             [m.theta for m in models], self.resid_std)
        new.set_residuals(data)
        return new

    def set_residuals(self, data: np.ndarray) -> None:
        pred = self.predict_series(data)[1:]
        if len(pred):
            self.resid_std = np.sqrt(np.mean((pred - np.asarray(data)[1:]) ** 2, axis=0))

    def header(self) -> dict:
        return {"order": [1, 1], "window": 1}

    def params(self) -> dict[str, np.ndarray]:
        return {"mu": self.mu, "phi": self.phi, "theta": self.theta, "resid_std": self.resid_std}

    @classmethod
    def from_parts(cls, header: dict, params: dict[str, np.ndarray]) -> "ArmaForecaster":
        return cls(params["mu"], params["phi"], params["theta"], params.get("resid_std"))

"""Small LSTM forecaster: one recurrent layer, ReLU dense head, Adam.

Gradients are computed by hand with backpropagation through time, so the
model works on numpy alone. Gate blocks are stacked in the order input,
forget, candidate, output.
"""
from __future__ import annotations

import numpy as np

from ..telemetry import CHANNELS, MetricSample, channel_index
from .base import (Forecaster, NonFinite, Prediction, Scaler, confidence_from_jump,
                   transitions)

HIDDEN = 50
N_OUT = len(CHANNELS)
PARAM_NAMES = ("W_x", "W_h", "b", "W_y", "b_y")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LstmNet:
    def __init__(self, params: dict[str, np.ndarray]):
        self.p = {k: np.asarray(params[k], dtype=np.float64).copy() for k in PARAM_NAMES}
        self.n_in, four_h = self.p["W_x"].shape
        self.hidden = four_h // 4
        self.n_out = self.p["W_y"].shape[1]

    @classmethod
    def init(cls, n_in: int = N_OUT, hidden: int = HIDDEN, n_out: int = N_OUT,
             seed: int = 0) -> "LstmNet":
        rng = np.random.default_rng(seed)
        lim_x = np.sqrt(6.0 / (n_in + 4 * hidden))
        q, r = np.linalg.qr(rng.standard_normal((4 * hidden, hidden)))
        q = q * np.sign(np.diag(r))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0  # forget-gate bias
        lim_y = np.sqrt(6.0 / (hidden + n_out))
        return cls({
            "W_x": rng.uniform(-lim_x, lim_x, (n_in, 4 * hidden)),
            "W_h": q.T.copy(),
            "b": b,
            "W_y": rng.uniform(-lim_y, lim_y, (hidden, n_out)),
            "b_y": np.full(n_out, 0.1),  # keeps ReLU outputs alive at start
        })

    @classmethod
    def zeros(cls, n_in: int = N_OUT, hidden: int = HIDDEN, n_out: int = N_OUT) -> "LstmNet":
        return cls({
            "W_x": np.zeros((n_in, 4 * hidden)), "W_h": np.zeros((hidden, 4 * hidden)),
            "b": np.zeros(4 * hidden), "W_y": np.zeros((hidden, n_out)), "b_y": np.zeros(n_out),
        })

    def copy(self) -> "LstmNet":
        return LstmNet(self.p)

    def finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.p.values())

    # -- forward ---------------------------------------------------------
    def step(self, x, h, c):
        H = self.hidden
        z = x @ self.p["W_x"] + h @ self.p["W_h"] + self.p["b"]
        i = _sigmoid(z[..., :H])
        f = _sigmoid(z[..., H:2 * H])
        g = np.tanh(z[..., 2 * H:3 * H])
        o = _sigmoid(z[..., 3 * H:])
        c_new = f * c + i * g
        h_new = o * np.tanh(c_new)
        return h_new, c_new, (i, f, g, o)

    def forward(self, X, state=None, keep=False):
        """Run ``X`` of shape (batch, time, inputs); return ReLU outputs."""
        X = np.asarray(X, dtype=float)
        B, T, _ = X.shape
        H = self.hidden
        if state is None:
            h = np.zeros((B, H))
            c = np.zeros((B, H))
        else:
            h, c = state
        cache = [] if keep else None
        for t in range(T):
            h_prev, c_prev = h, c
            h, c, gates = self.step(X[:, t, :], h, c)
            if keep:
                cache.append((X[:, t, :], h_prev, c_prev, c, gates))
        pre = h @ self.p["W_y"] + self.p["b_y"]
        y = np.maximum(pre, 0.0)
        if keep:
            return y, (h, c), (cache, h, pre)
        return y, (h, c)

    def loss(self, X, Y) -> float:
        y, _ = self.forward(X)
        return float(np.mean((y - Y) ** 2))

    def loss_and_grads(self, X, Y):
        """Mean squared error over all outputs and its gradient."""
        Y = np.asarray(Y, dtype=float)
        y, _, (cache, h_last, pre) = self.forward(X, keep=True)
        B = y.shape[0]
        diff = y - Y
        loss = float(np.mean(diff ** 2))
        H = self.hidden
        g = {k: np.zeros_like(v) for k, v in self.p.items()}
        dpre = (2.0 / diff.size) * diff * (pre > 0)
        g["W_y"] = h_last.T @ dpre
        g["b_y"] = dpre.sum(axis=0)
        dh = dpre @ self.p["W_y"].T
        dc = np.zeros((B, H))
        Wh_T = self.p["W_h"].T
        for x_t, h_prev, c_prev, c_t, (i, f, gg, o) in reversed(cache):
            tanh_c = np.tanh(c_t)
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c ** 2)
            di = dc * gg
            dgg = dc * i
            df = dc * c_prev
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dgg * (1.0 - gg ** 2),
                do * o * (1.0 - o),
            ], axis=1)
            g["W_x"] += x_t.T @ dz
            g["W_h"] += h_prev.T @ dz
            g["b"] += dz.sum(axis=0)
            dh = dz @ Wh_T
            dc = dc * f
        return loss, g


def lstm_forward(net: LstmNet, x, state=None):
    """Single step on one scaled 5-vector; returns (outputs, (h, c))."""
    x = np.asarray(x, dtype=float).reshape(1, 1, -1)
    if state is not None:
        state = (np.asarray(state[0]).reshape(1, -1), np.asarray(state[1]).reshape(1, -1))
    y, (h, c) = net.forward(x, state)
    return y[0], (h[0], c[0])


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for k, grad in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * grad
            self.v[k] = b2 * self.v[k] + (1 - b2) * grad * grad
            params[k] -= self.lr * (self.m[k] / corr1) / (np.sqrt(self.v[k] / corr2) + self.eps)


def lstm_train(net: LstmNet, X, Y, epochs: int, lr: float = 1e-3, batch_size: int = 32,
               seed: int = 0) -> list[float]:
    """Adam on minibatch MSE; ``net`` ends with its best full-data weights.

    Returns the full-data loss before training followed by one entry per
    epoch. The kept weights never score worse than the starting ones.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if len(X) == 0:
        raise ValueError("empty training set")
    if X.ndim == 2:
        X = X[:, None, :]
    losses = [net.loss(X, Y)]
    if epochs <= 0:
        return losses
    rng = np.random.default_rng(seed)
    opt = Adam(net.p, lr=lr)
    best_loss, best = losses[0], {k: v.copy() for k, v in net.p.items()}
    n = len(X)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, grads = net.loss_and_grads(X[idx], Y[idx])
            opt.step(net.p, grads)
        if not net.finite():
            net.p = best
            raise NonFinite("LSTM weights diverged")
        loss = net.loss(X, Y)
        losses.append(loss)
        if loss < best_loss:
            best_loss, best = loss, {k: v.copy() for k, v in net.p.items()}
    net.p = best
    return losses


class LstmForecaster(Forecaster):
    model_type = "lstm"

    def __init__(self, net: LstmNet, scaler: Scaler, resid_std=None, bayesian: bool = True,
                 seed: int = 0):
        self.net = net
        self.scaler = scaler
        self.resid_std = (np.zeros(N_OUT) if resid_std is None
                          else np.asarray(resid_std, dtype=float).copy())
        self.bayesian = bool(bayesian)
        self.seed = int(seed)

    def is_valid(self) -> bool:
        return self.net.finite() and self.net.n_out == N_OUT

    def is_bayesian(self) -> bool:
        return self.bayesian

    def predict_raw(self, values: np.ndarray) -> np.ndarray:
        z = self.scaler.transform(np.atleast_2d(values))
        y, _ = self.net.forward(z[:, None, :])
        return self.scaler.inverse(y)

    def predict(self, sample: MetricSample, key: str = "cpu") -> Prediction:
        k = channel_index(key)
        v = sample.vector()
        pred = self.predict_raw(v)[0]
        conf = None
        if self.bayesian:
            conf = confidence_from_jump(float(pred[k]), float(v[k]), float(self.resid_std[k]))
        return Prediction(pred, conf)

    def dataset(self, history: np.ndarray):
        x, y = transitions(history)
        return self.scaler.transform(x)[:, None, :], self.scaler.transform(y)

    def train_on(self, history: np.ndarray, epochs: int, lr: float = 1e-3,
                 seed: int | None = None) -> list[float]:
        X, Y = self.dataset(history)
        return lstm_train(self.net, X, Y, epochs, lr=lr, seed=self.seed if seed is None else seed)

    def set_residuals(self, data: np.ndarray) -> None:
        x, y = transitions(data)
        if len(x):
            self.resid_std = np.sqrt(np.mean((self.predict_raw(x) - y) ** 2, axis=0))

    def reinitialized(self, seed: int) -> "LstmForecaster":
        net = LstmNet.init(self.net.n_in, self.net.hidden, self.net.n_out, seed=seed)
        return LstmForecaster(net, self.scaler, self.resid_std, self.bayesian, seed)

    def header(self) -> dict:
        return {"hidden": self.net.hidden, "window": 1, "bayesian": self.bayesian,
                "seed": self.seed}

    def params(self) -> dict[str, np.ndarray]:
        out = {k: self.net.p[k] for k in PARAM_NAMES}
        out["scaler_min"] = self.scaler.lo
        out["scaler_max"] = self.scaler.hi
        out["resid_std"] = self.resid_std
        return out

    @classmethod
    def from_parts(cls, header: dict, params: dict[str, np.ndarray]) -> "LstmForecaster":
        net = LstmNet({k: params[k] for k in PARAM_NAMES})
        return cls(net, Scaler(params["scaler_min"], params["scaler_max"]),
                   params.get("resid_std"), header.get("bayesian", True), header.get("seed", 0))

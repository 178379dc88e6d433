"""Pure-Python reference kernels.

Used when the compiled extension is unavailable, and as the baseline in
``benchmarks/bench_kernels.py``.
"""
from __future__ import annotations

import math

import numpy as np


def arma_css(y, mu: float, phi: float, theta: float) -> float:
    """Sum of squared one-step residuals of the ARMA(1,1) recursion.

    The first observation only seeds the recursion; the innovation before it
    is taken as zero.
    """
    n = len(y)
    if n < 2:
        return 0.0
    eps = 0.0
    sse = 0.0
    prev = float(y[0])
    for t in range(1, n):
        cur = float(y[t])
        eps = cur - (mu + theta * eps + phi * prev)
        sse += eps * eps
        prev = cur
    return sse


def arma_filter(y, mu: float, phi: float, theta: float):
    """One-step predictions and residuals over ``y``.

    ``pred[t]`` is the forecast of ``y[t]`` made after seeing ``y[t-1]``;
    ``pred[0]`` is ``nan`` and ``resid[0]`` is 0.
    """
    n = len(y)
    pred = [math.nan] * n
    resid = [0.0] * n
    eps = 0.0
    for t in range(1, n):
        p = mu + theta * eps + phi * float(y[t - 1])
        eps = float(y[t]) - p
        pred[t] = p
        resid[t] = eps
    return np.array(pred), np.array(resid)


def arma_grid(y, ybar: float, phis, thetas):
    """Evaluate the residual sum of squares on a (phi, theta) grid.

    The intercept is tied to the sample mean as ``ybar * (1 - phi)``.
    Rows are indexed by phi, columns by theta.
    """
    out = []
    for phi in phis:
        mu = ybar * (1.0 - phi)
        out.append([arma_css(y, mu, phi, th) for th in thetas])
    return np.array(out, dtype=float)

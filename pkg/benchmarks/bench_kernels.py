"""Compare the compiled and pure-Python ARMA kernels.

Usage: python3 benchmarks/bench_kernels.py [--n 1800] [--repeat 5]
"""
from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from ppasim import _kernels


def synthetic(n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    y = np.empty(n)
    prev_y, prev_e = 0.0, 0.0
    for t in range(n):
        e = rng.normal(0.0, 1.0)
        prev_y = 2.0 + e + 0.3 * prev_e + 0.6 * prev_y
        prev_e = e
        y[t] = prev_y
    return y


def bench(backend, y, grid, repeat: int) -> dict[str, float]:
    ybar = float(y.mean())
    cases = {
        "arma_css": lambda: backend.arma_css(y, 1.0, 0.5, 0.2),
        "arma_filter": lambda: backend.arma_filter(y, 1.0, 0.5, 0.2),
        "arma_grid_39x39": lambda: backend.arma_grid(y, ybar, grid, grid),
    }
    out = {}
    for name, fn in cases.items():
        number = 1 if name.startswith("arma_grid") else 20
        best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
        out[name] = best
    return out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=1800)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    y = synthetic(args.n)
    grid = np.round(np.linspace(-0.95, 0.95, 39), 10)
    results = {"n": args.n, "python": bench(_kernels.python_backend, y, grid, args.repeat)}
    if _kernels.compiled_backend is not None:
        results["compiled"] = bench(_kernels.compiled_backend, y, grid, args.repeat)
        results["speedup"] = {k: results["python"][k] / results["compiled"][k]
                              for k in results["python"]}
        same = np.allclose(_kernels.python_backend.arma_grid(y, y.mean(), grid, grid),
                           _kernels.compiled_backend.arma_grid(y, y.mean(), grid, grid),
                           rtol=1e-12, atol=0.0)
        results["grids_agree"] = bool(same)
    else:
        results["compiled"] = None
    print(json.dumps(results, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Formulator side: metric vectors, the metrics history file, run statistics."""
from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

CHANNELS = ("cpu", "ram", "net_in", "net_out", "custom")
HISTORY_HEADER = "tick,time," + ",".join(CHANNELS)


class UnknownChannel(KeyError):
    pass


class LengthMismatch(ValueError):
    pass


def channel_index(name: str) -> int:
    try:
        return CHANNELS.index(name)
    except ValueError:
        raise UnknownChannel(f"unknown metric channel {name!r}; expected one of {CHANNELS}") from None


@dataclass(frozen=True)
class MetricSample:
    tick: int
    time: float
    cpu: float
    ram: float
    net_in: float
    net_out: float
    custom: float

    def __post_init__(self):
        for name in CHANNELS:
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"channel {name} must be finite and >= 0, got {v}")

    def vector(self) -> np.ndarray:
        return np.array([self.cpu, self.ram, self.net_in, self.net_out, self.custom], dtype=float)

    def get(self, name: str) -> float:
        channel_index(name)
        return getattr(self, name)

    @classmethod
    def from_vector(cls, tick: int, time: float, values: Sequence[float]) -> "MetricSample":
        v = [max(0.0, float(x)) for x in values]
        return cls(tick, time, *v)

    def row(self) -> str:
        return f"{self.tick},{self.time!r}," + ",".join(repr(float(getattr(self, c))) for c in CHANNELS)


class MetricsHistory:
    """Append-only metric log, optionally mirrored to a CSV file.

    ``clear`` swaps in an empty file atomically so a concurrent reader sees
    either the old or the new content, never a partial write.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._samples: list[MetricSample] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._swap_in(HISTORY_HEADER + "\n")

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)

    @property
    def samples(self) -> list[MetricSample]:
        return list(self._samples)

    def append(self, sample: MetricSample) -> None:
        if self._samples and sample.tick <= self._samples[-1].tick:
            raise ValueError("metric ticks must be strictly increasing")
        self._samples.append(sample)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(sample.row() + "\n")

    def matrix(self) -> np.ndarray:
        if not self._samples:
            return np.empty((0, len(CHANNELS)))
        return np.vstack([s.vector() for s in self._samples])

    def clear(self) -> None:
        self._samples = []
        if self.path is not None:
            self._swap_in(HISTORY_HEADER + "\n")

    def _swap_in(self, text: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".history-")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, self.path)

    @classmethod
    def read(cls, path: str | Path) -> list[MetricSample]:
        return read_metrics_csv(path)


def read_metrics_csv(path: str | Path) -> list[MetricSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if cols[:2] != ["tick", "time"] or not set(CHANNELS) <= set(cols):
            raise ValueError(f"{path}: not a metrics history file (header {header!r})")
        idx = {c: i for i, c in enumerate(cols)}
        for line in fh:
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(",")
            out.append(MetricSample(int(parts[idx["tick"]]), float(parts[idx["time"]]),
                                    *(float(parts[idx[c]]) for c in CHANNELS)))
    return out


def write_metrics_csv(path: str | Path, samples: Iterable[MetricSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for s in samples:
            fh.write(s.row() + "\n")


def rir(cpu_idle: float, cpu_requested: float) -> float:
    """Relative idle resources; ``nan`` marks an undefined sample."""
    if cpu_requested <= 0:
        return math.nan
    return cpu_idle / cpu_requested


def prediction_mse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise LengthMismatch(f"predicted has {p.shape}, actual has {a.shape}")
    if p.size == 0:
        raise LengthMismatch("need at least one pair")
    return float(np.mean((p - a) ** 2))


def welch_pvalue(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided p-value of Welch's unequal-variance t-test.

    Degenerate inputs are resolved by hand: identical constant samples give
    1.0, distinct constant samples give 0.0.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.size < 2 or y.size < 2:
        return math.nan
    vx, vy = x.var(ddof=1), y.var(ddof=1)
    if vx == 0 and vy == 0:
        return 1.0 if x.mean() == y.mean() else 0.0
    if np.array_equal(np.sort(x), np.sort(y)):
        return 1.0
    return float(stats.ttest_ind(x, y, equal_var=False).pvalue)


def mean_std(values: Iterable[float]) -> tuple[float, float]:
    v = np.asarray([x for x in values if x is not None and not math.isnan(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    return float(v.mean()), float(v.std())


@dataclass
class RunStatistics:
    response: dict[str, dict[str, float]] = field(default_factory=dict)
    rir: dict[str, dict[str, float]] = field(default_factory=dict)
    mse: dict[str, float] = field(default_factory=dict)
    decisions: dict[str, dict[str, int]] = field(default_factory=dict)
    completed: int = 0
    pending: int = 0

    def as_dict(self) -> dict:
        return {
            "response_time": self.response,
            "rir": self.rir,
            "prediction_mse": self.mse,
            "decisions": self.decisions,
            "tasks_completed": self.completed,
            "tasks_pending": self.pending,
        }


def summarize(report) -> RunStatistics:
    """Per-kind response time, per-tier RIR, per-tier prediction MSE."""
    st = RunStatistics()
    by_kind: dict[str, list[float]] = {}
    for task in report.tasks:
        rt = task.response_time
        if rt is None:
            st.pending += 1
            continue
        st.completed += 1
        by_kind.setdefault(task.kind.value, []).append(rt)
    for kind, vals in sorted(by_kind.items()):
        m, s = mean_std(vals)
        st.response[kind] = {"mean": m, "std": s, "count": len(vals)}
    for tier, rows in sorted(report.metrics.items()):
        m, s = mean_std(r.rir for r in rows)
        st.rir[tier] = {"mean": m, "std": s}
    for tier, pairs in sorted(report.prediction_pairs().items()):
        if pairs:
            p, a = zip(*pairs)
            st.mse[tier] = prediction_mse(p, a)
    for tier, decs in sorted(report.decisions.items()):
        counts: dict[str, int] = {}
        for d in decs:
            counts[d.provenance.value] = counts.get(d.provenance.value, 0) + 1
        st.decisions[tier] = dict(sorted(counts.items()))
    return st


def response_times(report, kind: str) -> list[float]:
    return [t.response_time for t in report.tasks
            if t.kind.value == kind and t.response_time is not None]


def rir_series(report, tier: str) -> list[float]:
    return [r.rir for r in report.metrics.get(tier, []) if not math.isnan(r.rir)]

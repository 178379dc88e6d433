"""Client request generation: Random Access bursts and per-minute trace replay.

Both generators are pure functions of their seed. Draws come from numpy's
PCG64 bit generator.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .cluster import CLOUD_ZONE, Tier

DEFAULT_EDGE_ZONES = ("zone-1", "zone-2")
EIGEN_PROBABILITY = 0.1
BURST_SIZE_RANGE = (20, 200)


class TaskKind(str, Enum):
    SORT = "sort"
    EIGEN = "eigen"


# Abstract cost: n log n for a 3000-element sort, n^3 for a 1000x1000 eigenproblem.
WORK_UNITS = {TaskKind.SORT: 1.0e4, TaskKind.EIGEN: 1.0e9}


class LoadPattern(str, Enum):
    LIGHT = "light"
    MEDIUM = "medium"
    HEAVY = "heavy"

    @property
    def sleep_range(self) -> tuple[float, float]:
        return _SLEEP_RANGES[self]


_SLEEP_RANGES = {
    LoadPattern.HEAVY: (0.1, 0.3),
    LoadPattern.MEDIUM: (0.5, 1.0),
    LoadPattern.LIGHT: (2.0, 5.0),
}
_PATTERNS = (LoadPattern.LIGHT, LoadPattern.MEDIUM, LoadPattern.HEAVY)


class ParseError(ValueError):
    pass


class EmptyTrace(ValueError):
    pass


@dataclass
class TaskRequest:
    id: int
    kind: TaskKind
    origin_zone: str
    arrival_time: float
    start_time: float | None = None
    completion_time: float | None = None
    pod: str | None = None

    @property
    def work(self) -> float:
        return WORK_UNITS[self.kind]

    @property
    def response_time(self) -> float | None:
        if self.completion_time is None:
            return None
        return self.completion_time - self.arrival_time


@dataclass
class Burst:
    """One pass of the outer Random Access loop."""
    load_type: LoadPattern
    request_num: int
    requests: list[TaskRequest] = field(default_factory=list)
    sleeps: list[float] = field(default_factory=list)


def _draw_kind(rng: np.random.Generator) -> TaskKind:
    # one eigen among ten equally likely slots
    return TaskKind.EIGEN if rng.integers(10) == 9 else TaskKind.SORT


def random_access_bursts(seed: int, duration: float,
                         zones: Sequence[str] = DEFAULT_EDGE_ZONES) -> Iterator[Burst]:
    """Yield Random Access bursts until the clock passes ``duration``.

    Each request is followed by one sleep drawn from its burst's pattern. The
    last burst is truncated at the first request whose arrival would exceed
    ``duration``.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    lo_n, hi_n = BURST_SIZE_RANGE
    clock = 0.0
    next_id = 0
    while True:
        load_type = _PATTERNS[int(rng.integers(3))]
        request_num = int(rng.integers(lo_n, hi_n + 1))
        lo, hi = load_type.sleep_range
        burst = Burst(load_type, request_num)
        for _ in range(request_num):
            if clock > duration:
                if burst.requests:
                    yield burst
                return
            kind = _draw_kind(rng)
            zone = zones[int(rng.integers(len(zones)))]
            burst.requests.append(TaskRequest(next_id, kind, zone, clock))
            next_id += 1
            sleep = float(rng.uniform(lo, hi))
            burst.sleeps.append(sleep)
            clock += sleep
        yield burst


def random_access_stream(seed: int, duration: float,
                         zones: Sequence[str] = DEFAULT_EDGE_ZONES) -> Iterator[TaskRequest]:
    for burst in random_access_bursts(seed, duration, zones):
        yield from burst.requests


@dataclass
class TraceFile:
    rows: list[tuple[int, int]]
    scale_factor: float = 1.0

    @property
    def total(self) -> int:
        return sum(c for _, c in self.rows)

    @property
    def duration(self) -> float:
        return 60.0 * (self.rows[-1][0] + 1) if self.rows else 0.0


def _round_half_up(x: float) -> int:
    return max(0, int(math.floor(x + 0.5)))


def load_trace(path: str | Path, scale_factor: float = 1.0) -> TraceFile:
    """Read a ``minute,count`` CSV and scale its counts."""
    if scale_factor <= 0:
        raise ValueError("scale_factor must be positive")
    rows: list[tuple[int, int]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyTrace(f"{path}: empty file")
        if [h.strip() for h in header] != ["minute", "count"]:
            raise ParseError(f"{path}: expected header 'minute,count', got {header!r}")
        prev = None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                minute = int(row[0])
                raw = float(row[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not math.isfinite(raw) or raw < 0:
                raise ParseError(f"{path}:{lineno}: count must be a finite non-negative number")
            if prev is not None and minute <= prev:
                raise ParseError(f"{path}:{lineno}: minute index not strictly increasing")
            prev = minute
            rows.append((minute, _round_half_up(raw * scale_factor)))
    if not rows:
        raise EmptyTrace(f"{path}: no data rows")
    return TraceFile(rows, scale_factor)


def write_trace(path: str | Path, counts: Sequence[int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("minute,count\n")
        for m, c in enumerate(counts):
            fh.write(f"{m},{int(c)}\n")


def trace_minute(minute: int, count: int, rng: np.random.Generator, first_id: int,
                 zones: Sequence[str] = DEFAULT_EDGE_ZONES) -> list[TaskRequest]:
    """Arrivals for one trace minute, sorted by time."""
    if count <= 0:
        return []
    times = np.sort(60.0 * minute + 60.0 * rng.random(count))
    out = []
    for i, t in enumerate(times):
        kind = _draw_kind(rng)
        zone = zones[int(rng.integers(len(zones)))]
        out.append(TaskRequest(first_id + i, kind, zone, float(t)))
    return out


def trace_stream(trace: TraceFile, seed: int,
                 zones: Sequence[str] = DEFAULT_EDGE_ZONES) -> Iterator[TaskRequest]:
    if not trace.rows:
        raise EmptyTrace("trace has no rows")
    rng = np.random.default_rng(seed)
    next_id = 0
    for minute, count in trace.rows:
        batch = trace_minute(minute, count, rng, next_id, zones)
        next_id += len(batch)
        yield from batch


def route(request: TaskRequest) -> tuple[Tier, str]:
    """Sort stays at the edge of its origin zone; Eigen goes to the cloud."""
    if request.kind is TaskKind.SORT:
        return Tier.EDGE, request.origin_zone
    return Tier.CLOUD, CLOUD_ZONE


# -- synthetic traces --------------------------------------------------------

def diurnal_trace(seed: int = 1995, days: int = 2, base: float = 70.0, peak: float = 240.0,
                  noise: float = 0.12) -> list[int]:
    """Two-day web-server-like per-minute request counts.

    A daily cycle with a mid-afternoon peak and a night trough, a slower
    weekday/weekend amplitude change, short multiplicative bursts and Poisson
    sampling. Used to build the bundled sample trace.
    """
    rng = np.random.default_rng(seed)
    minutes = np.arange(days * 24 * 60)
    hour = (minutes / 60.0) % 24.0
    day = minutes // (24 * 60)
    daily = 0.5 * (1.0 - np.cos(2.0 * np.pi * (hour - 3.0) / 24.0))  # trough at 03:00
    daily = daily ** 1.5
    amp = np.where(day % 2 == 0, 1.0, 0.8)
    level = base + (peak - base) * amp * daily
    # slowly varying log-normal modulation (AR(1) at minute scale)
    mod = np.empty(len(minutes))
    x = 0.0
    for i in range(len(minutes)):
        x = 0.97 * x + noise * math.sqrt(1 - 0.97 ** 2) * rng.standard_normal()
        mod[i] = x
    level = level * np.exp(mod)
    # occasional short bursts
    n_bursts = 6 * days
    for start in rng.integers(0, len(minutes) - 30, size=n_bursts):
        width = int(rng.integers(5, 25))
        level[start:start + width] *= 1.0 + 0.6 * rng.random()
    return [int(c) for c in rng.poisson(level)]


def drifting_trace(seed: int = 7, hours: float = 5.0, start: float = 60.0, end: float = 260.0,
                   period_min: float = 40.0, swing: float = 0.35) -> list[int]:
    """Per-minute counts whose level ramps from ``start`` to ``end``.

    A periodic swing rides on the ramp so consecutive model-update windows
    see a shifted distribution.
    """
    rng = np.random.default_rng(seed)
    n = int(round(hours * 60))
    m = np.arange(n)
    ramp = start + (end - start) * m / max(1, n - 1)
    level = ramp * (1.0 + swing * np.sin(2.0 * np.pi * m / period_min))
    return [int(c) for c in rng.poisson(np.maximum(level, 0.0))]

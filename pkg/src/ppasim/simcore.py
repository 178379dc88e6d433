"""Discrete-event engine: task service, pod lifecycle, control and update loops.

Workers run one task at a time at their full CPU request. Each (tier, zone)
group has a FIFO dispatcher that hands arrivals to the Ready pod with the
shortest local queue (ties to the lowest pod id) and holds them when no pod
is Ready.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterable, Iterator

import numpy as np

from .autoscaler import ScalingDecision
from .cluster import ClusterState, PodInstance, PodSpec, PodState, ScaleAction, Tier
from .telemetry import MetricSample, rir
from .workload import TaskKind, TaskRequest, TraceFile, WORK_UNITS, route, trace_minute

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class EventKind(IntEnum):
    # value doubles as the tie-break priority at equal timestamps
    POD_READY = 0
    TASK_COMPLETE = 1
    POD_DRAINED = 2
    TRACE_MINUTE = 3
    ARRIVAL = 4
    UPDATE_TICK = 5
    CONTROL_TICK = 6


@dataclass(frozen=True)
class ServiceModel:
    """Work units processed per millicore-second, per task kind."""
    sort_rate: float = 50.0
    eigen_rate: float = 166_667.0

    def __post_init__(self):
        if not (self.sort_rate > 0 and self.eigen_rate > 0):
            raise ConfigError("service rates must be positive")

    def rate(self, kind: TaskKind) -> float:
        return self.sort_rate if kind is TaskKind.SORT else self.eigen_rate


DEFAULT_SERVICE = ServiceModel()


def service_time(kind: TaskKind, cpu_share: float, model: ServiceModel = DEFAULT_SERVICE) -> float:
    if not cpu_share > 0:
        raise ValueError("cpu_share must be positive")
    return WORK_UNITS[kind] / (model.rate(kind) * cpu_share)


def pod_cpu_share(pod: PodInstance) -> float:
    """A running task gets the pod's whole CPU request."""
    return float(pod.spec.cpu_request)


@dataclass
class Clock:
    now: float = 0.0
    control_interval: float = 15.0
    update_interval: float = 3600.0

    def __post_init__(self):
        if not self.control_interval > 0:
            raise ConfigError("control_interval must be positive")
        if self.update_interval is not None and self.update_interval > 0:
            ratio = self.update_interval / self.control_interval
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError("update_interval must be a multiple of control_interval")


@dataclass
class TierMetrics:
    """One control-loop observation of a worker group, plus accounting."""
    tier: str
    sample: MetricSample
    cpu_requested: float
    rir: float
    replicas: int
    ready: int

    @property
    def tick(self) -> int:
        return self.sample.tick

    CSV_HEADER = "tick,time,tier,cpu,ram,net_in,net_out,custom,cpu_requested,rir,replicas,ready"

    def row(self) -> str:
        s = self.sample
        r = "" if math.isnan(self.rir) else repr(self.rir)
        return (f"{s.tick},{s.time!r},{self.tier},{s.cpu!r},{s.ram!r},{s.net_in!r},"
                f"{s.net_out!r},{s.custom!r},{self.cpu_requested!r},{r},"
                f"{self.replicas},{self.ready}")


@dataclass
class SimulationReport:
    tasks: list[TaskRequest]
    metrics: dict[str, list[TierMetrics]]
    decisions: dict[str, list[ScalingDecision]]
    updates: list[dict] = field(default_factory=list)
    capacity_violations: list[str] = field(default_factory=list)
    capacity_checks: int = 0
    events: int = 0
    control_ticks: int = 0
    horizon: float = 0.0
    key_metrics: dict[str, str] = field(default_factory=dict)

    def prediction_pairs(self) -> dict[str, list[tuple[float, float]]]:
        """(predicted key metric at tick t, observed key metric at t + 1) per tier."""
        out = {}
        for tier, decs in self.decisions.items():
            key = self.key_metrics.get(tier, "cpu")
            obs = {m.tick: m.sample.get(key) for m in self.metrics.get(tier, [])}
            out[tier] = [(d.predicted_key_metric, obs[d.tick + 1]) for d in decs
                         if d.predicted_key_metric is not None and d.tick + 1 in obs]
        return out


@dataclass
class SimConfig:
    horizon: float
    control_interval: float = 15.0
    update_interval: float | None = 3600.0
    idle_floor: float = 10.0
    service: ServiceModel = DEFAULT_SERVICE
    check_capacity: bool = False

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        Clock(0.0, self.control_interval, self.update_interval or 0.0)
        if self.idle_floor < 0:
            raise ConfigError("idle_floor must be non-negative")


@dataclass
class _PodRuntime:
    pod: PodInstance
    queue: deque = field(default_factory=deque)
    current: TaskRequest | None = None
    mark: float = 0.0
    busy_cpu: float = 0.0   # mc*s while running a task
    idle_cpu: float = 0.0   # mc*s at the idle floor
    req_cpu: float = 0.0    # mc*s of request while Ready/Terminating
    busy_ram: float = 0.0   # MB*s while running a task

    @property
    def load(self) -> int:
        return len(self.queue) + (1 if self.current is not None else 0)


@dataclass
class _TierAccount:
    arrivals: int = 0
    completions: int = 0
    busy_cpu: float = 0.0
    idle_cpu: float = 0.0
    req_cpu: float = 0.0
    busy_ram: float = 0.0


@dataclass
class TierView:
    """What a custom-metric exporter may look at."""
    tier: Tier
    queue_length: int
    in_flight: int
    ready: int
    replicas: int
    now: float


CustomMetric = Callable[[TierView], float]


def queue_length_metric(view: TierView) -> float:
    return float(view.queue_length)


class Simulation:
    """One deterministic run.

    ``arrivals`` is either an iterable of time-ordered ``TaskRequest`` or a
    ``(TraceFile, seed)`` pair replayed minute by minute.
    """

    def __init__(self, cluster: ClusterState, arrivals, autoscalers: dict,
                 specs: dict[Tier, PodSpec], config: SimConfig,
                 initial_replicas: dict[Tier, int] | None = None,
                 custom_metric: CustomMetric = queue_length_metric,
                 edge_zones: Iterable[str] | None = None):
        self.cluster = cluster
        self.autoscalers = autoscalers
        self.specs = specs
        self.cfg = config
        self.custom_metric = custom_metric
        self.now = 0.0
        self._heap: list = []
        self._seq = itertools.count()
        self._runtimes: dict[str, _PodRuntime] = {}
        self.pod_log: dict[str, dict] = {}
        self._groups: dict[tuple[Tier, str], list[_PodRuntime]] = {}
        self._dispatch: dict[tuple[Tier, str], deque] = {}
        for tier in (Tier.EDGE, Tier.CLOUD):
            for zone in cluster.zones(tier):
                self._groups[(tier, zone)] = []
                self._dispatch[(tier, zone)] = deque()
        self._acct = {t: _TierAccount() for t in (Tier.EDGE, Tier.CLOUD)}
        self.tasks: list[TaskRequest] = []
        self.metrics: dict[str, list[TierMetrics]] = {t.value: [] for t in autoscalers}
        self.decisions: dict[str, list[ScalingDecision]] = {t.value: [] for t in autoscalers}
        self.updates: list[dict] = []
        self.violations: list[str] = []
        self.capacity_checks = 0
        self.events = 0
        self.ticks = 0
        self._zones = list(edge_zones) if edge_zones is not None else cluster.edge_zones
        self._stream: Iterator[TaskRequest] | None = None
        self._trace: TraceFile | None = None
        self._trace_rng = None
        self._trace_next_id = 0
        if isinstance(arrivals, tuple) and len(arrivals) == 2 and isinstance(arrivals[0], TraceFile):
            self._trace, seed = arrivals
            self._trace_rng = np.random.default_rng(seed)
        else:
            self._stream = iter(arrivals)
        for tier in (Tier.EDGE, Tier.CLOUD):
            n = (initial_replicas or {}).get(tier, 0)
            if tier in autoscalers:
                n = max(n, autoscalers[tier].policy.min_replicas)
            if n > 0:
                self._deploy_initial(tier, n)

    # -- scheduling helpers ----------------------------------------------
    def _push(self, time: float, kind: EventKind, payload=None) -> None:
        heapq.heappush(self._heap, (time, int(kind), next(self._seq), payload))

    def _deploy_initial(self, tier: Tier, n: int) -> None:
        for action in self.cluster.scale_to(self.specs[tier], n, 0.0):
            pod = action.pod
            pod.state = PodState.READY
            pod.ready_at = 0.0
            self._add_runtime(pod)

    def _add_runtime(self, pod: PodInstance) -> _PodRuntime:
        rt = _PodRuntime(pod, mark=self.now)
        self._runtimes[pod.id] = rt
        self.pod_log[pod.id] = {"tier": pod.spec.tier_affinity.value, "zone": pod.zone,
                                "node": pod.node, "created": pod.created_at,
                                "ready": pod.ready_at}
        self._groups[(pod.spec.tier_affinity, pod.zone)].append(rt)
        return rt

    def _flush(self, rt: _PodRuntime) -> None:
        dt = self.now - rt.mark
        if dt > 0 and rt.pod.state is not PodState.STARTING:
            spec = rt.pod.spec
            rt.req_cpu += dt * spec.cpu_request
            if rt.current is not None:
                rt.busy_cpu += dt * spec.cpu_request
                rt.busy_ram += dt * spec.ram_request
            else:
                rt.idle_cpu += dt * self.cfg.idle_floor
        rt.mark = self.now

    # -- task flow ---------------------------------------------------------
    def _start(self, rt: _PodRuntime, task: TaskRequest) -> None:
        self._flush(rt)
        rt.current = task
        task.start_time = self.now
        task.pod = rt.pod.id
        dur = service_time(task.kind, pod_cpu_share(rt.pod), self.cfg.service)
        self._push(self.now + dur, EventKind.TASK_COMPLETE, rt)

    def _dispatch_one(self, group: tuple[Tier, str], task: TaskRequest) -> bool:
        best = None
        for rt in self._groups[group]:
            if rt.pod.state is not PodState.READY:
                continue
            if best is None or rt.load < best.load:
                best = rt
        if best is None:
            return False
        if best.current is None:
            self._start(best, task)
        else:
            best.queue.append(task)
        return True

    def _drain(self, group: tuple[Tier, str]) -> None:
        q = self._dispatch[group]
        while q:
            if not self._dispatch_one(group, q[0]):
                return
            q.popleft()

    def _on_arrival(self, task: TaskRequest) -> None:
        tier, zone = route(task)
        if (tier, zone) not in self._groups:
            raise ConfigError(f"request from unknown zone {zone!r}")
        self._acct[tier].arrivals += 1
        self.tasks.append(task)
        group = (tier, zone)
        if self._dispatch[group] or not self._dispatch_one(group, task):
            self._dispatch[group].append(task)

    def _on_complete(self, rt: _PodRuntime) -> None:
        self._flush(rt)
        task = rt.current
        task.completion_time = self.now
        rt.current = None
        self._acct[rt.pod.spec.tier_affinity].completions += 1
        if rt.queue:
            self._start(rt, rt.queue.popleft())
        elif rt.pod.state is PodState.TERMINATING:
            self._push(self.now, EventKind.POD_DRAINED, rt)

    def _on_ready(self, rt: _PodRuntime) -> None:
        if rt.pod.state is not PodState.STARTING or rt.pod.id not in self._runtimes:
            return
        self._flush(rt)
        rt.pod.state = PodState.READY
        self._drain((rt.pod.spec.tier_affinity, rt.pod.zone))

    def _on_drained(self, rt: _PodRuntime) -> None:
        if rt.pod.id not in self._runtimes:
            return
        self._flush(rt)
        acct = self._acct[rt.pod.spec.tier_affinity]
        acct.busy_cpu += rt.busy_cpu
        acct.idle_cpu += rt.idle_cpu
        acct.req_cpu += rt.req_cpu
        acct.busy_ram += rt.busy_ram
        del self._runtimes[rt.pod.id]
        self._groups[(rt.pod.spec.tier_affinity, rt.pod.zone)].remove(rt)
        self.cluster.remove_pod(rt.pod.id)

    def _apply(self, actions: list[ScaleAction]) -> None:
        for action in actions:
            pod = action.pod
            if action.kind == "create":
                self._add_runtime(pod)
                if pod.state is PodState.READY:
                    self._drain((pod.spec.tier_affinity, pod.zone))
                else:
                    self._push(pod.ready_at, EventKind.POD_READY, self._runtimes[pod.id])
            else:
                rt = self._runtimes[pod.id]
                group = (pod.spec.tier_affinity, pod.zone)
                if rt.queue:
                    self._dispatch[group].extendleft(reversed(rt.queue))
                    rt.queue.clear()
                    self._drain(group)
                if rt.current is None:
                    self._push(self.now, EventKind.POD_DRAINED, rt)

    # -- control loop ------------------------------------------------------
    def _tier_view(self, tier: Tier) -> TierView:
        waiting = in_flight = ready = 0
        for (t, _), q in self._dispatch.items():
            if t is tier:
                waiting += len(q)
        for (t, _), rts in self._groups.items():
            if t is not tier:
                continue
            for rt in rts:
                waiting += len(rt.queue)
                in_flight += rt.current is not None
                ready += rt.pod.state is PodState.READY
        return TierView(tier, waiting, in_flight, ready, self.cluster.replica_count(tier), self.now)

    def sample(self, tier: Tier, tick: int) -> TierMetrics:
        dt = self.cfg.control_interval
        acct = self._acct[tier]
        busy, idle, req, ram = acct.busy_cpu, acct.idle_cpu, acct.req_cpu, acct.busy_ram
        for (t, _), rts in self._groups.items():
            if t is not tier:
                continue
            for rt in rts:
                self._flush(rt)
                busy += rt.busy_cpu
                idle += rt.idle_cpu
                req += rt.req_cpu
                ram += rt.busy_ram
                rt.busy_cpu = rt.idle_cpu = rt.req_cpu = rt.busy_ram = 0.0
        view = self._tier_view(tier)
        cpu = (busy + idle) / dt
        requested = req / dt
        s = MetricSample(tick, self.now, cpu, ram / dt, float(acct.arrivals),
                         float(acct.completions), float(self.custom_metric(view)))
        self._acct[tier] = _TierAccount()
        return TierMetrics(tier.value, s, requested,
                           rir(max(0.0, requested - cpu), requested), view.replicas, view.ready)

    def _on_control(self, tick: int) -> None:
        self.ticks += 1
        for tier in (Tier.EDGE, Tier.CLOUD):
            scaler = self.autoscalers.get(tier)
            if scaler is None:
                continue
            m = self.sample(tier, tick)
            self.metrics[tier.value].append(m)
            decision, actions = scaler.step(m.sample, self.cluster, self.now)
            self.decisions[tier.value].append(decision)
            self._apply(actions)

    def _on_update(self) -> None:
        for tier in (Tier.EDGE, Tier.CLOUD):
            scaler = self.autoscalers.get(tier)
            if scaler is not None and hasattr(scaler, "update"):
                scaler.update(self.now)
                self.updates.extend(u for u in scaler.updates[-1:])

    # -- main loop ---------------------------------------------------------
    def _next_arrival(self) -> None:
        if self._stream is None:
            return
        task = next(self._stream, None)
        if task is not None and task.arrival_time <= self.cfg.horizon:
            self._push(task.arrival_time, EventKind.ARRIVAL, task)

    def _on_trace_minute(self, index: int) -> None:
        minute, count = self._trace.rows[index]
        batch = trace_minute(minute, count, self._trace_rng, self._trace_next_id, self._zones)
        self._trace_next_id += len(batch)
        for task in batch:
            if task.arrival_time <= self.cfg.horizon:
                self._push(task.arrival_time, EventKind.ARRIVAL, task)
        if index + 1 < len(self._trace.rows):
            nxt = 60.0 * self._trace.rows[index + 1][0]
            if nxt <= self.cfg.horizon:
                self._push(nxt, EventKind.TRACE_MINUTE, index + 1)

    def run(self) -> SimulationReport:
        cfg = self.cfg
        n_ticks = int(math.floor(cfg.horizon / cfg.control_interval + 1e-9))
        if n_ticks >= 1:
            self._push(cfg.control_interval, EventKind.CONTROL_TICK, 1)
        per_update = 0
        if cfg.update_interval and cfg.update_interval > 0:
            per_update = int(round(cfg.update_interval / cfg.control_interval))
            if per_update <= n_ticks:
                self._push(cfg.update_interval, EventKind.UPDATE_TICK, 1)
        if self._trace is not None:
            if self._trace.rows and 60.0 * self._trace.rows[0][0] <= cfg.horizon:
                self._push(60.0 * self._trace.rows[0][0], EventKind.TRACE_MINUTE, 0)
        else:
            self._next_arrival()

        last = 0.0
        while self._heap:
            time, kind, _, payload = self._heap[0]
            if time > cfg.horizon:
                break
            heapq.heappop(self._heap)
            if time < last:
                raise RuntimeError("event time went backwards")
            last = self.now = time
            self.events += 1
            kind = EventKind(kind)
            if kind is EventKind.ARRIVAL:
                self._on_arrival(payload)
                self._next_arrival()
            elif kind is EventKind.TASK_COMPLETE:
                self._on_complete(payload)
            elif kind is EventKind.POD_READY:
                self._on_ready(payload)
            elif kind is EventKind.POD_DRAINED:
                self._on_drained(payload)
            elif kind is EventKind.TRACE_MINUTE:
                self._on_trace_minute(payload)
            elif kind is EventKind.CONTROL_TICK:
                self._on_control(payload)
                if payload < n_ticks:
                    self._push((payload + 1) * cfg.control_interval, EventKind.CONTROL_TICK,
                               payload + 1)
            elif kind is EventKind.UPDATE_TICK:
                self._on_update()
                nxt = (payload + 1) * per_update
                if nxt <= n_ticks:
                    self._push(nxt * cfg.control_interval, EventKind.UPDATE_TICK, payload + 1)
            if cfg.check_capacity:
                self.capacity_checks += 1
                bad = self.cluster.capacity_violations()
                if bad:
                    self.violations.extend(f"t={time}: {b}" for b in bad)
        report = SimulationReport(self.tasks, self.metrics, self.decisions, self.updates,
                                  self.violations, self.capacity_checks, self.events,
                                  self.ticks, cfg.horizon,
                                  {t.value: a.policy.key_metric for t, a in self.autoscalers.items()})
        return report

"""Zones, nodes, pods and capacity-constrained placement.

Every node must satisfy ``sum(cpu_request) <= cpu_capacity`` (and the same for
RAM) over the pods it hosts. Placement and scaling keep that true; the
``capacity_violations`` sweep checks it independently from the pod list.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

logger = logging.getLogger(__name__)

CLOUD_ZONE = "cloud"


class Tier(str, Enum):
    CLOUD = "cloud"
    EDGE = "edge"


class PodRole(str, Enum):
    STATIC = "static"
    WORKER = "worker"


class PodState(str, Enum):
    STARTING = "starting"
    READY = "ready"
    TERMINATING = "terminating"


class CapacityExhausted(RuntimeError):
    """No node of the requested tier has room for the pod."""


@dataclass(frozen=True)
class NodeSpec:
    id: str
    tier: Tier
    zone: str
    cpu_capacity: int
    ram_capacity: int
    schedulable: bool = True  # control-plane nodes host no workers

    def __post_init__(self):
        if self.cpu_capacity <= 0 or self.ram_capacity <= 0:
            raise ValueError(f"node {self.id}: capacities must be positive")
        if self.tier is Tier.CLOUD and self.zone != CLOUD_ZONE:
            raise ValueError(f"cloud node {self.id} must live in zone {CLOUD_ZONE!r}")
        if self.tier is Tier.EDGE and self.zone == CLOUD_ZONE:
            raise ValueError(f"edge node {self.id} cannot live in the cloud zone")


@dataclass(frozen=True)
class PodSpec:
    role: PodRole
    cpu_request: int
    ram_request: int
    startup_delay: float
    tier_affinity: Tier

    def __post_init__(self):
        if self.cpu_request <= 0:
            raise ValueError("cpu_request must be positive")
        if self.ram_request < 0:
            raise ValueError("ram_request must be non-negative")
        if self.startup_delay < 0:
            raise ValueError("startup_delay must be non-negative")


@dataclass
class PodInstance:
    id: str
    spec: PodSpec
    node: str
    zone: str
    state: PodState
    created_at: float
    ready_at: float
    seq: int

    @property
    def active(self) -> bool:
        """Counts toward the replica total (not on its way out)."""
        return self.state is not PodState.TERMINATING


@dataclass(frozen=True)
class ScaleAction:
    kind: str  # "create" | "terminate"
    pod: PodInstance


def worker_spec(tier: Tier, cpu: int = 500, ram: int = 256, startup_delay: float = 10.0) -> PodSpec:
    return PodSpec(PodRole.WORKER, cpu, ram, startup_delay, tier)


@dataclass
class ClusterState:
    nodes: dict[str, NodeSpec] = field(default_factory=dict)
    pods: dict[str, PodInstance] = field(default_factory=dict)
    _used_cpu: dict[str, int] = field(default_factory=dict, repr=False)
    _used_ram: dict[str, int] = field(default_factory=dict, repr=False)
    _seq: int = 0

    def add_node(self, node: NodeSpec) -> None:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node
        self._used_cpu[node.id] = 0
        self._used_ram[node.id] = 0

    # -- queries ---------------------------------------------------------
    @property
    def edge_zones(self) -> list[str]:
        return sorted({n.zone for n in self.nodes.values() if n.tier is Tier.EDGE})

    def zones(self, tier: Tier) -> list[str]:
        return [CLOUD_ZONE] if tier is Tier.CLOUD else self.edge_zones

    def free_cpu(self, node_id: str) -> int:
        return self.nodes[node_id].cpu_capacity - self._used_cpu[node_id]

    def free_ram(self, node_id: str) -> int:
        return self.nodes[node_id].ram_capacity - self._used_ram[node_id]

    def workers(self, tier: Tier, zone: str | None = None,
                states: Iterable[PodState] | None = None) -> list[PodInstance]:
        wanted = set(states) if states is not None else None
        out = [
            p for p in self.pods.values()
            if p.spec.role is PodRole.WORKER and p.spec.tier_affinity is tier
            and (zone is None or p.zone == zone)
            and (wanted is None or p.state in wanted)
        ]
        out.sort(key=lambda p: p.seq)
        return out

    def active_workers(self, tier: Tier, zone: str | None = None) -> list[PodInstance]:
        return self.workers(tier, zone, (PodState.STARTING, PodState.READY))

    def replica_count(self, tier: Tier) -> int:
        return len(self.active_workers(tier))

    def zone_counts(self, tier: Tier) -> dict[str, int]:
        return {z: len(self.active_workers(tier, z)) for z in self.zones(tier)}

    # -- placement -------------------------------------------------------
    def _fits(self, node: NodeSpec, spec: PodSpec) -> bool:
        return (self.free_cpu(node.id) >= spec.cpu_request
                and self.free_ram(node.id) >= spec.ram_request)

    def _candidates(self, spec: PodSpec, zone: str | None) -> list[NodeSpec]:
        return [
            n for n in self.nodes.values()
            if n.tier is spec.tier_affinity
            and (n.schedulable or spec.role is PodRole.STATIC)
            and (zone is None or n.zone == zone)
        ]

    def _place(self, spec: PodSpec, node: NodeSpec, now: float, state: PodState) -> PodInstance:
        self._seq += 1
        prefix = "static" if spec.role is PodRole.STATIC else f"{spec.tier_affinity.value}-w"
        pod = PodInstance(
            id=f"{prefix}{self._seq:05d}",
            spec=spec,
            node=node.id,
            zone=node.zone,
            state=state,
            created_at=now,
            ready_at=now + (0.0 if state is PodState.READY else spec.startup_delay),
            seq=self._seq,
        )
        self.pods[pod.id] = pod
        self._used_cpu[node.id] += spec.cpu_request
        self._used_ram[node.id] += spec.ram_request
        return pod

    def schedule_pod(self, spec: PodSpec, now: float = 0.0, zone: str | None = None,
                     ready: bool = False) -> PodInstance:
        """Place ``spec`` on the tier-matching node with the most free CPU.

        Ties go to the lexicographically smallest node id. ``zone`` narrows the
        candidate set; ``ready`` skips the startup delay (initial deployment).
        """
        best = None
        for node in self._candidates(spec, zone):
            if not self._fits(node, spec):
                continue
            key = (-self.free_cpu(node.id), node.id)
            if best is None or key < best[0]:
                best = (key, node)
        if best is None:
            where = f"zone {zone}" if zone else f"tier {spec.tier_affinity.value}"
            raise CapacityExhausted(f"no room for {spec.role.value} pod in {where}")
        state = PodState.READY if ready or spec.startup_delay == 0 else PodState.STARTING
        return self._place(spec, best[1], now, state)

    def place_static(self, spec: PodSpec, node_id: str) -> PodInstance:
        node = self.nodes[node_id]
        if not self._fits(node, spec):
            raise CapacityExhausted(f"static pod does not fit on {node_id}")
        return self._place(spec, node, 0.0, PodState.READY)

    def remove_pod(self, pod_id: str) -> PodInstance:
        pod = self.pods.pop(pod_id)
        self._used_cpu[pod.node] -= pod.spec.cpu_request
        self._used_ram[pod.node] -= pod.spec.ram_request
        return pod

    # -- capacity --------------------------------------------------------
    def _room(self, spec: PodSpec, zone: str | None = None) -> int:
        total = 0
        for node in self._candidates(spec, zone):
            if spec.ram_request > 0:
                k = min(self.free_cpu(node.id) // spec.cpu_request,
                        self.free_ram(node.id) // spec.ram_request)
            else:
                k = self.free_cpu(node.id) // spec.cpu_request
            total += max(0, k)
        return total

    def max_replicas(self, spec: PodSpec, tier: Tier | None = None) -> int:
        """Largest worker total reachable for ``tier`` without breaking capacity.

        Active workers already hold their share; the rest is the per-node
        floor of free CPU and RAM over the request. Terminating pods still
        occupy their node until drained.
        """
        tier = tier or spec.tier_affinity
        return self.replica_count(tier) + self._room(spec)

    def capacity_violations(self) -> list[str]:
        """Recompute node usage from scratch and report every overcommit."""
        cpu = {n: 0 for n in self.nodes}
        ram = {n: 0 for n in self.nodes}
        for pod in self.pods.values():
            cpu[pod.node] += pod.spec.cpu_request
            ram[pod.node] += pod.spec.ram_request
        bad = []
        for nid, node in self.nodes.items():
            if cpu[nid] > node.cpu_capacity:
                bad.append(f"{nid}: cpu {cpu[nid]} > {node.cpu_capacity}")
            if ram[nid] > node.ram_capacity:
                bad.append(f"{nid}: ram {ram[nid]} > {node.ram_capacity}")
        return bad

    # -- scaling ---------------------------------------------------------
    def scale_to(self, spec: PodSpec, desired: int, now: float = 0.0) -> list[ScaleAction]:
        """Create or retire workers until ``desired`` are active.

        New pods go to the zone with the fewest active workers that still has
        room; retirements come from the most populated zone, newest pod first.
        With a single zone this reduces to plain newest-first.
        """
        tier = spec.tier_affinity
        actions: list[ScaleAction] = []
        current = self.replica_count(tier)
        zones = self.zones(tier)
        while current < desired:
            counts = self.zone_counts(tier)
            open_zones = [z for z in zones if self._room(spec, z) > 0]
            if not open_zones:
                raise CapacityExhausted(
                    f"cannot reach {desired} {tier.value} workers (stuck at {current})")
            zone = min(open_zones, key=lambda z: (counts[z], z))
            pod = self.schedule_pod(spec, now, zone=zone)
            actions.append(ScaleAction("create", pod))
            current += 1
        while current > desired:
            by_zone = {z: self.active_workers(tier, z) for z in zones}
            zone = max((z for z in zones if by_zone[z]),
                       key=lambda z: (len(by_zone[z]), by_zone[z][-1].seq))
            pod = by_zone[zone][-1]
            pod.state = PodState.TERMINATING
            actions.append(ScaleAction("terminate", pod))
            current -= 1
        return actions


def default_topology(edge_zones: int = 2, edge_nodes_per_zone: int = 2,
                     edge_cpu: int = 2000, edge_ram: int = 2048,
                     cloud_workers: int = 2, cloud_cpu: int = 3000, cloud_ram: int = 3072,
                     control_cpu: int = 4000, control_ram: int = 4096,
                     static_cpu: int = 500, static_ram: int = 512) -> ClusterState:
    """Cloud control node, cloud worker nodes and per-zone edge nodes.

    Every worker node carries one support pod of ``static_cpu``/``static_ram``.
    """
    state = ClusterState()
    state.add_node(NodeSpec("cloud-control", Tier.CLOUD, CLOUD_ZONE, control_cpu, control_ram,
                            schedulable=False))
    for i in range(1, cloud_workers + 1):
        state.add_node(NodeSpec(f"cloud-node{i}", Tier.CLOUD, CLOUD_ZONE, cloud_cpu, cloud_ram))
    for z in range(1, edge_zones + 1):
        for i in range(1, edge_nodes_per_zone + 1):
            state.add_node(NodeSpec(f"edge-z{z}-node{i}", Tier.EDGE, f"zone-{z}", edge_cpu, edge_ram))
    if static_cpu > 0:
        for node in list(state.nodes.values()):
            if node.schedulable:
                spec = PodSpec(PodRole.STATIC, static_cpu, static_ram, 0.0, node.tier)
                state.place_static(spec, node.id)
    return state

"""Cluster membership, capability registry and ground-truth resource state."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class LifecycleState(str, enum.Enum):
    REGISTERING = "registering"
    ACTIVE = "active"
    DEGRADED = "degraded"
    DEPARTED = "departed"


_TRANSITIONS = {
    LifecycleState.REGISTERING: {LifecycleState.ACTIVE, LifecycleState.DEPARTED},
    LifecycleState.ACTIVE: {LifecycleState.DEGRADED, LifecycleState.DEPARTED},
    LifecycleState.DEGRADED: {LifecycleState.ACTIVE, LifecycleState.DEPARTED},
    LifecycleState.DEPARTED: set(),
}


class MembershipError(RuntimeError):
    pass


class ResourceBoundError(ValueError):
    """A resource delta would leave the node outside [0, capability bound]."""

    def __init__(self, node_id, resource, current, delta, bound):
        self.node_id = node_id
        self.resource = resource
        self.current = current
        self.delta = delta
        self.bound = bound
        super().__init__(
            f"node {node_id}: {resource} {current:g} {delta:+g} leaves [0, {bound:g}]"
        )


@dataclass(frozen=True)
class CapabilityDescriptor:
    node_id: int
    compute_capacity: float  # GB/s of equivalent processing throughput
    storage_capacity: float  # GB
    link_classes: frozenset = frozenset()
    sensor_types: frozenset = frozenset()
    regime: str = "LEO"

    def __post_init__(self):
        if self.compute_capacity < 0 or self.storage_capacity < 0:
            raise ValueError(f"node {self.node_id}: capacities must be non-negative")

    def bound(self, resource: str) -> float:
        if resource == "compute":
            return self.compute_capacity
        if resource == "storage":
            return self.storage_capacity
        if resource == "sensor":
            return 1.0 if self.sensor_types else 0.0
        raise KeyError(resource)


@dataclass
class MembershipRecord:
    node_id: int
    lifecycle_state: LifecycleState = LifecycleState.REGISTERING
    last_contact: float = 0.0


class Registry:
    """Capability registry plus membership lifecycle."""

    def __init__(self):
        self.descriptors: dict[int, CapabilityDescriptor] = {}
        self.records: dict[int, MembershipRecord] = {}

    def __len__(self):
        return len(self.records)

    def register_node(self, descriptor: CapabilityDescriptor, t: float = 0.0) -> MembershipRecord:
        existing = self.descriptors.get(descriptor.node_id)
        if existing is not None:
            if existing != descriptor:
                raise MembershipError(
                    f"node {descriptor.node_id} already registered with a different descriptor"
                )
            return self.records[descriptor.node_id]
        self.descriptors[descriptor.node_id] = descriptor
        rec = MembershipRecord(descriptor.node_id, LifecycleState.REGISTERING, t)
        self.records[descriptor.node_id] = rec
        return rec

    def transition(self, node_id: int, state: LifecycleState, t: float | None = None) -> MembershipRecord:
        rec = self.records[node_id]
        if state == rec.lifecycle_state:
            return rec
        if state not in _TRANSITIONS[rec.lifecycle_state]:
            raise MembershipError(
                f"node {node_id}: illegal transition {rec.lifecycle_state.value} -> {state.value}"
            )
        rec.lifecycle_state = state
        if t is not None:
            rec.last_contact = t
        return rec

    def activate(self, node_id, t=None):
        return self.transition(node_id, LifecycleState.ACTIVE, t)

    def degrade(self, node_id, t=None):
        return self.transition(node_id, LifecycleState.DEGRADED, t)

    def depart(self, node_id, t=None):
        return self.transition(node_id, LifecycleState.DEPARTED, t)

    def state(self, node_id) -> LifecycleState:
        return self.records[node_id].lifecycle_state

    def schedulable(self, node_id, allow_degraded: bool = True) -> bool:
        rec = self.records.get(node_id)
        if rec is None:
            return False
        if rec.lifecycle_state == LifecycleState.ACTIVE:
            return True
        return allow_degraded and rec.lifecycle_state == LifecycleState.DEGRADED

    def active_nodes(self) -> list[int]:
        return sorted(
            n for n, r in self.records.items()
            if r.lifecycle_state in (LifecycleState.ACTIVE, LifecycleState.DEGRADED)
        )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["node_id", "regime", "compute_gbps", "storage_gb", "link_classes"])
            for n in sorted(self.descriptors):
                d = self.descriptors[n]
                w.writerow([n, d.regime, repr(d.compute_capacity), repr(d.storage_capacity), ";".join(sorted(d.link_classes))])


def distribute_capacity(total: float, nodes: Sequence, policy: str = "uniform") -> dict:
    """Split a cluster-wide compute budget over nodes.

    ``uniform`` gives total/N each. ``pareto`` gives 80% of the budget to the
    first 20% of nodes (at least one) and the rest evenly to the others.
    """
    if total <= 0:
        raise ValueError("total capacity must be positive")
    nodes = list(nodes)
    if not nodes:
        raise ValueError("cannot distribute capacity over an empty node list")
    n = len(nodes)
    if policy == "uniform":
        return {node: total / n for node in nodes}
    if policy == "pareto":
        heavy = max(1, int(round(0.2 * n)))
        if heavy == n:
            return {node: total / n for node in nodes}
        out = {}
        for i, node in enumerate(nodes):
            out[node] = 0.8 * total / heavy if i < heavy else 0.2 * total / (n - heavy)
        return out
    raise ValueError(f"unknown distribution policy {policy!r}")


RESOURCES = ("compute", "storage", "sensor")


@dataclass
class NodeTruth:
    bounds: dict
    reserved: dict = field(default_factory=dict)
    executing: set = field(default_factory=set)


class GroundTruthState:
    """Actual onboard state: capability bounds minus what running stages hold.

    Local (non-cluster) load on a node is an exogenous process supplied by
    ``background``; it never displaces running stages, it only takes what they
    leave free.
    """

    def __init__(self, descriptors: Iterable[CapabilityDescriptor], background=None):
        self.nodes: dict[int, NodeTruth] = {}
        for d in descriptors:
            self.nodes[d.node_id] = NodeTruth(
                bounds={r: d.bound(r) for r in RESOURCES},
                reserved={r: 0.0 for r in RESOURCES},
            )
        self.link_reserved: dict = {}
        self.as_of = 0.0
        self.background = background

    def bound(self, node_id, resource) -> float:
        return self.nodes[node_id].bounds[resource]

    def reserved(self, node_id, resource) -> float:
        return self.nodes[node_id].reserved[resource]

    def local_load(self, node_id, t: float) -> float:
        if self.background is None:
            return 0.0
        return self.background.level(node_id, t)

    def available(self, node_id, resource, t: float | None = None) -> float:
        """Free amount at ``t`` after running stages and local load."""
        t = self.as_of if t is None else t
        nt = self.nodes[node_id]
        free = nt.bounds[resource] - nt.reserved[resource]
        if resource == "compute":
            free -= min(self.local_load(node_id, t), free)
        return max(0.0, free)

    def cluster_available(self, node_id, resource, t: float) -> float:
        """What the node reports: bound minus local load, ignoring cluster reservations."""
        bound = self.nodes[node_id].bounds[resource]
        if resource == "compute":
            return max(0.0, bound - self.local_load(node_id, t))
        return bound

    def advance_clock(self, t: float) -> None:
        if t < self.as_of:
            raise ValueError(f"ground truth cannot move backwards ({t} < {self.as_of})")
        self.as_of = t

    def apply_resource_delta(self, node_id, resource, delta: float, t: float) -> "GroundTruthState":
        """Consume (delta < 0 of free) or release (delta > 0) a reserved amount.

        ``delta`` is expressed as a change in free capacity, so consuming 2 GB/s
        is ``delta=-2``. Bound violations raise and leave the state untouched.
        """
        if t < self.as_of:
            raise ValueError(f"delta at t={t} precedes state time {self.as_of}")
        nt = self.nodes[node_id]
        bound = nt.bounds[resource]
        current_free = bound - nt.reserved[resource]
        new_free = current_free + delta
        tol = 1e-9 * max(1.0, bound)
        if new_free < -tol or new_free > bound + tol:
            raise ResourceBoundError(node_id, resource, current_free, delta, bound)
        nt.reserved[resource] = min(bound, max(0.0, bound - new_free))
        if abs(nt.reserved[resource]) < tol:
            nt.reserved[resource] = 0.0
        self.as_of = t
        return self


def apply_resource_delta(truth: GroundTruthState, node_id, resource, delta, t) -> GroundTruthState:
    return truth.apply_resource_delta(node_id, resource, delta, t)


@dataclass(frozen=True)
class LocalLoadSpec:
    """Non-cluster onboard load: slow tenant workloads plus housekeeping jitter.

    The level is a piecewise-constant fraction of each node's compute capacity,
    redrawn uniformly in [0, max_fraction] after exponential dwell times. The
    jitter is resampled every ``jitter_period`` seconds in [0, jitter_fraction].
    ``enabled=False`` makes every node idle.
    """

    enabled: bool = True
    mean_dwell: float = 3600.0
    max_fraction: float = 0.8
    jitter_fraction: float = 0.05
    jitter_period: float = 10.0
    profile: float = 600.0  # history generated before t = 0

    def __post_init__(self):
        if self.mean_dwell <= 0 or self.jitter_period <= 0 or self.profile < 0:
            raise ValueError("local load periods must be positive")
        if not 0 <= self.max_fraction <= 1 or not 0 <= self.jitter_fraction <= 1:
            raise ValueError("local load fractions must lie in [0, 1]")
        if self.max_fraction + self.jitter_fraction > 1:
            raise ValueError("level plus jitter may not exceed capacity")


class LocalLoad:
    """Seeded realisation of :class:`LocalLoadSpec` for nodes 0..N-1."""

    def __init__(self, capacities: Sequence[float], spec: LocalLoadSpec, horizon: float, seed: int):
        self.spec = spec
        self.capacity = np.asarray(capacities, dtype=float)
        self.t0 = -spec.profile
        n = len(self.capacity)
        rng = np.random.default_rng([seed, 0x10AD])
        span = horizon - self.t0
        self.change_times: list = []
        self.levels: list = []
        for _ in range(n):
            if not spec.enabled:
                self.change_times.append(np.array([self.t0]))
                self.levels.append(np.zeros(1))
                continue
            k = int(span / spec.mean_dwell * 2 + 10)
            gaps = rng.exponential(spec.mean_dwell, size=k)
            while gaps.sum() < span:
                gaps = np.concatenate([gaps, rng.exponential(spec.mean_dwell, size=k)])
            times = self.t0 + np.concatenate([[0.0], np.cumsum(gaps)])
            times = times[times < horizon]
            self.change_times.append(times)
            self.levels.append(rng.uniform(0.0, spec.max_fraction, size=len(times)))
        slots = int(np.ceil(span / spec.jitter_period)) + 1
        if spec.enabled and spec.jitter_fraction > 0:
            self.jitter = rng.uniform(0.0, spec.jitter_fraction, size=(n, slots))
        else:
            self.jitter = np.zeros((n, slots))

    def fraction(self, node: int, t: float) -> float:
        times = self.change_times[node]
        i = int(np.searchsorted(times, t, side="right")) - 1
        j = int((t - self.t0) // self.spec.jitter_period)
        return float(self.levels[node][max(i, 0)] + self.jitter[node, min(max(j, 0), self.jitter.shape[1] - 1)])

    def level(self, node: int, t: float) -> float:
        return self.capacity[node] * self.fraction(node, t)

    def fractions(self, node: int, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        i = np.searchsorted(self.change_times[node], times, side="right") - 1
        j = ((times - self.t0) // self.spec.jitter_period).astype(np.int64)
        j = np.clip(j, 0, self.jitter.shape[1] - 1)
        return self.levels[node][np.maximum(i, 0)] + self.jitter[node, j]

    def fraction_grid(self, times) -> np.ndarray:
        """Load fractions of every node at ``times``, shape (N, T)."""
        return np.stack([self.fractions(n, times) for n in range(len(self.capacity))]) if len(self.capacity) else np.zeros((0, len(times)))

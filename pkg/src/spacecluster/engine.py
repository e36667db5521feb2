"""Discrete-event engine: ground truth, plan execution and failure attribution.

The awareness plane does not depend on scheduling (reports carry what the
cluster may use, which only the onboard local load moves), so every report
and its delivery are computed before the event loop starts. The loop then
handles arrivals, planning ticks and stage execution, reading the view as of
the current clock.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .awareness import (
    AwarenessConfig,
    AwarenessLog,
    BatchRouter,
    ReportView,
    domain_table,
    emission_schedule,
    staleness_samples,
)
from .cluster import (
    CapabilityDescriptor,
    GroundTruthState,
    LocalLoad,
    LocalLoadSpec,
    Registry,
    distribute_capacity,
)
from .orbits import CapacityConfig, ContactPlan, GroundStationSpec, OrbitShellSpec, contact_plan, generate_constellation
from .scheduler import (
    EPS,
    FailureReason,
    Plan,
    ResourceTimeline,
    ScheduleEntry,
    SchedulerConfig,
    plan_emergency,
    plan_periodic,
    planning_cycle,
    replan_terminated,
)
from .tasks import KnowledgeBase, TaskSpec, WorkloadSpec, default_knowledge_base, generate_workload

# tie order within one instant: resources are released before new demand arrives
EVENT_PRIORITY = {
    "window_open": 0,
    "window_close": 0,
    "report_deliver": 1,
    "stage_complete": 2,
    "execution_failure": 2,
    "stage_start": 3,
    "plan_tick": 4,
    "task_arrival": 5,
}


@dataclass(order=True)
class SimEvent:
    time: float
    rank: int
    seq: int
    kind: str = field(compare=False)
    payload: tuple = field(compare=False, default=())


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    shells: tuple[OrbitShellSpec, ...]
    stations: tuple[GroundStationSpec, ...]
    horizon: float = 21600.0
    step: float = 10.0
    total_compute: float = 300.0  # GB/s over all satellites
    capacity_policy: str = "uniform"
    storage_per_node: float = 64.0  # GB
    sensor_regimes: tuple[str, ...] = ("LEO",)
    links: CapacityConfig = field(default_factory=CapacityConfig)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    awareness: AwarenessConfig = field(default_factory=AwarenessConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    local_load: LocalLoadSpec = field(default_factory=LocalLoadSpec)
    max_replans: int = 1
    staleness_dt: float = 10.0

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is required")
        if not self.shells:
            raise ValueError("at least one orbit shell is required")
        if self.horizon <= 0 or self.step <= 0 or self.staleness_dt <= 0:
            raise ValueError("horizon, step and staleness_dt must be positive")
        if self.total_compute <= 0 or self.storage_per_node < 0:
            raise ValueError("compute must be positive and storage non-negative")
        if self.max_replans < 0:
            raise ValueError("max_replans must be non-negative")
        if self.workload.arrival_window[1] > self.horizon:
            raise ValueError("arrival window extends past the horizon")

    @property
    def network_size(self) -> int:
        return sum(s.size for s in self.shells)

    @property
    def mode(self) -> str:
        return self.awareness.mode


# -- world construction -----------------------------------------------------------------

_PLAN_CACHE: dict = {}


def cached_contact_plan(shells, stations, horizon, step, links) -> ContactPlan:
    """Contact plans depend only on geometry and link draws; reuse them across runs."""
    key = (tuple(shells), tuple(stations), horizon, step, links)
    plan = _PLAN_CACHE.get(key)
    if plan is None:
        if len(_PLAN_CACHE) >= 4:
            _PLAN_CACHE.pop(next(iter(_PLAN_CACHE)))
        plan = contact_plan(generate_constellation(shells), stations, horizon, step, links)
        _PLAN_CACHE[key] = plan
    return plan


def clear_plan_cache() -> None:
    _PLAN_CACHE.clear()


@dataclass
class World:
    config: ScenarioConfig
    plan: ContactPlan
    registry: Registry
    capabilities: dict
    load: LocalLoad
    truth: GroundTruthState
    anchors: list


def build_world(config: ScenarioConfig) -> World:
    plan = cached_contact_plan(config.shells, config.stations, config.horizon, config.step, config.links)
    ephs = plan.ephemerides
    ids = [e.node_id for e in ephs]
    if ids != list(range(len(ids))):
        raise ValueError("node ids must be 0..N-1 in ephemeris order")
    compute = distribute_capacity(config.total_compute, ids, config.capacity_policy)
    registry = Registry()
    caps = {}
    for e in ephs:
        links = {"ground", "laser_isl"} if e.regime == "LEO" else {"ground", "laser_isl", "microwave_isl"}
        if e.regime == "LEO":
            links.add(config.links.leo_anchor_class)
        sensors = frozenset({"optical"}) if e.regime in config.sensor_regimes else frozenset()
        d = CapabilityDescriptor(e.node_id, compute[e.node_id], config.storage_per_node, frozenset(links), sensors, e.regime)
        caps[e.node_id] = d
        registry.register_node(d, 0.0)
        registry.activate(e.node_id, 0.0)
    load = LocalLoad([caps[i].compute_capacity for i in ids], config.local_load, config.horizon, config.seed)
    truth = GroundTruthState(caps.values(), load)
    anchors = [e.node_id for e in ephs if e.regime != "LEO"]
    return World(config, plan, registry, caps, load, truth, anchors)


@dataclass
class AwarenessRun:
    log: AwarenessLog
    node: np.ndarray
    emit: np.ndarray
    deliver: np.ndarray
    has_compute: np.ndarray
    classes: dict


def simulate_awareness(world: World) -> AwarenessRun:
    """Emit, route and deliver every report of the scenario."""
    cfg = world.config
    aw = cfg.awareness
    n = len(world.capabilities)
    sched = emission_schedule(n, world.load.fractions, aw, cfg.horizon)
    bits = 8.0 * (aw.policy.header_bytes + aw.policy.entry_bytes * sched.entries)
    router = BatchRouter(world.plan)
    anchors_at = None
    if aw.mode == "yuheng":
        if not world.anchors:
            raise ValueError("yuheng awareness needs MEO/GEO anchors")
        epochs = np.arange(0.0, cfg.horizon, aw.domain_period)
        table = domain_table(world.plan, world.anchors, epochs)
        k = np.minimum((sched.emit // aw.domain_period).astype(np.int64), len(epochs) - 1)
        anchors_at = table[sched.node, k]
    deliver, w1, w2 = router.route_many(sched.node, sched.emit, aw.mode, anchors_at, bits)
    if aw.mode == "baseline" and aw.allow_isl_relay:
        deliver, w1, w2 = _relay_improve(router, world.plan, sched, bits, deliver, w1, w2)
    log = AwarenessLog()
    log.append(sched.node, sched.emit, deliver, w1, w2, bits)
    return AwarenessRun(log, sched.node, sched.emit, deliver, sched.has_compute, sched.classes)


def _relay_improve(router, plan, sched, bits, deliver, w1, w2):
    # one ISL hop to a neighbour that is linked at emission time, then its downlink
    for node in np.unique(sched.node).tolist():
        sel = np.flatnonzero(sched.node == node)
        for nb in plan.neighbors(node):
            a1, wa = router.hop(node, nb, sched.emit[sel], bits[sel])
            opened = np.array([plan.open_window(node, nb, t) is not None for t in sched.emit[sel]])
            ok = ~np.isnan(a1) & opened
            if not ok.any():
                continue
            d, wb = router.ground_hop(nb, a1[ok], bits[sel[ok]])
            idx = sel[ok]
            better = ~np.isnan(d) & (np.isnan(deliver[idx]) | (d < deliver[idx]))
            deliver[idx[better]] = d[better]
            w1[idx[better]] = wa[ok][better]
            w2[idx[better]] = wb[better]
    return deliver, w1, w2


# -- trace ------------------------------------------------------------------------------


@dataclass
class TaskRecord:
    task_id: int
    priority: int
    arrival: float
    deadline: float
    status: str = "pending"  # pending | planned | completed | failed
    reason: str = ""
    finish: float | None = None
    stale_hits: int = 0
    preempted: int = 0
    replans: int = 0

    @property
    def terminal(self) -> bool:
        return self.status in ("completed", "failed")


@dataclass
class Trace:
    events: list = field(default_factory=list)  # (time, kind, task_id, stage_id, node, detail)
    tasks: dict = field(default_factory=dict)  # task_id -> TaskRecord
    ledger: list = field(default_factory=list)  # (time, key, delta, task_id, stage_id)
    entries: list = field(default_factory=list)  # committed ScheduleEntry objects
    awareness: AwarenessRun | None = None
    sample_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    staleness: np.ndarray = field(default_factory=lambda: np.zeros(0))
    held: dict = field(default_factory=dict)  # resources still held at the end: key -> amount

    def log(self, t, kind, task_id="", stage_id="", node="", detail=""):
        self.events.append((t, kind, task_id, stage_id, node, detail))

    def events_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["time_s", "kind", "task_id", "stage_id", "node_id", "detail"])
            for t, kind, tid, sid, node, detail in self.events:
                w.writerow([f"{t:.6f}", kind, tid, sid, node, detail])

    def tasks_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["task_id", "priority", "arrival_s", "deadline_s", "status", "fail_reason", "finish_s", "stale_hits", "preempted", "replans"])
            for tid in sorted(self.tasks):
                r = self.tasks[tid]
                fin = "" if r.finish is None else f"{r.finish:.6f}"
                w.writerow([tid, r.priority, f"{r.arrival:.6f}", f"{r.deadline:.6f}", r.status, r.reason, fin, r.stale_hits, r.preempted, r.replans])

    def plans_csv(self, path) -> None:
        p = Plan(entries=list(self.entries))
        p.failures = {tid: FailureReason(r.reason) for tid, r in self.tasks.items() if r.status == "failed"}
        p.to_csv(path)

    def staleness_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["time_s", "mean_staleness_s"])
            for t, s in zip(self.sample_times.tolist(), self.staleness.tolist()):
                w.writerow([f"{t:.6f}", f"{s:.6f}"])


# -- execution --------------------------------------------------------------------------


def execute_entry(truth: GroundTruthState, entry: ScheduleEntry, t: float, started: set | None = None):
    """Start a planned stage against ground truth.

    Returns ("started", None) after consuming its resources, or
    ("failed", reason) with truth untouched. A shortfall the plan's view did
    not show is a stale-view conflict; one the view did show would be a
    planner defect and raises.
    """
    key = id(entry)  # the same planned entry object may start only once
    if started is not None:
        if key in started:
            raise RuntimeError(f"stage {entry.task_id}/{entry.stage_id} started twice")
        started.add(key)
    short = []
    for (res, ref), amount, bound in entry.resources:
        if res == "link":
            free = _link_capacity(truth, ref) - truth.link_reserved.get(ref, 0.0)
        else:
            free = truth.available(ref, res, t)
        if free + EPS * max(1.0, amount) < amount:
            short.append((res, ref, amount, bound))
    if short:
        for res, ref, amount, bound in short:
            if amount > bound + EPS * max(1.0, bound):
                raise AssertionError(f"task {entry.task_id}/{entry.stage_id}: planned beyond its own view")
        return "failed", FailureReason.STALE_VIEW_CONFLICT
    truth.advance_clock(t)
    for (res, ref), amount, _ in entry.resources:
        if res == "link":
            truth.link_reserved[ref] = truth.link_reserved.get(ref, 0.0) + amount
        else:
            truth.apply_resource_delta(ref, res, -amount, t)
    return "started", None


def _link_capacity(truth, wid):
    caps = getattr(truth, "link_capacity", None)
    return caps[wid] if caps is not None else math.inf


def release_entry(truth: GroundTruthState, entry: ScheduleEntry, t: float) -> None:
    truth.advance_clock(t)
    for (res, ref), amount, _ in entry.resources:
        if res == "link":
            left = truth.link_reserved.get(ref, 0.0) - amount
            truth.link_reserved[ref] = 0.0 if abs(left) < EPS * max(1.0, amount) else left
        else:
            truth.apply_resource_delta(ref, res, amount, t)


class Engine:
    def __init__(self, config: ScenarioConfig, kb: KnowledgeBase | None = None, world: World | None = None, tasks: Sequence[TaskSpec] | None = None):
        self.cfg = config
        self.kb = kb or default_knowledge_base()
        self.world = world or build_world(config)
        self.world.truth.link_capacity = [w.capacity for w in self.world.plan.windows]
        self.tasks = list(tasks) if tasks is not None else generate_workload(config.workload, config.seed, self.kb)
        self.by_id = {t.task_id: t for t in self.tasks}
        self.trace = Trace()
        self.heap: list = []
        self.seq = 0
        self.clock = 0.0
        self.timelines = ResourceTimeline()
        self.pending = {1: [], 2: [], 3: []}
        self.replan = {1: [], 2: [], 3: [], 4: []}
        self.done: dict = {t.task_id: {} for t in self.tasks}
        self.gen: dict = {t.task_id: 0 for t in self.tasks}
        self.running: dict = {}  # (task_id, stage_id) -> entry
        self.started: set = set()
        self.last_reason: dict = {}
        self.passes: dict = {}
        self.suspended: dict = {}
        self.view = None

    # queue
    def push(self, t, kind, payload=()):
        if t < self.clock - EPS:
            raise AssertionError(f"event {kind} scheduled in the past ({t} < {self.clock})")
        self.seq += 1
        heapq.heappush(self.heap, SimEvent(t, EVENT_PRIORITY[kind], self.seq, kind, payload))

    # main loop
    def run(self) -> Trace:
        cfg = self.cfg
        tr = self.trace
        aw = simulate_awareness(self.world)
        tr.awareness = aw
        self.view = ReportView(aw.node, aw.emit, aw.deliver, aw.has_compute, self.world.capabilities, self.world.load)
        for t in self.tasks:
            tr.tasks[t.task_id] = TaskRecord(t.task_id, t.priority, t.arrival, t.deadline)
            self.push(t.arrival, "task_arrival", (t.task_id,))
        for p in (1, 2, 3):
            cyc = planning_cycle(p, cfg.scheduler)
            k = 0
            while k * cyc < cfg.horizon:
                self.push(k * cyc, "plan_tick", (p,))
                k += 1
        while self.heap:
            ev = heapq.heappop(self.heap)
            if ev.time > cfg.horizon:
                break
            if ev.time < self.clock - EPS:
                raise AssertionError("causality violated")
            self.clock = ev.time
            self.advance(ev)
        self._finish()
        # replay deliveries for the staleness series
        times = np.arange(0.0, cfg.horizon, cfg.staleness_dt)
        replay = ReportView(aw.node, aw.emit, aw.deliver, aw.has_compute, self.world.capabilities, self.world.load)
        tr.sample_times = times
        tr.staleness = staleness_samples(replay, times)
        return tr

    def advance(self, ev: SimEvent) -> None:
        handler = getattr(self, "_on_" + ev.kind)
        handler(ev.time, *ev.payload)

    # handlers
    def _on_task_arrival(self, t, tid):
        task = self.by_id[tid]
        self.trace.log(t, "task_arrival", tid, detail=f"priority={task.priority}")
        self.passes[tid] = self._passes(task, t)
        if task.priority == 4:
            self._emergency(task, t)
        else:
            self.pending[task.priority].append(tid)

    def _passes(self, task, t):
        sensors = [n for n, c in self.world.capabilities.items() if c.sensor_types]
        return self.world.plan.sensing_passes(task.target, t, task.deadline, sensors)

    def _emergency(self, task, t):
        self.view.advance(t)
        plan = plan_emergency(task, self.view, self.world.plan, self.timelines, t, self.world.capabilities, self.cfg.scheduler, passes=self.passes[task.task_id], done=self.done[task.task_id] or None)
        for victim in plan.preempted:
            self._terminate(victim, t, "preempted")
        self._commit(plan, t)
        if task.task_id in plan.failures:
            self._fail(task.task_id, t, plan.failures[task.task_id])

    def _on_plan_tick(self, t, prio):
        self.view.advance(t)
        self.timelines.prune(t)
        rec = self.trace.tasks
        fresh = []
        for tid in self.pending[prio]:
            if rec[tid].terminal:
                continue
            if self.by_id[tid].deadline < t:
                self._fail(tid, t, self.last_reason.get(tid, FailureReason.DEADLINE_INFEASIBLE))
                continue
            fresh.append(tid)
        self.pending[prio] = []
        redo = [tid for tid in self.replan[prio] if not rec[tid].terminal]
        self.replan[prio] = []
        self.trace.log(t, "plan_tick", detail=f"priority={prio} new={len(fresh)} replan={len(redo)}")
        plan = plan_periodic([self.by_id[i] for i in fresh], self.view, self.world.plan, self.timelines, t, self.world.capabilities, self.cfg.scheduler, passes=self.passes)
        items = [(self.by_id[i], self.done[i]) for i in redo]
        plan.extend(replan_terminated(items, self.view, self.world.plan, self.timelines, t, self.world.capabilities, self.cfg.scheduler, passes=self.passes))
        self._commit(plan, t)
        for tid, reason in plan.failures.items():
            self.last_reason[tid] = reason
            if self.by_id[tid].deadline <= t or reason == FailureReason.DEADLINE_INFEASIBLE and self._hopeless(tid, t):
                self._fail(tid, t, reason)
            elif tid in redo:
                self.replan[prio].append(tid)
            else:
                self.pending[prio].append(tid)
        for tid in plan.completed:
            self._complete(tid, t)

    def _hopeless(self, tid, t):
        # a later tick cannot help once no sensing pass is left before the deadline
        return not any(e > t for ivs in self.passes.get(tid, {}).values() for _, e in ivs) and "sensing" not in self.done[tid]

    def _commit(self, plan: Plan, t):
        for e in plan.entries:
            self.trace.entries.append(e)
            rec = self.trace.tasks[e.task_id]
            rec.status = "planned"
            self.push(e.start, "stage_start", (e.task_id, self.gen[e.task_id], e))
            self.trace.log(t, "plan", e.task_id, e.stage_id, e.node_id, f"start={e.start:.3f} end={e.end:.3f}")

    def _on_stage_start(self, t, tid, gen, entry):
        if gen != self.gen[tid] or self.trace.tasks[tid].terminal:
            return
        task = self.by_id[tid]
        for p in task.predecessors(entry.stage_id):
            if p not in self.done[tid]:
                raise AssertionError(f"task {tid}/{entry.stage_id} started before {p} finished")
        status, reason = execute_entry(self.world.truth, entry, t, self.started)
        if status == "failed":
            self.trace.log(t, "execution_failure", tid, entry.stage_id, entry.node_id, reason.value)
            self._stale_conflict(tid, t)
            return
        for (res, ref), amount, _ in entry.resources:
            self.trace.ledger.append((t, (res, ref), -amount, tid, entry.stage_id))
        self.running[(tid, entry.stage_id)] = entry
        self.trace.log(t, "stage_start", tid, entry.stage_id, entry.node_id)
        end = entry.end
        if entry.window is not None:
            w = self.world.plan.windows[entry.window]
            if end > w.end + EPS:
                # the link drops mid-transfer: suspend at close, resume in the pair's next window
                self.push(w.end, "window_close", (tid, gen, entry))
                return
        self.push(end, "stage_complete", (tid, gen, entry))

    def _on_window_close(self, t, tid, gen, entry):
        if gen != self.gen[tid] or (tid, entry.stage_id) not in self.running:
            return
        self._release(tid, entry, t)
        w = self.world.plan.windows[entry.window]
        bits_total = (entry.end - entry.start) * w.capacity
        sent = (t - entry.start) * w.capacity
        self.trace.log(t, "window_close", tid, entry.stage_id, entry.node_id, f"suspended sent_bits={sent:.0f}")
        nxt = None
        for cand in self.world.plan.windows_after(entry.node_id, entry.dst, t + EPS):
            if cand.start >= t:
                nxt = cand
                break
        if nxt is None:
            self._fail(tid, t, FailureReason.NO_WINDOW)
            return
        remaining = (bits_total - sent) / nxt.capacity
        resumed = ScheduleEntry(entry.task_id, entry.stage_id, entry.kind, entry.node_id, nxt.start, nxt.start + remaining,
                                ((("link", self.world.plan.window_index(nxt)), nxt.capacity, nxt.capacity),), entry.dst,
                                self.world.plan.window_index(nxt), entry.view_ts, t, entry.priority)
        self.push(nxt.start, "window_open", (tid, gen, resumed))

    def _on_window_open(self, t, tid, gen, entry):
        if gen != self.gen[tid] or self.trace.tasks[tid].terminal:
            return
        self.trace.log(t, "window_open", tid, entry.stage_id, entry.node_id, "resumed")
        self.done[tid].pop(entry.stage_id, None)
        self._on_stage_start(t, tid, gen, entry)

    def _on_stage_complete(self, t, tid, gen, entry):
        if gen != self.gen[tid] or (tid, entry.stage_id) not in self.running:
            return
        self._release(tid, entry, t)
        self.done[tid][entry.stage_id] = (entry.location, t)
        self.trace.log(t, "stage_complete", tid, entry.stage_id, entry.node_id)
        if all(s in self.done[tid] for s in self.by_id[tid].order()):
            self._complete(tid, t)

    def _release(self, tid, entry, t):
        release_entry(self.world.truth, entry, t)
        for (res, ref), amount, _ in entry.resources:
            self.trace.ledger.append((t, (res, ref), amount, tid, entry.stage_id))
        del self.running[(tid, entry.stage_id)]

    # task state changes
    def _terminate(self, tid, t, why):
        """Abort running stages and drop future reservations; progress is kept."""
        self.gen[tid] += 1
        for key in [k for k in self.running if k[0] == tid]:
            self._release(tid, self.running[key], t)
        self.timelines.release_task(tid, after=t)
        rec = self.trace.tasks[tid]
        task = self.by_id[tid]
        rec.status = "pending"
        self.trace.log(t, "terminated", tid, detail=why)
        if why == "preempted":
            rec.preempted += 1
            self.replan[task.priority].append(tid)

    def _stale_conflict(self, tid, t):
        rec = self.trace.tasks[tid]
        rec.stale_hits += 1
        self._terminate(tid, t, "stale_view_conflict")
        task = self.by_id[tid]
        if rec.replans >= self.cfg.max_replans or t >= task.deadline:
            self._fail(tid, t, FailureReason.STALE_VIEW_CONFLICT)
            return
        rec.replans += 1
        if task.priority == 4:
            self._emergency(task, t)
        else:
            self.replan[task.priority].append(tid)

    def _complete(self, tid, t):
        rec = self.trace.tasks[tid]
        rec.status = "completed"
        rec.finish = t
        self.timelines.release_task(tid, after=t)
        self.trace.log(t, "task_complete", tid)

    def _fail(self, tid, t, reason: FailureReason):
        rec = self.trace.tasks[tid]
        if rec.terminal:
            return
        self.gen[tid] += 1
        for key in [k for k in self.running if k[0] == tid]:
            self._release(tid, self.running[key], t)
        self.timelines.release_task(tid, after=t)
        # a task that ever collided with reality is charged to awareness
        if rec.stale_hits:
            reason = FailureReason.STALE_VIEW_CONFLICT
        elif rec.preempted and reason != FailureReason.STALE_VIEW_CONFLICT:
            reason = FailureReason.PREEMPTED
        rec.status = "failed"
        rec.reason = reason.value
        rec.finish = t
        self.trace.log(t, "task_failed", tid, detail=reason.value)

    def _finish(self):
        t = self.cfg.horizon
        self.clock = t
        for tid, rec in sorted(self.trace.tasks.items()):
            if not rec.terminal:
                self._fail(tid, t, self.last_reason.get(tid, FailureReason.DEADLINE_INFEASIBLE))
        held: dict = {}
        for entry in self.running.values():
            for key, amount, _ in entry.resources:
                held[key] = held.get(key, 0.0) + amount
        self.trace.held = held


def run(config: ScenarioConfig, kb: KnowledgeBase | None = None, tasks: Sequence[TaskSpec] | None = None):
    """Run one scenario; returns (trace, metrics report)."""
    from .metrics import metrics_report

    trace = Engine(config, kb, tasks=tasks).run()
    return trace, metrics_report(trace)


def conservation_violations(trace: Trace) -> list[str]:
    """Replay the resource ledger: every consumption is released or still held."""
    net: dict = {}
    for _, key, delta, _, _ in trace.ledger:
        net[key] = net.get(key, 0.0) + delta
    out = []
    for key in set(net) | set(trace.held):
        consumed_unreleased = -net.get(key, 0.0)
        held = trace.held.get(key, 0.0)
        if abs(consumed_unreleased - held) > 1e-6 * max(1.0, held):
            out.append(f"{key}: {consumed_unreleased:g} consumed but unreleased vs {held:g} held")
    return out

"""Stage placement onto per-resource timelines.

Resources are keyed as ``("compute", node)``, ``("storage", node)``,
``("sensor", node)`` and ``("link", window_index)``. Every reservation records
the planning bound it was admitted against, so feasibility can be audited
after the fact without knowing which view the planner saw.

Stage model, per kind:

* sensing runs on a sensor node while the task target is in view, holding the
  sensor and the raw product's storage;
* processing and fusion run where their input lies, at
  ``min(max_rate, planning bound)`` GB/s, holding that rate and the input's
  storage;
* transmission moves the predecessor's output to another satellite inside a
  single contact window, holding the whole link;
* distribution moves it to a ground station the same way.
"""

from __future__ import annotations

import csv
import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .cluster import CapabilityDescriptor
from .orbits import ContactPlan
from .tasks import TaskSpec

EPS = 1e-9
BITS_PER_GB = 8e9


class FailureReason(str, enum.Enum):
    INSUFFICIENT_RESOURCES = "insufficient_resources"
    NO_WINDOW = "no_window"
    DEADLINE_INFEASIBLE = "deadline_infeasible"
    PREEMPTED = "preempted"
    STALE_VIEW_CONFLICT = "stale_view_conflict"


class SchedulingError(ValueError):
    pass


@dataclass(frozen=True)
class SchedulerConfig:
    cycles: Mapping[int, float] = field(default_factory=lambda: {3: 60.0, 2: 180.0, 1: 600.0})
    # fraction of each node's compute kept free for onboard housekeeping
    headroom: float = 0.05
    # (task_type, regime) -> throughput multiplier
    efficiency: Mapping[tuple, float] = field(default_factory=dict)
    slot: float = 1.0
    search_budget: int = 400
    max_victims: int = 3
    preemption_budget: int = 64

    def __post_init__(self):
        if set(self.cycles) != {1, 2, 3}:
            raise ValueError("planning cycles must be given for priorities 1, 2 and 3")
        if not self.cycles[3] < self.cycles[2] < self.cycles[1]:
            raise ValueError("planning cycles must shrink as priority grows")
        if not 0 <= self.headroom < 1:
            raise ValueError("headroom must lie in [0, 1)")
        if self.slot <= 0 or self.search_budget < 1:
            raise ValueError("slot and search budget must be positive")


def planning_cycle(priority: int, config: SchedulerConfig | None = None) -> float:
    if priority == 4:
        raise SchedulingError("emergency tasks are planned on arrival, not on a cycle")
    config = config or SchedulerConfig()
    if priority not in config.cycles:
        raise SchedulingError(f"no planning cycle for priority {priority}")
    return float(config.cycles[priority])


# -- timelines ---------------------------------------------------------------------


@dataclass(frozen=True)
class Reservation:
    start: float
    end: float
    amount: float
    task_id: int
    stage_id: str
    bound: float
    priority: int = 1
    seq: int = 0


def _peak(reservations: Iterable[Reservation], s: float, e: float) -> float:
    """Largest summed amount over [s, e)."""
    live = [r for r in reservations if r.start < e - EPS and r.end > s + EPS]
    if not live:
        return 0.0
    points = [s] + [r.start for r in live if r.start > s]
    best = 0.0
    for p in points:
        tot = sum(r.amount for r in live if r.start <= p + EPS and r.end > p + EPS)
        best = max(best, tot)
    return best


class ResourceTimeline:
    """Reservations per resource key, in commit order."""

    def __init__(self):
        self._by_key: dict = {}
        self._seq = 0

    def keys(self):
        return list(self._by_key)

    def reservations(self, key) -> list[Reservation]:
        return self._by_key.get(key, [])

    def all(self):
        for k, lst in self._by_key.items():
            for r in lst:
                yield k, r

    def peak(self, key, s: float, e: float) -> float:
        return _peak(self._by_key.get(key, ()), s, e)

    def fits(self, key, s: float, e: float, amount: float, bound: float) -> bool:
        return self.peak(key, s, e) + amount <= bound + EPS * max(1.0, bound)

    def reserve(self, key, start, end, amount, task_id, stage_id, bound, priority=1) -> Reservation:
        if not end > start:
            raise SchedulingError(f"reservation for task {task_id}/{stage_id} has non-positive length")
        self._seq += 1
        r = Reservation(start, end, amount, task_id, stage_id, bound, priority, self._seq)
        self._by_key.setdefault(key, []).append(r)
        return r

    def restore(self, items: Iterable[tuple]) -> None:
        for key, r in items:
            self._by_key.setdefault(key, []).append(r)
        for lst in self._by_key.values():
            lst.sort(key=lambda r: r.seq)

    def remove(self, key, r: Reservation) -> None:
        self._by_key[key].remove(r)

    def release_task(self, task_id, after: float = -math.inf) -> list[tuple]:
        """Drop the task's reservations that end after ``after``; returns them."""
        out = []
        for key, lst in self._by_key.items():
            keep = []
            for r in lst:
                if r.task_id == task_id and r.end > after:
                    out.append((key, r))
                else:
                    keep.append(r)
            lst[:] = keep
        return out

    def tasks(self, after: float = -math.inf) -> dict:
        """task_id -> priority for tasks holding reservations that end after ``after``."""
        out = {}
        for _, r in self.all():
            if r.end > after:
                out[r.task_id] = r.priority
        return out

    def prune(self, before: float) -> None:
        for lst in self._by_key.values():
            lst[:] = [r for r in lst if r.end > before]

    def earliest_start(self, constraints, ready: float, duration, lo: float = -math.inf, hi: float = math.inf, slot: float = 1.0):
        """First slot-aligned start >= max(ready, lo) where every constraint fits.

        ``constraints`` is a list of (key, amount, bound); ``duration`` maps a
        start time to a stage length. Returns (start, length) or None when the
        stage cannot end by ``hi``.
        """
        c0 = _ceil_slot(max(ready, lo), slot)
        cands = {c0}
        for key, _, _ in constraints:
            for r in self._by_key.get(key, ()):
                c = _ceil_slot(r.end, slot)
                if c > c0:
                    cands.add(c)
        for c in sorted(cands):
            d = duration(c)
            if c + d > hi + EPS:
                return None
            if all(self.fits(k, c, c + d, a, b) for k, a, b in constraints):
                return c, d
        return None


def _ceil_slot(t: float, slot: float) -> float:
    return math.ceil(t / slot - 1e-9) * slot


# -- views and plans ---------------------------------------------------------------


class StaticView:
    """A fixed view: node -> {resource: amount}; handy for tests and tools."""

    def __init__(self, amounts: Mapping, timestamp: float | None = 0.0):
        self.amounts = {n: dict(v) for n, v in amounts.items()}
        self.ts = timestamp

    def amount(self, node, resource) -> float:
        return self.amounts.get(node, {}).get(resource, 0.0)

    def timestamp(self, node):
        return self.ts


def planning_bound(view, node, resource: str, cap: CapabilityDescriptor, headroom: float = 0.0) -> float:
    """What the planner may commit on ``node`` according to ``view``."""
    if resource == "compute":
        seen = min(view.amount(node, "compute"), cap.compute_capacity)
        return max(0.0, seen - headroom * cap.compute_capacity)
    if resource == "storage":
        return max(0.0, min(view.amount(node, "storage"), cap.storage_capacity))
    if resource == "sensor":
        return 1.0 if cap.sensor_types and view.amount(node, "sensor") > 0 else 0.0
    raise KeyError(resource)


@dataclass(frozen=True)
class ScheduleEntry:
    task_id: int
    stage_id: str
    kind: str
    node_id: int
    start: float
    end: float
    resources: tuple  # ((key, amount, bound), ...)
    dst: int | str | None = None
    window: int | None = None
    view_ts: float | None = None
    planned_at: float = 0.0
    priority: int = 1

    @property
    def location(self):
        """Where the stage's output lies once it completes."""
        return self.dst if self.kind == "transmission" else self.node_id

    def amount(self, resource: str) -> float:
        for (res, _), amt, _ in self.resources:
            if res == resource:
                return amt
        return 0.0


@dataclass
class Plan:
    entries: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)  # task_id -> FailureReason
    preempted: list = field(default_factory=list)
    completed: list = field(default_factory=list)  # nothing left to place

    def extend(self, other: "Plan") -> "Plan":
        self.entries.extend(other.entries)
        self.failures.update(other.failures)
        self.preempted.extend(other.preempted)
        self.completed.extend(other.completed)
        return self

    def placed(self) -> list[int]:
        seen = []
        for e in self.entries:
            if e.task_id not in seen:
                seen.append(e.task_id)
        return seen

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["task_id", "stage_id", "node_id", "resource", "amount", "start_s", "end_s", "status", "fail_reason"])
            for e in self.entries:
                for (res, _), amt, _ in e.resources:
                    w.writerow([e.task_id, e.stage_id, e.node_id, res, repr(amt), repr(e.start), repr(e.end), "placed", ""])
            for tid in sorted(self.failures):
                w.writerow([tid, "", "", "", "", "", "", "failed", self.failures[tid].value])


# -- single-task placement ------------------------------------------------------------


@dataclass
class _Option:
    sort_key: tuple
    entry: ScheduleEntry


class _Failure:
    """Keeps the reason from the deepest stage the search reached."""

    def __init__(self):
        self.depth = -1
        self.reason = FailureReason.NO_WINDOW

    def note(self, depth: int, reason: FailureReason):
        if depth > self.depth:
            self.depth, self.reason = depth, reason


_REASON_RANK = {FailureReason.NO_WINDOW: 0, FailureReason.INSUFFICIENT_RESOURCES: 1, FailureReason.DEADLINE_INFEASIBLE: 2}


class _Placer:
    def __init__(self, task, view, plan, timelines, t_now, caps, config, done, passes):
        self.task = task
        self.view = view
        self.plan = plan
        self.tl = timelines
        self.t_now = t_now
        self.caps = caps
        self.cfg = config
        self.done = done
        self.passes = passes
        self.budget = config.search_budget
        self.fail = _Failure()
        self.loc: dict = {sid: loc for sid, (loc, _) in done.items()}
        self.finish: dict = {sid: t for sid, (_, t) in done.items()}
        self.entries: list = []
        self.held: list = []
        self.todo = [s for s in task.order() if s not in done]
        self._bounds: dict = {}

    # helpers
    def bound(self, node, res):
        key = (node, res)
        b = self._bounds.get(key)
        if b is None:
            b = planning_bound(self.view, node, res, self.caps[node], self.cfg.headroom if res == "compute" else 0.0)
            self._bounds[key] = b
        return b

    def load(self, node, t):
        b = self.caps[node].compute_capacity
        return self.tl.peak(("compute", node), t, t + self.cfg.slot) / b if b > 0 else 0.0

    def ready(self, sid):
        preds = self.task.predecessors(sid)
        return max([self.t_now, self.task.arrival] + [self.finish[p] for p in preds])

    def source(self, sid):
        locs = {self.loc[p] for p in self.task.predecessors(sid)}
        return locs

    def entry(self, sid, kind, node, start, length, resources, dst=None, window=None):
        ts = self.view.timestamp(node) if not isinstance(node, str) else None
        return ScheduleEntry(
            self.task.task_id, sid, kind, node, start, start + length,
            tuple(r for r in resources if r[1] > 0), dst, window, ts, self.t_now, self.task.priority,
        )

    # option generation per stage kind
    def options(self, sid) -> tuple[list[_Option], FailureReason]:
        st = self.task.stage(sid)
        ready = self.ready(sid)
        hi = self.task.deadline
        opts: list[_Option] = []
        reasons: list[FailureReason] = []
        if st.kind == "sensing":
            self._sensing(sid, st, ready, hi, opts, reasons)
        elif st.computes:
            self._compute(sid, st, ready, hi, opts, reasons)
        else:
            self._move(sid, st, ready, hi, opts, reasons)
        opts.sort(key=lambda o: o.sort_key)
        reason = max(reasons, key=_REASON_RANK.get) if reasons else FailureReason.NO_WINDOW
        return opts, reason

    def _fit(self, cons, ready, dur, lo, hi, opts_reason):
        got = self.tl.earliest_start(cons, ready, dur, lo=lo, hi=hi, slot=self.cfg.slot)
        if got is not None:
            return got
        c0 = _ceil_slot(max(ready, lo), self.cfg.slot)
        # would it fit on an otherwise empty timeline?
        if c0 + dur(c0) <= hi + EPS:
            opts_reason.append(FailureReason.INSUFFICIENT_RESOURCES)
        else:
            opts_reason.append(FailureReason.DEADLINE_INFEASIBLE)
        return None

    def _sensing(self, sid, st, ready, hi, opts, reasons):
        length = st.output_volume / st.max_rate if st.max_rate else 0.0
        length = max(length, self.cfg.slot)
        if self.passes is not None:
            # precomputed passes: only nodes that have one can sense at all
            nodes = [n for n in self.passes if n in self.caps and self.bound(n, "sensor") > 0]
            passes = {n: [(s, e) for s, e in self.passes[n] if e > ready] for n in nodes}
            if len(nodes) < len(self.caps):
                reasons.append(FailureReason.NO_WINDOW)
        else:
            nodes = [n for n in self.caps if self.bound(n, "sensor") > 0]
            passes = self.plan.sensing_passes(self.task.target, ready, hi, nodes)
        if not nodes and not reasons:
            reasons.append(FailureReason.INSUFFICIENT_RESOURCES)
        for n in nodes:
            ivs = passes.get(n) or []
            if not ivs:
                reasons.append(FailureReason.NO_WINDOW)
                continue
            cons = [(("sensor", n), 1.0, 1.0), (("storage", n), st.output_volume, self.bound(n, "storage"))]
            cons = [c for c in cons if c[1] > 0]
            for s, e in ivs:
                if s > hi:
                    break
                got = self._fit(cons, ready, lambda c: length, s, min(e, hi), reasons)
                if got is not None:
                    c, d = got
                    opts.append(_Option((c + d, self.load(n, c), 0, n), self.entry(sid, "sensing", n, c, d, cons)))
                    break

    def _compute(self, sid, st, ready, hi, opts, reasons):
        src = self.source(sid)
        if len(src) > 1:
            reasons.append(FailureReason.NO_WINDOW)
            return
        nodes = sorted(src) if src else sorted(self.caps)
        for n in nodes:
            if isinstance(n, str) or n not in self.caps:
                reasons.append(FailureReason.NO_WINDOW)
                continue
            bound = self.bound(n, "compute")
            eff = self.cfg.efficiency.get((self.task.task_type, self.caps[n].regime), 1.0)
            rate = min(st.max_rate if st.max_rate else math.inf, bound)
            if rate <= EPS or eff <= 0:
                reasons.append(FailureReason.INSUFFICIENT_RESOURCES)
                continue
            length = st.compute_demand / (rate * eff)
            length = max(length, EPS)
            cons = [(("compute", n), rate, bound), (("storage", n), st.input_volume, self.bound(n, "storage"))]
            cons = [c for c in cons if c[1] > 0]
            got = self._fit(cons, ready, lambda c: length, -math.inf, hi, reasons)
            if got is not None:
                c, d = got
                opts.append(_Option((c + d, self.load(n, c), 0, n), self.entry(sid, st.kind, n, c, d, cons)))

    def _move(self, sid, st, ready, hi, opts, reasons):
        src = self.source(sid)
        if len(src) != 1:
            reasons.append(FailureReason.NO_WINDOW)
            return
        (a,) = src
        bits = st.transfer_demand * BITS_PER_GB
        if st.kind == "distribution" or st.affinity == "ground":
            peers = self.plan.ground_stations_of(a)
        else:
            peers = [b for b in self.plan.neighbors(a) if b in self.caps]
        if not peers:
            reasons.append(FailureReason.NO_WINDOW)
        for b in peers:
            best_end = math.inf
            for w in self.plan.windows_after(a, b, ready):
                # a window opening after the best finish so far cannot beat it
                if w.start > hi or w.start >= best_end:
                    break
                if min(w.end, hi) - max(w.start, ready) < bits / w.capacity:
                    # cannot carry the volume even on an idle link
                    reasons.append(FailureReason.DEADLINE_INFEASIBLE)
                    continue
                wid = self.plan.window_index(w)
                cons = [(("link", wid), w.capacity, w.capacity)]
                dur = lambda c, w=w: bits / w.capacity + w.propagation_delay(c)
                got = self._fit(cons, ready, dur, w.start, min(w.end, hi), reasons)
                if got is not None:
                    c, d = got
                    key = (0, b) if not isinstance(b, str) else (1, b)
                    tie = self.load(b, c) if not isinstance(b, str) else 0.0
                    opts.append(_Option((c + d, tie) + key, self.entry(sid, st.kind, a, c, d, cons, dst=b, window=wid)))
                    best_end = min(best_end, c + d)

    # depth-first search in greedy order
    def search(self, depth: int = 0) -> bool:
        if depth == len(self.todo):
            return True
        sid = self.todo[depth]
        opts, reason = self.options(sid)
        if not opts:
            self.fail.note(depth, reason)
            return False
        for o in opts:
            if self.budget <= 0:
                return False
            self.budget -= 1
            e = o.entry
            held = [(k, self.tl.reserve(k, e.start, e.end, a, e.task_id, e.stage_id, b, e.priority)) for k, a, b in e.resources]
            self.entries.append(e)
            self.loc[sid] = e.location
            self.finish[sid] = e.end
            if self.search(depth + 1):
                self.held.extend(held)
                return True
            self.entries.pop()
            del self.loc[sid], self.finish[sid]
            for k, r in held:
                self.tl.remove(k, r)
        self.fail.note(depth, reason)
        return False


def place_dag(
    task: TaskSpec,
    view,
    contact_plan: ContactPlan,
    timelines: ResourceTimeline,
    t_now: float,
    capabilities: Mapping[int, CapabilityDescriptor],
    config: SchedulerConfig | None = None,
    done: Mapping | None = None,
    passes: Mapping | None = None,
):
    """Greedy earliest-finish placement of the task's remaining stages.

    Stages are visited in topological order; each candidate placement is
    ranked by (finish, node load, node id) and the search backtracks when a
    later stage cannot be placed. On success the reservations are committed
    and the entries returned; otherwise nothing is retained and a
    :class:`FailureReason` is returned.

    ``done`` maps completed stage ids to (output location, finish time).
    """
    config = config or SchedulerConfig()
    done = dict(done or {})
    if t_now > task.deadline:
        return FailureReason.DEADLINE_INFEASIBLE
    p = _Placer(task, view, contact_plan, timelines, t_now, capabilities, config, done, passes)
    if not p.todo:
        return []
    if p.search():
        return p.entries
    return p.fail.reason


def _periodic_key(t: TaskSpec):
    return (-t.priority, t.deadline, t.arrival, t.task_id)


def plan_periodic(tasks: Sequence[TaskSpec], view, contact_plan, timelines, t_now, capabilities, config=None, passes: Mapping | None = None) -> Plan:
    """Place regular tasks in (priority desc, deadline asc, arrival asc) order."""
    plan = Plan()
    for t in sorted(tasks, key=_periodic_key):
        got = place_dag(t, view, contact_plan, timelines, t_now, capabilities, config, passes=(passes or {}).get(t.task_id))
        if isinstance(got, FailureReason):
            plan.failures[t.task_id] = got
        else:
            plan.entries.extend(got)
    return plan


def replan_terminated(items: Sequence[tuple], view, contact_plan, timelines, t_now, capabilities, config=None, passes: Mapping | None = None) -> Plan:
    """Re-place the unfinished stages of terminated tasks.

    ``items`` holds (task, done) pairs where ``done`` maps completed stage ids
    to (output location, finish time).
    """
    plan = Plan()
    for task, done in sorted(items, key=lambda it: _periodic_key(it[0])):
        if all(s in done for s in task.order()):
            plan.completed.append(task.task_id)
            continue
        if t_now > task.deadline:
            plan.failures[task.task_id] = FailureReason.DEADLINE_INFEASIBLE
            continue
        got = place_dag(task, view, contact_plan, timelines, t_now, capabilities, config, done=done, passes=(passes or {}).get(task.task_id))
        if isinstance(got, FailureReason):
            plan.failures[task.task_id] = got
        else:
            plan.entries.extend(got)
    return plan


def plan_emergency(task: TaskSpec, view, contact_plan, timelines, t_now, capabilities, config=None, passes=None, done=None) -> Plan:
    """Place an emergency task now, displacing lower-priority work if needed.

    Victims are whole tasks. Sets are tried by increasing size, each size in
    lexicographic order over candidates sorted lowest priority first, so the
    first set that makes room is minimal by count. Priority-4 work is never
    displaced.
    """
    config = config or SchedulerConfig()
    if task.priority != 4:
        raise SchedulingError("only priority-4 tasks take the emergency path")
    plan = Plan()
    got = place_dag(task, view, contact_plan, timelines, t_now, capabilities, config, done=done, passes=passes)
    if not isinstance(got, FailureReason):
        plan.entries.extend(got)
        return plan
    first_reason = got
    holders = timelines.tasks(after=t_now)
    window_end = task.deadline
    cands = []
    for tid, prio in holders.items():
        if prio >= 4 or tid == task.task_id:
            continue
        if any(r.task_id == tid and r.start < window_end and r.end > t_now for _, r in timelines.all()):
            cands.append((prio, tid))
    cands.sort()
    # skip the victim search when clearing every candidate would still not help
    removable = {tid for _, tid in cands}
    probe = ResourceTimeline()
    for key, r in timelines.all():
        if r.task_id not in removable:
            probe.reserve(key, r.start, r.end, r.amount, r.task_id, r.stage_id, r.bound, r.priority)
    if not cands or isinstance(place_dag(task, view, contact_plan, probe, t_now, capabilities, config, done=done, passes=passes), FailureReason):
        plan.failures[task.task_id] = first_reason
        return plan
    attempts = 0
    for k in range(1, min(config.max_victims, len(cands)) + 1):
        for combo in itertools.combinations(cands, k):
            if attempts >= config.preemption_budget:
                plan.failures[task.task_id] = first_reason
                return plan
            attempts += 1
            removed = []
            for _, tid in combo:
                removed.extend(timelines.release_task(tid, after=t_now))
            got = place_dag(task, view, contact_plan, timelines, t_now, capabilities, config, done=done, passes=passes)
            if not isinstance(got, FailureReason):
                plan.entries.extend(got)
                plan.preempted.extend(tid for _, tid in combo)
                return plan
            timelines.restore(removed)
    plan.failures[task.task_id] = first_reason
    return plan


@dataclass(frozen=True)
class Proposal:
    priority: int
    timestamp: float
    entries: tuple
    task_id: int = -1


def arbitrate(proposals: Sequence[Proposal], timelines: ResourceTimeline) -> tuple[list, list]:
    """Admit proposals in (priority desc, timestamp asc) order, each whole or not at all."""
    accepted, rejected = [], []
    for prop in sorted(proposals, key=lambda p: (-p.priority, p.timestamp, p.task_id)):
        held = []
        ok = True
        for e in prop.entries:
            for key, amt, bound in e.resources:
                if not timelines.fits(key, e.start, e.end, amt, bound):
                    ok = False
                    break
                held.append((key, timelines.reserve(key, e.start, e.end, amt, e.task_id, e.stage_id, bound, e.priority)))
            if not ok:
                break
        if ok:
            accepted.append(prop)
        else:
            for key, r in held:
                timelines.remove(key, r)
            rejected.append(prop)
    return accepted, rejected


# -- auditing ----------------------------------------------------------------------


def capability_bound(key, capabilities: Mapping[int, CapabilityDescriptor], contact_plan: ContactPlan | None) -> float:
    res, ref = key
    if res == "link":
        return contact_plan.windows[ref].capacity if contact_plan is not None else math.inf
    return capabilities[ref].bound(res)


def audit_timelines(timelines: ResourceTimeline, capabilities, contact_plan=None) -> list[str]:
    """Capacity violations: each reservation against its own bound, counting
    only reservations committed no later than it, and against the capability."""
    out = []
    for key in timelines.keys():
        lst = sorted(timelines.reservations(key), key=lambda r: r.seq)
        cap = capability_bound(key, capabilities, contact_plan)
        for i, r in enumerate(lst):
            peak = _peak(lst[: i + 1], r.start, r.end)
            if peak > r.bound + EPS * max(1.0, r.bound):
                out.append(f"{key}: {peak:g} > planning bound {r.bound:g} during task {r.task_id}/{r.stage_id}")
            if peak > cap + EPS * max(1.0, cap):
                out.append(f"{key}: {peak:g} > capability {cap:g} during task {r.task_id}/{r.stage_id}")
    return out


def audit_entries(entries: Sequence[ScheduleEntry], tasks: Mapping[int, TaskSpec], contact_plan: ContactPlan, done: Mapping | None = None) -> list[str]:
    """Precedence, window containment and deadline checks on placed entries.

    ``done`` maps task id to that task's completed stages (stage id ->
    (location, finish)) when the entries come from a re-plan.
    """
    out = []
    by_task: dict = {}
    for e in entries:
        by_task.setdefault(e.task_id, {})[e.stage_id] = e
        task = tasks[e.task_id]
        if not e.end > e.start:
            out.append(f"task {e.task_id}/{e.stage_id}: empty interval")
        if e.end > task.deadline + EPS:
            out.append(f"task {e.task_id}/{e.stage_id}: ends {e.end:g} after deadline {task.deadline:g}")
        if any(a <= 0 for _, a, _ in e.resources):
            out.append(f"task {e.task_id}/{e.stage_id}: non-positive amount")
        if e.window is not None:
            w = contact_plan.windows[e.window]
            if not w.contains(e.start, e.end):
                out.append(f"task {e.task_id}/{e.stage_id}: [{e.start:g}, {e.end:g}) outside window [{w.start:g}, {w.end:g})")
    for tid, stages in by_task.items():
        task = tasks[tid]
        prior = (done or {}).get(tid, {})
        for sid, e in stages.items():
            for p in task.predecessors(sid):
                if p in stages:
                    fin = stages[p].end
                elif p in prior:
                    fin = prior[p][1]
                else:
                    out.append(f"task {tid}/{sid}: predecessor {p} neither placed nor complete")
                    continue
                if e.start < fin - EPS:
                    out.append(f"task {tid}/{sid}: starts {e.start:g} before {p} ends {fin:g}")
    return out


# -- exhaustive oracle for tiny instances ---------------------------------------------

BRUTE_LIMITS = {"tasks": 3, "nodes": 3, "windows": 4}


def brute_force_plan(tasks: Sequence[TaskSpec], view, contact_plan: ContactPlan, t_now: float, capabilities, config: SchedulerConfig | None = None) -> Plan:
    """Best weighted completion by exhaustive search over nodes, windows and start slots.

    Only for tiny instances; shares the stage model with :func:`place_dag` but
    none of its search logic.
    """
    config = config or SchedulerConfig()
    if len(tasks) > BRUTE_LIMITS["tasks"] or len(capabilities) > BRUTE_LIMITS["nodes"] or len(contact_plan.windows) > BRUTE_LIMITS["windows"]:
        raise SchedulingError("instance exceeds the exhaustive-search bounds")
    slot = config.slot
    tasks = list(tasks)
    placed: list = []  # (key, start, end, amount, bound)
    best = {"value": -1, "entries": []}
    chosen: list = []
    total = [sum(t.priority for t in tasks[i:]) for i in range(len(tasks))] + [0]

    def bound(n, res):
        return planning_bound(view, n, res, capabilities[n], config.headroom if res == "compute" else 0.0)

    def ok(key, s, e, amount, b):
        same = [(ps, pe, pa) for k, ps, pe, pa, _ in placed if k == key and ps < e - EPS and pe > s + EPS]
        pts = [s] + [ps for ps, _, _ in same if ps > s]
        for p in pts:
            if sum(pa for ps, pe, pa in same if ps <= p + EPS and pe > p + EPS) + amount > b + EPS * max(1.0, b):
                return False
        return True

    def slots(lo, hi_start):
        c = math.ceil(lo / slot - 1e-9) * slot
        while c <= hi_start + EPS:
            yield c
            c += slot

    def stage_choices(task, sid, loc, fin):
        """Yield (entry, location) for every legal placement of one stage."""
        st = task.stage(sid)
        preds = task.predecessors(sid)
        ready = max([t_now, task.arrival] + [fin[p] for p in preds])
        srcs = {loc[p] for p in preds}
        dl = task.deadline
        if st.kind == "sensing":
            length = max(st.output_volume / st.max_rate if st.max_rate else 0.0, slot)
            for n in sorted(capabilities):
                if bound(n, "sensor") <= 0:
                    continue
                passes = contact_plan.sensing_passes(task.target, ready, dl, [n]).get(n, [])
                cons = [(("sensor", n), 1.0, 1.0), (("storage", n), st.output_volume, bound(n, "storage"))]
                cons = [c for c in cons if c[1] > 0]
                for ps, pe in passes:
                    for c in slots(max(ready, ps), min(pe, dl) - length):
                        yield cons, c, c + length, n, None, None, n
        elif st.kind in ("processing", "fusion"):
            if len(srcs) > 1:
                return
            for n in (sorted(srcs) if srcs else sorted(capabilities)):
                if n not in capabilities:
                    continue
                b = bound(n, "compute")
                eff = config.efficiency.get((task.task_type, capabilities[n].regime), 1.0)
                rate = min(st.max_rate if st.max_rate else math.inf, b)
                if rate <= EPS or eff <= 0:
                    continue
                length = max(st.compute_demand / (rate * eff), EPS)
                cons = [(("compute", n), rate, b), (("storage", n), st.input_volume, bound(n, "storage"))]
                cons = [c for c in cons if c[1] > 0]
                for c in slots(ready, dl - length):
                    yield cons, c, c + length, n, None, None, n
        else:
            if len(srcs) != 1:
                return
            (a,) = srcs
            ground = st.kind == "distribution" or st.affinity == "ground"
            for wid, w in enumerate(contact_plan.windows):
                if w.endpoint_a == a:
                    b = w.endpoint_b
                elif w.endpoint_b == a and not isinstance(w.endpoint_b, str):
                    b = w.endpoint_a
                else:
                    continue
                if ground != isinstance(b, str):
                    continue
                if not ground and b not in capabilities:
                    continue
                bits = st.transfer_demand * BITS_PER_GB
                for c in slots(max(ready, w.start), min(w.end, dl)):
                    e = c + bits / w.capacity + w.propagation_delay(c)
                    if e > min(w.end, dl) + EPS:
                        break
                    yield [(("link", wid), w.capacity, w.capacity)], c, e, a, b, wid, b

    def place_stage(ti, si, loc, fin, value):
        task = tasks[ti]
        order = task.order()
        if si == len(order):
            go(ti + 1, value + task.priority)
            return
        sid = order[si]
        for cons, s, e, node, dst, wid, out_loc in stage_choices(task, sid, loc, fin):
            if all(ok(k, s, e, a, b) for k, a, b in cons):
                for k, a, b in cons:
                    placed.append((k, s, e, a, b))
                entry = ScheduleEntry(task.task_id, sid, task.stage(sid).kind, node, s, e, tuple(cons), dst, wid, None, t_now, task.priority)
                chosen.append(entry)
                loc[sid], fin[sid] = out_loc, e
                place_stage(ti, si + 1, loc, fin, value)
                del loc[sid], fin[sid]
                chosen.pop()
                del placed[len(placed) - len(cons):]

    def go(ti, value):
        if value + total[ti] <= best["value"]:
            return
        if ti == len(tasks):
            best["value"] = value
            best["entries"] = list(chosen)
            return
        if tasks[ti].deadline >= t_now:
            place_stage(ti, 0, {}, {}, value)
        go(ti + 1, value)

    go(0, 0)
    plan = Plan(entries=best["entries"])
    placed_ids = {e.task_id for e in plan.entries}
    for t in tasks:
        if t.task_id not in placed_ids and t.order():
            plan.failures[t.task_id] = FailureReason.INSUFFICIENT_RESOURCES
        elif not t.order():
            plan.completed.append(t.task_id)
    return plan


def weighted_value(plan: Plan, tasks: Sequence[TaskSpec]) -> int:
    """Summed priority of tasks the plan places in full (or that need nothing)."""
    by_id = {t.task_id: t for t in tasks}
    got = 0
    for t in tasks:
        if not t.order() or t.task_id in plan.completed:
            got += t.priority
            continue
        stages = {e.stage_id for e in plan.entries if e.task_id == t.task_id}
        if stages == set(by_id[t.task_id].order()):
            got += t.priority
    return got

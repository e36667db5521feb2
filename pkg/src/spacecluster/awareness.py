"""Resource awareness: how node state reaches the ground control centre.

Two planes share this module. ``yuheng`` partitions nodes into domains around
MEO/GEO anchors, relays reports through the anchor and picks a reporting
interval per resource from its observed volatility. ``baseline`` is a uniform
heartbeat that waits for a direct satellite-ground window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .orbits import C_KM_S, OMEGA_EARTH, ContactPlan, Ephemeris, positions_ecef, station_ecef

VOLATILITY_CLASSES = ("rapid", "moderate", "stable")
MODES = ("yuheng", "baseline")


@dataclass(frozen=True)
class ReportingPolicy:
    rapid_interval: float = 10.0
    moderate_interval: float = 60.0
    stable_interval: float = 300.0
    stable_mode: str = "event_driven"  # or "periodic"
    event_threshold: float = 0.1
    # normalized variation rate (fraction of capacity per second)
    rapid_threshold: float = 1e-3
    moderate_threshold: float = 1e-4
    header_bytes: int = 256
    entry_bytes: int = 64

    def __post_init__(self):
        if not self.rapid_interval < self.moderate_interval < self.stable_interval:
            raise ValueError("reporting intervals must satisfy rapid < moderate < stable")
        if not 0 < self.event_threshold <= 1:
            raise ValueError("event threshold must lie in (0, 1]")
        if self.stable_mode not in ("periodic", "event_driven"):
            raise ValueError(f"unknown stable reporting mode {self.stable_mode!r}")
        if not 0 < self.moderate_threshold < self.rapid_threshold:
            raise ValueError("volatility thresholds must satisfy 0 < moderate < rapid")

    def mode(self, cls: str) -> str:
        return self.stable_mode if cls == "stable" else "periodic"


def classify_volatility(history: Sequence[float], capacity: float, dt: float, policy: ReportingPolicy | None = None) -> str:
    """Volatility class of a regularly sampled resource series.

    v = mean(|delta value| / capacity) / dt, compared against the policy
    thresholds.
    """
    policy = policy or ReportingPolicy()
    h = np.asarray(history, dtype=float)
    if h.size < 2 or capacity <= 0:
        return "stable"
    v = float(np.mean(np.abs(np.diff(h))) / capacity / dt)
    if v >= policy.rapid_threshold:
        return "rapid"
    if v >= policy.moderate_threshold:
        return "moderate"
    return "stable"


def reporting_interval(cls: str, policy: ReportingPolicy | None = None) -> float:
    """Periodic emission interval; ``inf`` for event-driven classes."""
    policy = policy or ReportingPolicy()
    if cls not in VOLATILITY_CLASSES:
        raise ValueError(f"unknown volatility class {cls!r}")
    if policy.mode(cls) == "event_driven":
        return math.inf
    return {"rapid": policy.rapid_interval, "moderate": policy.moderate_interval, "stable": policy.stable_interval}[cls]


def report_size(n_entries: int, policy: ReportingPolicy | None = None) -> int:
    policy = policy or ReportingPolicy()
    return policy.header_bytes + policy.entry_bytes * n_entries


@dataclass(frozen=True)
class ResourceReport:
    node_id: int
    generation_time: float
    payload: Mapping[str, tuple[float, float]]  # resource -> (value, state_timestamp)
    size: int = 0

    def __post_init__(self):
        for res, (_, ts) in self.payload.items():
            if ts > self.generation_time:
                raise ValueError(f"report from node {self.node_id}: {res} state postdates generation")
        if self.size <= 0:
            object.__setattr__(self, "size", report_size(len(self.payload)))


@dataclass
class ViewEntry:
    value: float
    state_timestamp: float
    receipt_time: float


@dataclass
class ResourceView:
    """Last-known state per node and resource, as held at the control centre."""

    entries: dict = field(default_factory=dict)  # node -> {resource: ViewEntry}
    defaults: dict = field(default_factory=dict)  # node -> {resource: value} before any report

    def amount(self, node, resource) -> float:
        e = self.entries.get(node, {}).get(resource)
        if e is not None:
            return e.value
        return self.defaults.get(node, {}).get(resource, 0.0)

    def timestamp(self, node) -> float | None:
        res = self.entries.get(node)
        if not res:
            return None
        return max(e.state_timestamp for e in res.values())

    def snapshot(self) -> dict:
        return {n: {r: (e.value, e.state_timestamp) for r, e in res.items()} for n, res in self.entries.items()}


def merge_report(view: ResourceView, report: ResourceReport, receipt_time: float) -> ResourceView:
    """Fold a delivered report into the view; older state never overwrites newer."""
    if receipt_time < report.generation_time:
        raise ValueError("a report cannot be received before it is generated")
    node = view.entries.setdefault(report.node_id, {})
    for res, (value, ts) in report.payload.items():
        cur = node.get(res)
        if cur is None or ts > cur.state_timestamp:
            node[res] = ViewEntry(value, ts, receipt_time)
    return view


def view_staleness(view, nodes: Sequence, t: float, start: float = 0.0) -> tuple[dict, float]:
    """Per-node age of the freshest known state, and the mean over ``nodes``.

    Nodes that never reported are as old as the scenario.
    """
    delays = {}
    for n in nodes:
        ts = view.timestamp(n)
        delays[n] = t - (start if ts is None else ts)
    mean = float(np.mean(list(delays.values()))) if delays else 0.0
    return delays, mean


@dataclass(frozen=True)
class AwarenessDomain:
    anchor_id: int | str
    members: tuple


def partition_domains(nodes: Sequence, anchors: Sequence, t: float, position: Callable) -> list[AwarenessDomain]:
    """Assign every node to its nearest anchor (slant range at ``t``).

    Ties go to the lowest anchor id; anchors belong to their own domain.
    """
    if not anchors:
        raise ValueError("domain partitioning needs at least one anchor")
    anchors = sorted(anchors)
    anchor_pos = {a: np.asarray(position(a, t)) for a in anchors}
    members: dict = {a: [a] for a in anchors}
    anchor_set = set(anchors)
    for n in nodes:
        if n in anchor_set:
            continue
        p = np.asarray(position(n, t))
        best = min(anchors, key=lambda a: (float(np.linalg.norm(anchor_pos[a] - p)), a))
        members[best].append(n)
    return [AwarenessDomain(a, tuple(sorted(members[a]))) for a in anchors]


def domain_map(domains: Sequence[AwarenessDomain]) -> dict:
    return {m: d.anchor_id for d in domains for m in d.members}


@dataclass(frozen=True)
class Hop:
    src: object
    dst: object
    send: float
    arrive: float
    window_start: float


@dataclass(frozen=True)
class Route:
    hops: tuple[Hop, ...]
    delivery_time: float | None

    @property
    def dropped(self) -> bool:
        return self.delivery_time is None


def _hop(plan: ContactPlan, a, b, t: float, bits: float) -> Hop | None:
    for w in plan.windows_after(a, b, t):
        send = max(t, w.start)
        tx = bits / w.capacity
        if send + tx <= w.end:
            return Hop(a, b, send, send + tx + w.propagation_delay(send), w.start)
    return None


def _ground_hop(plan: ContactPlan, node, t: float, bits: float) -> Hop | None:
    best = None
    for st in plan.ground_stations_of(node):
        h = _hop(plan, node, st, t, bits)
        if h is not None and (best is None or h.arrive < best.arrive):
            best = h
    return best


def plan_report_route(node_id, t: float, mode: str, plan: ContactPlan, domains: Mapping | None = None, size_bytes: int = 320, allow_isl_relay: bool = False) -> Route:
    """Route one report to the ground and return when it lands.

    yuheng: node -> domain anchor -> ground, storing and forwarding at each end
    of a closed link. baseline: node -> ground directly, waiting for the next
    satellite-ground window (optionally via one ISL neighbour).
    """
    if mode not in MODES:
        raise ValueError(f"unknown awareness mode {mode!r}")
    bits = 8.0 * size_bytes
    hops: list[Hop] = []
    if mode == "yuheng":
        anchor = (domains or {}).get(node_id, node_id)
        cur, now = node_id, t
        if anchor != node_id:
            h = _hop(plan, node_id, anchor, t, bits)
            if h is None:
                return Route((), None)
            hops.append(h)
            cur, now = anchor, h.arrive
        h = _ground_hop(plan, cur, now, bits)
        if h is None:
            return Route(tuple(hops), None)
        hops.append(h)
        return Route(tuple(hops), h.arrive)
    h = _ground_hop(plan, node_id, t, bits)
    best = Route((h,), h.arrive) if h is not None else Route((), None)
    if allow_isl_relay:
        for nb in plan.neighbors(node_id):
            w = plan.open_window(node_id, nb, t)
            if w is None:
                continue
            h1 = _hop(plan, node_id, nb, t, bits)
            if h1 is None:
                continue
            h2 = _ground_hop(plan, nb, h1.arrive, bits)
            if h2 is not None and (best.dropped or h2.arrive < best.delivery_time):
                best = Route((h1, h2), h2.arrive)
    return best


# -- vectorised routing --------------------------------------------------------------


class _PairWindows:
    __slots__ = ("starts", "ends", "caps", "ids")

    def __init__(self, windows, ids):
        self.starts = np.array([w.start for w in windows], dtype=float)
        self.ends = np.array([w.end for w in windows], dtype=float)
        self.caps = np.array([w.capacity for w in windows], dtype=float)
        self.ids = np.asarray(ids, dtype=np.int64)


class BatchRouter:
    """Route many reports at once; agrees with ``plan_report_route`` hop for hop."""

    def __init__(self, plan: ContactPlan):
        self.plan = plan
        self.window_list = plan.windows
        self._wid = {id(w): i for i, w in enumerate(plan.windows)}
        self._pairs: dict = {}
        eph = plan.ephemerides
        self._row = {e.node_id: i for i, e in enumerate(eph)}
        self._elements = tuple(
            np.array([getattr(e, f) for e in eph], dtype=float)
            for f in ("semi_major_axis", "inclination", "raan", "arg_latitude", "mean_motion", "epoch")
        )
        self._station = {s.id: station_ecef(s) for s in plan.stations}

    def pair(self, a, b) -> _PairWindows:
        key = (a, b)
        pw = self._pairs.get(key)
        if pw is None:
            ws = self.plan.windows_between(a, b)
            pw = _PairWindows(ws, [self._wid[id(w)] for w in ws])
            self._pairs[key] = pw
        return pw

    def _positions(self, node, times):
        # inertial frame; only distances are taken from these
        if isinstance(node, str):
            return self._station_xyz(node, times)
        return self._sat_xyz(np.full(len(times), self._row[node]), times)

    def _sat_xyz(self, rows: np.ndarray, times: np.ndarray) -> np.ndarray:
        a, inc, raan, u0, n, epoch = (x[rows] for x in self._elements)
        u = u0 + n * (times - epoch)
        cu, su = np.cos(u), np.sin(u)
        co, so = np.cos(raan), np.sin(raan)
        ci, si = np.cos(inc), np.sin(inc)
        out = np.empty((len(times), 3))
        out[:, 0] = a * (co * cu - so * ci * su)
        out[:, 1] = a * (so * cu + co * ci * su)
        out[:, 2] = a * si * su
        return out

    def _station_xyz(self, station, times: np.ndarray) -> np.ndarray:
        g = self._station[station]
        th = OMEGA_EARTH * times
        c, s = np.cos(th), np.sin(th)
        out = np.empty((len(times), 3))
        out[:, 0] = c * g[0] - s * g[1]
        out[:, 1] = s * g[0] + c * g[1]
        out[:, 2] = g[2]
        return out

    def _light_time(self, a, b, send: np.ndarray) -> np.ndarray:
        pa = self._positions(a, send)
        pb = self._positions(b, send)
        d = pa - pb
        return np.sqrt(np.einsum("ij,ij->i", d, d)) / C_KM_S

    def _send(self, a, b, t: np.ndarray, bits):
        """Send times, transmission times and window ids for the first window that fits."""
        pw = self.pair(a, b)
        n = len(t)
        send = np.full(n, np.nan)
        tx_out = np.full(n, np.nan)
        wid = np.full(n, -1, dtype=np.int64)
        if n == 0 or pw.starts.size == 0:
            return send, tx_out, wid
        bits = np.broadcast_to(np.asarray(bits, dtype=float), (n,))
        idx = np.searchsorted(pw.ends, t, side="right")
        todo = np.arange(n)
        while todo.size:
            todo = todo[idx[todo] < pw.starts.size]
            if not todo.size:
                break
            j = idx[todo]
            s = np.maximum(t[todo], pw.starts[j])
            tx = bits[todo] / pw.caps[j]
            fits = s + tx <= pw.ends[j]
            hit = todo[fits]
            send[hit] = s[fits]
            tx_out[hit] = tx[fits]
            wid[hit] = pw.ids[j[fits]]
            todo = todo[~fits]
            idx[todo] += 1
        return send, tx_out, wid

    def hop(self, a, b, t: np.ndarray, bits):
        """Arrival times and window ids (NaN / -1 where no window remains).

        ``bits`` is a scalar or one size per report.
        """
        send, tx, wid = self._send(a, b, t, bits)
        arrive = send + tx
        got = ~np.isnan(send)
        if got.any():
            arrive[got] += self._light_time(a, b, send[got])
        return arrive, wid

    def ground_hop(self, node, t: np.ndarray, bits):
        best = np.full(len(t), np.nan)
        best_wid = np.full(len(t), -1, dtype=np.int64)
        stations = self.plan.ground_stations_of(node)
        if not stations:
            return best, best_wid
        found = [self._send(node, st, t, bits) for st in stations]
        # one satellite position per (report, station) candidate, computed together
        sel = [np.flatnonzero(~np.isnan(send)) for send, _, _ in found]
        rows = np.concatenate(sel)
        if rows.size == 0:
            return best, best_wid
        sends = np.concatenate([f[0][i] for f, i in zip(found, sel)])
        sat = self._sat_xyz(np.full(rows.size, self._row[node]), sends)
        k = 0
        for st, (send, tx, wid), i in zip(stations, found, sel):
            if i.size == 0:
                continue
            d = sat[k : k + i.size] - self._station_xyz(st, send[i])
            k += i.size
            arr = send[i] + tx[i] + np.sqrt(np.einsum("ij,ij->i", d, d)) / C_KM_S
            better = np.isnan(best[i]) | (arr < best[i])
            best[i[better]] = arr[better]
            best_wid[i[better]] = wid[i[better]]
        return best, best_wid

    def route(self, node, emits: np.ndarray, mode: str, anchors_at: np.ndarray | None, bits):
        """Delivery times plus (hop1, hop2) window ids for each emission of ``node``.

        ``anchors_at`` gives the domain anchor at each emission (yuheng only).
        """
        n = len(emits)
        bits = np.broadcast_to(np.asarray(bits, dtype=float), (n,))
        if mode == "baseline":
            d, w1 = self.ground_hop(node, emits, bits)
            return d, w1, np.full(n, -1, dtype=np.int64)
        deliver = np.full(n, np.nan)
        w1 = np.full(n, -1, dtype=np.int64)
        w2 = np.full(n, -1, dtype=np.int64)
        if anchors_at is None:
            anchors_at = np.full(n, node)
        for anc in np.unique(anchors_at):
            sel = np.flatnonzero(anchors_at == anc)
            anc = anc.item() if hasattr(anc, "item") else anc
            if anc == node:
                d, wa = self.ground_hop(node, emits[sel], bits[sel])
                deliver[sel] = d
                w1[sel] = wa
                continue
            a1, wa = self.hop(node, anc, emits[sel], bits[sel])
            w1[sel] = wa
            ok = ~np.isnan(a1)
            if ok.any():
                d, wb = self.ground_hop(anc, a1[ok], bits[sel[ok]])
                deliver[sel[ok]] = d
                w2[sel[ok]] = wb
        return deliver, w1, w2

    def route_many(self, nodes: np.ndarray, emits: np.ndarray, mode: str, anchors_at: np.ndarray | None, bits: np.ndarray):
        """``route`` for a flat batch of reports from many nodes.

        Relay legs are grouped by anchor so each anchor's downlink is
        searched once for all the reports it carries.
        """
        n = len(emits)
        deliver = np.full(n, np.nan)
        w1 = np.full(n, -1, dtype=np.int64)
        w2 = np.full(n, -1, dtype=np.int64)
        if n == 0:
            return deliver, w1, w2
        if mode == "baseline" or anchors_at is None:
            anchors_at = nodes
        direct = anchors_at == nodes
        at_anchor = np.full(n, np.nan)
        at_anchor[direct] = emits[direct]
        relay = np.flatnonzero(~direct)
        if relay.size:
            keys = np.stack([nodes[relay], anchors_at[relay]])
            order = np.lexsort(keys[::-1])
            relay = relay[order]
            pairs, starts = np.unique(np.stack([nodes[relay], anchors_at[relay]], axis=1), axis=0, return_index=True)
            bounds = list(starts) + [relay.size]
            for (src, anc), lo, hi in zip(pairs.tolist(), bounds[:-1], bounds[1:]):
                sel = relay[lo:hi]
                arr, wid = self.hop(src, anc, emits[sel], bits[sel])
                at_anchor[sel] = arr
                w1[sel] = wid
        holder = anchors_at
        pending = np.flatnonzero(~np.isnan(at_anchor))
        order = pending[np.argsort(holder[pending], kind="stable")]
        hs, starts = np.unique(holder[order], return_index=True)
        bounds = list(starts) + [order.size]
        for h, lo, hi in zip(hs.tolist(), bounds[:-1], bounds[1:]):
            sel = order[lo:hi]
            d, wid = self.ground_hop(h, at_anchor[sel], bits[sel])
            deliver[sel] = d
            direct_sel = direct[sel]
            w1[sel[direct_sel]] = wid[direct_sel]
            w2[sel[~direct_sel]] = wid[~direct_sel]
        return deliver, w1, w2


def domain_table(plan: ContactPlan, anchors: Sequence[int], times: Sequence[float]) -> np.ndarray:
    """Nearest anchor of every satellite at each of ``times``, shape (nodes, len(times)).

    Rows follow ``plan.ephemerides``; ties go to the lowest anchor id and
    anchors head their own domain.
    """
    anchors = sorted(anchors)
    if not anchors:
        raise ValueError("domain partitioning needs at least one anchor")
    times = np.asarray(times, dtype=float)
    pos = positions_ecef(plan.ephemerides, times)
    index = {e.node_id: i for i, e in enumerate(plan.ephemerides)}
    best = np.full(pos.shape[:2], np.inf)
    out = np.zeros(pos.shape[:2], dtype=np.int64)
    for a in anchors:  # ascending, strict improvement keeps the lowest id on ties
        d = np.linalg.norm(pos - pos[index[a]][None, :, :], axis=2)
        better = d < best
        best[better] = d[better]
        out[better] = a
    for a in anchors:
        out[index[a], :] = a
    return out


@dataclass
class AwarenessLog:
    """Every report emitted, with its fate. Column arrays, one row per report."""

    node: list = field(default_factory=list)
    emit: list = field(default_factory=list)
    deliver: list = field(default_factory=list)
    hop1: list = field(default_factory=list)
    hop2: list = field(default_factory=list)
    bits: list = field(default_factory=list)

    def append(self, node, emit, deliver, hop1, hop2, bits):
        self.node.append(np.asarray(node))
        self.emit.append(np.asarray(emit))
        self.deliver.append(np.asarray(deliver))
        self.hop1.append(np.asarray(hop1))
        self.hop2.append(np.asarray(hop2))
        self.bits.append(np.asarray(bits, dtype=float))

    def arrays(self) -> dict:
        def cat(x, dtype):
            return np.concatenate(x).astype(dtype) if x else np.zeros(0, dtype=dtype)

        return {
            "node": cat(self.node, np.int64),
            "emit": cat(self.emit, float),
            "deliver": cat(self.deliver, float),
            "hop1": cat(self.hop1, np.int64),
            "hop2": cat(self.hop2, np.int64),
            "bits": cat(self.bits, float),
        }

    def counts(self) -> tuple[int, int, int]:
        a = self.arrays()
        dropped = int(np.isnan(a["deliver"]).sum())
        return len(a["emit"]), len(a["emit"]) - dropped, dropped

    def to_csv(self, path, mode: str, chunk: int = 500_000) -> None:
        a = self.arrays()
        order = np.lexsort((a["node"], a["emit"]))
        hops_all = np.where(a["hop2"] >= 0, 2, np.where(a["hop1"] >= 0, 1, 0))
        with open(path, "w", newline="") as f:
            f.write("t_send,node_id,mode,route_hops,t_deliver,dropped\n")
            for lo in range(0, order.size, chunk):
                idx = order[lo : lo + chunk]
                deliver = a["deliver"][idx]
                dropped = np.isnan(deliver).tolist()
                d_txt = ["" if x else f"{v:.6f}" for v, x in zip(deliver.tolist(), dropped)]
                f.writelines(
                    f"{t:.6f},{n},{mode},{h},{d},{int(x)}\n"
                    for t, n, h, d, x in zip(a["emit"][idx].tolist(), a["node"][idx].tolist(), hops_all[idx].tolist(), d_txt, dropped)
                )


def bandwidth_violations(log: AwarenessLog, windows: Sequence) -> list:
    """Windows whose awareness traffic exceeds capacity x duration."""
    a = log.arrays()
    used: dict = {}
    for col in ("hop1", "hop2"):
        ids = a[col]
        mask = ids >= 0
        for wid, b in zip(ids[mask].tolist(), a["bits"][mask].tolist()):
            used[wid] = used.get(wid, 0.0) + b
    bad = []
    for wid, b in used.items():
        w = windows[wid]
        if b > w.capacity * (w.end - w.start):
            bad.append((wid, b))
    return bad


# -- emission schedules and the control-centre view ----------------------------------

_GOLDEN = 0.6180339887498949


@dataclass(frozen=True)
class AwarenessConfig:
    mode: str = "yuheng"
    policy: ReportingPolicy = field(default_factory=ReportingPolicy)
    heartbeat: float = 10.0  # baseline period, all resources
    reclassify_period: float = 300.0
    classify_window: float = 300.0
    sample_dt: float = 10.0
    domain_period: float = 300.0
    allow_isl_relay: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown awareness mode {self.mode!r}")
        for name in ("heartbeat", "reclassify_period", "classify_window", "sample_dt", "domain_period"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def phase(node: int, interval: float) -> float:
    """Deterministic per-node offset that spreads emissions over the interval."""
    return ((node * _GOLDEN) % 1.0) * interval


def _grid(start: float, stop: float, offset: float, interval: float) -> np.ndarray:
    """Times offset + k * interval lying in [start, stop)."""
    k0 = math.ceil((start - offset) / interval - 1e-12)
    k1 = math.ceil((stop - offset) / interval - 1e-12)
    return offset + np.arange(k0, k1) * interval


@dataclass
class EmissionSchedule:
    node: np.ndarray
    emit: np.ndarray
    entries: np.ndarray  # resource entries per report
    has_compute: np.ndarray
    classes: dict = field(default_factory=dict)  # node -> list of (epoch_start, class)


def emission_schedule(n_nodes: int, fractions, config: AwarenessConfig, horizon: float) -> EmissionSchedule:
    """Every report each node emits over [0, horizon).

    ``fractions(node, times)`` returns the node's local-load fraction of
    compute capacity; reported compute is capacity times one minus that.
    Storage and sensor state never changes, so under yuheng they go out only
    in the registration report (or on the stable period when the stable class
    is periodic). Every node registers with a full report at t = 0.
    """
    nodes, emits, entries, comp = [], [], [], []
    classes: dict = {}
    full = 3
    pol = config.policy

    def add(n, times, k, has_c):
        nodes.append(np.full(len(times), n, dtype=np.int64))
        emits.append(np.asarray(times, dtype=float))
        entries.append(np.full(len(times), k, dtype=np.int64))
        comp.append(np.full(len(times), has_c, dtype=bool))

    for n in range(n_nodes):
        add(n, [0.0], full, True)
        if config.mode == "baseline":
            ts = _grid(0.0, horizon, phase(n, config.heartbeat), config.heartbeat)
            add(n, ts[ts > 0], full, True)
            continue
        dt = config.sample_dt
        W = config.classify_window
        P = config.reclassify_period
        epochs = np.arange(0.0, horizon, P)
        grid = np.arange(-W, horizon + dt, dt)
        f = np.asarray(fractions(n, grid), dtype=float)
        steps = np.abs(np.diff(f))
        csum = np.concatenate([[0.0], np.cumsum(steps)])
        per = int(round(W / dt))
        node_classes = []
        last_f = float(f[np.searchsorted(grid, 0.0)])
        last_t = None  # time of the latest periodic report, resolved lazily
        out = []
        for E in epochs:
            i1 = int(round((E + W) / dt))  # grid index of E
            v = (csum[i1] - csum[i1 - per]) / per / dt
            cls = "rapid" if v >= pol.rapid_threshold else ("moderate" if v >= pol.moderate_threshold else "stable")
            node_classes.append((float(E), cls))
            stop = min(E + P, horizon)
            if pol.mode(cls) == "event_driven":
                if last_t is not None:
                    last_f = float(np.asarray(fractions(n, [last_t]))[0])
                    last_t = None
                seg = np.flatnonzero((grid >= E) & (grid < stop))
                for j in seg:
                    if abs(f[j] - last_f) > pol.event_threshold:
                        out.append(grid[j])
                        last_f = float(f[j])
            else:
                iv = reporting_interval(cls, pol)
                ts = _grid(E, stop, phase(n, iv), iv)
                ts = ts[ts > 0]
                if ts.size:
                    out.extend(ts.tolist())
                    last_t = float(ts[-1])
        add(n, out, 1, True)
        if pol.stable_mode == "periodic":
            ts = _grid(0.0, horizon, phase(n, pol.stable_interval), pol.stable_interval)
            add(n, ts[ts > 0], 2, False)
        classes[n] = node_classes
    return EmissionSchedule(
        np.concatenate(nodes), np.concatenate(emits), np.concatenate(entries), np.concatenate(comp), classes
    )


class ReportView:
    """The control centre's view, fed by reports in delivery order.

    Queries must move forward in time (``advance``). Compute values are
    recovered from the node's load process at the state timestamp, which is
    exactly what the node reported.
    """

    def __init__(self, node, emit, deliver, has_compute, capabilities: Mapping, load, start: float = 0.0):
        ok = ~np.isnan(deliver)
        order = np.lexsort((emit[ok], deliver[ok]))
        self.node = node[ok][order]
        self.emit = emit[ok][order]
        self.deliver = deliver[ok][order]
        self.has_compute = has_compute[ok][order]
        n = max(capabilities) + 1 if capabilities else 0
        self.ts = np.full(n, -np.inf)
        self.cts = np.full(n, -np.inf)
        self.caps = capabilities
        self.load = load
        self.start = start
        self.clock = -np.inf
        self._cursor = 0
        self._cache: dict = {}

    def advance(self, t: float) -> None:
        if t < self.clock:
            raise ValueError("the view only moves forward in time")
        self.clock = t
        hi = int(np.searchsorted(self.deliver, t, side="right"))
        if hi == self._cursor:
            return
        sl = slice(self._cursor, hi)
        nodes = self.node[sl]
        np.maximum.at(self.ts, nodes, self.emit[sl])
        hc = self.has_compute[sl]
        np.maximum.at(self.cts, nodes[hc], self.emit[sl][hc])
        for u in np.unique(nodes).tolist():
            self._cache.pop(u, None)
        self._cursor = hi

    def timestamp(self, node):
        v = self.ts[node]
        return None if v == -np.inf else float(v)

    def amount(self, node, resource) -> float:
        cap = self.caps[node]
        if resource == "compute":
            v = self._cache.get(node)
            if v is None:
                ts = self.cts[node]
                v = cap.compute_capacity if ts == -np.inf else cap.compute_capacity - self.load.level(node, float(ts))
                self._cache[node] = v
            return v
        return cap.bound(resource)

    def staleness(self, t: float) -> np.ndarray:
        """t minus each node's freshest state timestamp (scenario start if none)."""
        ts = np.where(self.ts == -np.inf, self.start, self.ts)
        return t - ts


def staleness_samples(view: ReportView, times: Sequence[float]) -> np.ndarray:
    """Mean staleness at each sample instant, replaying deliveries in order."""
    out = np.empty(len(times))
    for i, t in enumerate(times):
        view.advance(t)
        out[i] = float(np.mean(view.staleness(t))) if view.ts.size else 0.0
    return out

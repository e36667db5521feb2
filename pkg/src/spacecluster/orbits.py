"""Constellation geometry: Walker shells, circular two-body propagation and contact plans.

Positions are in kilometres. The inertial frame is Earth-centred with the
x axis through Greenwich at t = 0, so ECI and ECEF coincide at the scenario
epoch and differ by a rotation about z afterwards.
"""

from __future__ import annotations

import bisect
import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterable, Sequence

import numpy as np

MU_EARTH = 398600.4418  # km^3/s^2
R_EARTH = 6378.137  # km, spherical Earth
OMEGA_EARTH = 7.2921159e-5  # rad/s, sidereal rotation
C_KM_S = 299792.458
GEO_ALTITUDE = 35786.0

REGIMES = ("LEO", "MEO", "GEO")
LINK_CLASSES = ("microwave_isl", "laser_isl", "ground")


@dataclass(frozen=True)
class OrbitShellSpec:
    regime: str
    altitude: float
    inclination: float
    plane_count: int
    sats_per_plane: int
    phasing_offset: float = 0.0
    epoch: float = 0.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown orbital regime {self.regime!r}")
        if self.altitude <= 0:
            raise ValueError(f"altitude must be positive, got {self.altitude}")
        if self.plane_count < 1 or self.sats_per_plane < 1:
            raise ValueError(
                f"shell needs at least one satellite "
                f"(plane_count={self.plane_count}, sats_per_plane={self.sats_per_plane})"
            )
        if self.regime == "GEO" and (self.altitude != GEO_ALTITUDE or self.inclination != 0):
            raise ValueError("GEO shells must sit at 35786 km with zero inclination")

    @property
    def size(self) -> int:
        return self.plane_count * self.sats_per_plane


@dataclass(frozen=True)
class GroundStationSpec:
    id: str
    latitude: float
    longitude: float
    min_elevation: float = 10.0
    # simultaneous LEO tracking antennas; None means unlimited
    antennas: int | None = None

    def __post_init__(self):
        if abs(self.latitude) > 90:
            raise ValueError(f"station {self.id}: latitude {self.latitude} out of range")
        if not 0 <= self.min_elevation < 90:
            raise ValueError(f"station {self.id}: min_elevation must lie in [0, 90)")
        if self.antennas is not None and self.antennas < 1:
            raise ValueError(f"station {self.id}: antennas must be >= 1")


@dataclass(frozen=True)
class Ephemeris:
    node_id: int
    regime: str
    shell: int
    plane: int
    slot: int
    semi_major_axis: float
    inclination: float  # rad
    raan: float  # rad
    arg_latitude: float  # rad, at epoch
    mean_motion: float  # rad/s
    epoch: float = 0.0

    @property
    def period(self) -> float:
        return 2 * math.pi / self.mean_motion


def kepler_period(semi_major_axis: float) -> float:
    return 2 * math.pi * math.sqrt(semi_major_axis**3 / MU_EARTH)


def generate_constellation(shells: Sequence[OrbitShellSpec]) -> list[Ephemeris]:
    """Expand shells into satellites with integer ids in shell/plane/slot order.

    Walker-delta layout: planes evenly spaced in right ascension over 360
    degrees, satellites evenly spaced in argument of latitude, and each plane
    shifted by ``phasing_offset`` degrees relative to the previous one. GEO
    satellites are spread along the equator and co-rotate with the Earth.
    """
    ephemerides = []
    node_id = 0
    for k, shell in enumerate(shells):
        if shell.size == 0:
            raise ValueError(f"shell {k} has no satellites")
        a = R_EARTH + shell.altitude
        if shell.regime == "GEO":
            n = OMEGA_EARTH
        else:
            n = math.sqrt(MU_EARTH / a**3)
        inc = math.radians(shell.inclination)
        for p in range(shell.plane_count):
            raan = 2 * math.pi * p / shell.plane_count
            for s in range(shell.sats_per_plane):
                u0 = 2 * math.pi * s / shell.sats_per_plane + p * math.radians(shell.phasing_offset)
                ephemerides.append(
                    Ephemeris(
                        node_id=node_id,
                        regime=shell.regime,
                        shell=k,
                        plane=p,
                        slot=s,
                        semi_major_axis=a,
                        inclination=inc,
                        raan=raan,
                        arg_latitude=u0 % (2 * math.pi),
                        mean_motion=n,
                        epoch=shell.epoch,
                    )
                )
                node_id += 1
    return ephemerides


def _eci(a, inc, raan, u):
    cu, su = np.cos(u), np.sin(u)
    co, so = np.cos(raan), np.sin(raan)
    ci, si = np.cos(inc), np.sin(inc)
    return np.stack(
        [a * (co * cu - so * su * ci), a * (so * cu + co * su * ci), a * su * si], axis=-1
    )


def propagate(eph: Ephemeris, t: float) -> np.ndarray:
    """ECI position (km) at time ``t`` seconds."""
    if t < 0:
        raise ValueError(f"propagation time must be non-negative, got {t}")
    u = eph.arg_latitude + eph.mean_motion * (t - eph.epoch)
    return _eci(eph.semi_major_axis, eph.inclination, eph.raan, u)


def eci_to_ecef(pos, t):
    """Rotate ECI vectors into the Earth-fixed frame (``t`` broadcasts over leading axes)."""
    pos = np.asarray(pos, dtype=float)
    theta = OMEGA_EARTH * np.asarray(t, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    x, y, z = pos[..., 0], pos[..., 1], pos[..., 2]
    return np.stack([c * x + s * y, -s * x + c * y, z], axis=-1)


def ecef_to_eci(pos, t):
    return eci_to_ecef(pos, -np.asarray(t, dtype=float))


def positions_ecef(ephemerides: Sequence[Ephemeris], times) -> np.ndarray:
    """Earth-fixed positions, shape (len(ephemerides), len(times), 3)."""
    times = np.asarray(times, dtype=float)
    if not ephemerides:
        return np.zeros((0, len(times), 3))
    a = np.array([e.semi_major_axis for e in ephemerides])[:, None]
    inc = np.array([e.inclination for e in ephemerides])[:, None]
    raan = np.array([e.raan for e in ephemerides])[:, None]
    u0 = np.array([e.arg_latitude for e in ephemerides])[:, None]
    n = np.array([e.mean_motion for e in ephemerides])[:, None]
    epoch = np.array([e.epoch for e in ephemerides])[:, None]
    u = u0 + n * (times[None, :] - epoch)
    return eci_to_ecef(_eci(a, inc, raan, u), times[None, :])


def station_ecef(station: GroundStationSpec) -> np.ndarray:
    lat, lon = math.radians(station.latitude), math.radians(station.longitude)
    return R_EARTH * np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])


def _los_components(ax, ay, az, bx, by, bz, radius):
    dx, dy, dz = bx - ax, by - ay, bz - az
    dd = dx * dx + dy * dy + dz * dz
    ad = ax * dx + ay * dy + az * dz
    aa = ax * ax + ay * ay + az * az
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(dd > 0, -ad / dd, 0.0)
    np.clip(s, 0.0, 1.0, out=s)
    # |a + s d|^2 expanded
    return aa + s * (2 * ad + s * dd) > radius * radius


def line_of_sight(a, b, radius: float = R_EARTH):
    """True where the segment a-b stays outside the sphere; broadcasts over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return _los_components(a[..., 0], a[..., 1], a[..., 2], b[..., 0], b[..., 1], b[..., 2], radius)


def elevation_deg(sat, ground):
    """Elevation of ``sat`` seen from ``ground`` (both Earth-fixed), in degrees."""
    sat = np.asarray(sat, dtype=float)
    ground = np.asarray(ground, dtype=float)
    rel = sat - ground
    up = ground / np.linalg.norm(ground, axis=-1, keepdims=True)
    sin_el = np.einsum("...i,...i->...", rel, up) / np.linalg.norm(rel, axis=-1)
    return np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))


def visible(pos_a, pos_b, min_elevation: float | None = None) -> bool:
    """Geometric visibility.

    With ``min_elevation`` None both points are satellites and the chord must
    clear the Earth. Otherwise ``pos_b`` is a ground point in the same frame as
    ``pos_a`` and the satellite must stand at least ``min_elevation`` degrees
    above its horizon.
    """
    if min_elevation is None:
        return bool(line_of_sight(pos_a, pos_b))
    return bool(elevation_deg(pos_a, pos_b) >= min_elevation)


@dataclass(frozen=True)
class CapacityConfig:
    laser_bps: tuple[float, ...] = (5e9, 10e9, 20e9)
    microwave_bps: tuple[float, ...] = (100e3, 200e3, 500e3)
    ground_bps: float = 1e9
    leo_anchor_class: str = "microwave_isl"
    anchor_anchor_class: str = "laser_isl"
    # longest continuous LEO track before an antenna is handed to a waiting satellite
    max_track_s: float = 300.0
    # keep LEO-anchor links only to each LEO's k nearest anchors, re-chosen every
    # anchor_epoch_s (aligned with awareness domain epochs); None keeps all
    anchor_links: int | None = None
    anchor_epoch_s: float = 300.0
    seed: int = 0

    def __post_init__(self):
        for cls in (self.leo_anchor_class, self.anchor_anchor_class):
            if cls not in ("microwave_isl", "laser_isl"):
                raise ValueError(f"unknown ISL class {cls!r}")
        if self.anchor_links is not None and self.anchor_links < 1:
            raise ValueError("anchor_links must be at least 1")
        if self.anchor_epoch_s <= 0:
            raise ValueError("anchor_epoch_s must be positive")


@dataclass(frozen=True)
class ContactWindow:
    endpoint_a: int
    endpoint_b: int | str
    start: float
    end: float
    link_class: str
    capacity: float
    propagation_delay_fn: Callable[[float], float] = field(
        default=lambda t: 0.0, compare=False, repr=False, hash=False
    )

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"window {self.endpoint_a}-{self.endpoint_b}: start must precede end")
        if self.link_class not in LINK_CLASSES:
            raise ValueError(f"unknown link class {self.link_class!r}")

    @property
    def is_ground(self) -> bool:
        return self.link_class == "ground"

    def contains(self, t0: float, t1: float) -> bool:
        return self.start <= t0 and t1 <= self.end

    def propagation_delay(self, t: float) -> float:
        return self.propagation_delay_fn(t)


def pair_key(a, b):
    """Canonical key: satellites ordered by id; ground links keep the satellite first."""
    if isinstance(b, str):
        return (a, b)
    if isinstance(a, str):
        return (b, a)
    return (a, b) if a <= b else (b, a)


def runs(mask: np.ndarray):
    """Maximal runs of True along the last axis: yields (row, start_idx, end_idx_exclusive)."""
    mask = np.atleast_2d(mask)
    padded = np.zeros((mask.shape[0], mask.shape[1] + 2), dtype=np.int8)
    padded[:, 1:-1] = mask
    d = np.diff(padded, axis=1)
    rows_s, starts = np.nonzero(d == 1)
    _, ends = np.nonzero(d == -1)
    return list(zip(rows_s.tolist(), starts.tolist(), ends.tolist()))


class ContactPlan:
    """Windows indexed by endpoint pair, plus the position grid they were derived from."""

    def __init__(
        self,
        windows: Iterable[ContactWindow],
        horizon: float,
        step: float = 10.0,
        ephemerides: Sequence[Ephemeris] = (),
        stations: Sequence[GroundStationSpec] = (),
        positions: np.ndarray | None = None,
        sensing: dict | None = None,
    ):
        self.horizon = float(horizon)
        self.step = float(step)
        self.ephemerides = list(ephemerides)
        self.stations = list(stations)
        self.positions = positions
        self._eph_index = {e.node_id: i for i, e in enumerate(self.ephemerides)}
        self._station_index = {s.id: i for i, s in enumerate(self.stations)}
        self._station_pos = {s.id: station_ecef(s) for s in self.stations}
        # explicit sensing opportunities for hand-built plans: node -> [(start, end)]
        self.sensing = sensing
        self.windows = sorted(windows, key=lambda w: (str(w.endpoint_a), str(w.endpoint_b), w.start))
        self.by_pair: dict[tuple, list[ContactWindow]] = {}
        self._neighbors: dict[int, set] = {}
        self._ground: dict[int, set] = {}
        for w in self.windows:
            key = pair_key(w.endpoint_a, w.endpoint_b)
            self.by_pair.setdefault(key, []).append(w)
            a, b = key
            if isinstance(b, str):
                self._ground.setdefault(a, set()).add(b)
            else:
                self._neighbors.setdefault(a, set()).add(b)
                self._neighbors.setdefault(b, set()).add(a)
        for lst in self.by_pair.values():
            lst.sort(key=lambda w: w.start)
        # running max of end times, so bisection works even when windows of a pair overlap
        self._ends = {k: list(itertools.accumulate((w.end for w in v), max)) for k, v in self.by_pair.items()}
        self._nested = {k for k, v in self.by_pair.items() if any(b.end < a.end for a, b in zip(v, v[1:]))}
        self._wid = {id(w): i for i, w in enumerate(self.windows)}

    # -- queries -----------------------------------------------------------------

    def window_index(self, w: ContactWindow) -> int:
        return self._wid[id(w)]

    def windows_between(self, a, b) -> list[ContactWindow]:
        return self.by_pair.get(pair_key(a, b), [])

    def windows_after(self, a, b, t: float) -> list[ContactWindow]:
        """Windows of the pair that have not closed by ``t``."""
        key = pair_key(a, b)
        lst = self.by_pair.get(key)
        if not lst:
            return []
        i = bisect.bisect_right(self._ends[key], t)
        if key in self._nested:
            return [w for w in lst[i:] if w.end > t]
        return lst[i:]

    def neighbors(self, node) -> list[int]:
        return sorted(self._neighbors.get(node, ()))

    def ground_stations_of(self, node) -> list[str]:
        return sorted(self._ground.get(node, ()))

    def open_window(self, a, b, t: float) -> ContactWindow | None:
        for w in self.windows_after(a, b, t):
            if w.start <= t < w.end:
                return w
            if w.start > t:
                break
        return None

    def next_window(self, a, b, t: float) -> ContactWindow | None:
        """Window open at ``t`` or the first one opening after it."""
        for w in self.windows_after(a, b, t):
            return w
        return None

    def position_ecef(self, node, t: float) -> np.ndarray:
        if isinstance(node, str):
            return self._station_pos[node]
        eph = self.ephemerides[self._eph_index[node]]
        return eci_to_ecef(propagate(eph, t), t)

    def distance(self, a, b, t: float) -> float:
        if not self.ephemerides:
            return 0.0
        return float(np.linalg.norm(self.position_ecef(a, t) - self.position_ecef(b, t)))

    def propagation_delay(self, a, b, t: float) -> float:
        return self.distance(a, b, t) / C_KM_S

    def sensing_passes(self, target, t0: float, t1: float, nodes: Sequence[int]) -> dict:
        """Intervals in [t0, t1) during which each node can image ``target``.

        ``target`` is a GroundStationSpec-like point (its min_elevation bounds
        the imaging geometry); None means sensing is unconstrained.
        """
        if target is None:
            return {n: [(t0, t1)] for n in nodes}
        if self.sensing is not None:
            out = {}
            for n in nodes:
                iv = [(max(s, t0), min(e, t1)) for s, e in self.sensing.get(n, []) if e > t0 and s < t1]
                if iv:
                    out[n] = iv
            return out
        if self.positions is None or not nodes:
            return {}
        k0 = max(0, int(math.floor(t0 / self.step)))
        k1 = min(self.positions.shape[1], int(math.ceil(t1 / self.step)))
        if k1 <= k0:
            return {}
        idx = np.array([self._eph_index[n] for n in nodes])
        g = station_ecef(target)
        pos = self.positions[idx, k0:k1]
        # cheap cone test first: the target can only see satellites within the
        # central angle of its elevation limit (plus a margin)
        theta = math.radians(target.min_elevation)
        r = np.array([self.ephemerides[i].semi_major_axis for i in idx])
        lam = np.arccos(np.clip(R_EARTH * math.cos(theta) / r, -1, 1)) - theta
        near = np.einsum("ntk,k->nt", pos, g / R_EARTH) >= (r * np.cos(np.minimum(lam + 0.01, math.pi)))[:, None]
        rows = np.flatnonzero(near.any(axis=1))
        out: dict = {}
        if rows.size == 0:
            return out
        near = near[rows]
        mask = np.zeros(near.shape, dtype=bool)
        mask[near] = elevation_deg(pos[rows][near], g) >= target.min_elevation
        for row, s, e in runs(mask):
            start = max(t0, (k0 + s) * self.step)
            end = min(t1, (k0 + e) * self.step)
            if end > start:
                out.setdefault(nodes[rows[row]], []).append((start, end))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["pair_a", "pair_b", "class", "start_s", "end_s", "capacity_bps"])
            for win in self.windows:
                w.writerow(
                    [win.endpoint_a, win.endpoint_b, win.link_class, f"{win.start:.3f}", f"{win.end:.3f}", f"{win.capacity:.0f}"]
                )


def grid_isl_pairs(ephemerides: Sequence[Ephemeris]) -> list[tuple[int, int]]:
    """Intra-plane ring neighbours plus the nearest satellite in the next plane, per LEO shell."""
    pairs = set()
    shells: dict[int, list[Ephemeris]] = {}
    for e in ephemerides:
        if e.regime == "LEO":
            shells.setdefault(e.shell, []).append(e)
    for members in shells.values():
        by_plane: dict[int, list[Ephemeris]] = {}
        for e in members:
            by_plane.setdefault(e.plane, []).append(e)
        planes = sorted(by_plane)
        for p in planes:
            ring = sorted(by_plane[p], key=lambda e: e.slot)
            if len(ring) > 1:
                for i, e in enumerate(ring):
                    nxt = ring[(i + 1) % len(ring)]
                    if nxt.node_id != e.node_id:
                        pairs.add(pair_key(e.node_id, nxt.node_id))
        if len(planes) > 1:
            pos0 = {e.node_id: propagate(e, e.epoch) for e in members}
            for i, p in enumerate(planes):
                q = planes[(i + 1) % len(planes)]
                if q == p:
                    continue
                for e in by_plane[p]:
                    best = min(by_plane[q], key=lambda o: (float(np.linalg.norm(pos0[o.node_id] - pos0[e.node_id])), o.node_id))
                    pairs.add(pair_key(e.node_id, best.node_id))
    return sorted(pairs)


def _rotate_antennas(visible_mask: np.ndarray, antennas: int, max_track_steps: int) -> np.ndarray:
    """Assign at most ``antennas`` visible satellites per step.

    Tracks persist while visible; a track older than ``max_track_steps`` is
    released only if another visible satellite is waiting. Free antennas go to
    the satellite served least recently (never-served first, then lowest index).
    """
    n_sat, n_steps = visible_mask.shape
    out = np.zeros_like(visible_mask, dtype=bool)
    last_served = np.full(n_sat, -1, dtype=np.int64)
    active: dict[int, int] = {}  # sat -> track start step
    for k in range(n_steps):
        vis = np.flatnonzero(visible_mask[:, k]).tolist()
        vis_set = set(vis)
        for s in [s for s in active if s not in vis_set]:
            del active[s]
        waiting = sorted((s for s in vis if s not in active), key=lambda s: (last_served[s], s))
        expired = sorted((s for s, st in active.items() if k - st >= max_track_steps), key=lambda s: (active[s], s))
        handover = max(0, min(len(expired), len(waiting) - (antennas - len(active))))
        for s in expired[:handover]:
            del active[s]
        for s in waiting:
            if len(active) >= antennas:
                break
            active[s] = k
        for s in active:
            out[s, k] = True
            last_served[s] = k
    return out


def _sparse_runs(rows: np.ndarray, steps: np.ndarray) -> list:
    """:func:`runs` for True cells given as (row, step) pairs sorted by row then step."""
    if rows.size == 0:
        return []
    brk = np.flatnonzero((np.diff(rows) != 0) | (np.diff(steps) != 1)) + 1
    first = np.concatenate(([0], brk))
    last = np.concatenate((brk, [rows.size])) - 1
    return list(zip(rows[first].tolist(), steps[first].tolist(), (steps[last] + 1).tolist()))


def _nearest_anchor_samples(pos, leo_idx, anchor_idx, k: int, epoch_steps: int) -> list:
    """Per anchor, the (leo row, step) samples where it is among that LEO's k nearest.

    Nearness is evaluated at the first sample of each epoch and held for the epoch.
    """
    n_leo, n_steps = len(leo_idx), pos.shape[1]
    epochs = np.arange(0, n_steps, epoch_steps)
    a_sq = (pos[anchor_idx, 0] ** 2).sum(axis=1)  # circular orbits: constant radius
    picks = np.empty((n_leo, len(epochs), k), dtype=np.int32)
    for i, step in enumerate(epochs):
        # squared distance up to the per-LEO constant
        d = a_sq[None, :] - 2.0 * (pos[leo_idx, step] @ pos[anchor_idx, step].T)
        picks[:, i] = np.argsort(d, axis=1, kind="stable")[:, :k]
    flat = picks.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(len(anchor_idx) + 1))
    cell = order // k
    out = []
    for j in range(len(anchor_idx)):
        c = cell[bounds[j] : bounds[j + 1]]
        rows, first = c // len(epochs), epochs[c % len(epochs)]
        span = np.minimum(first + epoch_steps, n_steps) - first
        rows = np.repeat(rows, span)
        steps = np.repeat(first - np.cumsum(span) + span, span) + np.arange(span.sum())
        out.append((rows, steps))
    return out


def contact_plan(
    ephemerides: Sequence[Ephemeris],
    stations: Sequence[GroundStationSpec],
    horizon: float,
    step: float = 10.0,
    capacity: CapacityConfig | None = None,
) -> ContactPlan:
    """Sample geometry every ``step`` seconds and merge visible samples into windows.

    A sample at t_k stands for [t_k, t_k + step). Eligible satellite pairs are
    the LEO grid, LEO-to-anchor (MEO/GEO) and anchor-to-anchor links; every
    satellite may see every ground station, with LEO tracks limited by each
    station's antenna count.
    """
    if horizon <= 0 or step <= 0:
        raise ValueError("horizon and step must be positive")
    capacity = capacity or CapacityConfig()
    rng = np.random.default_rng(capacity.seed)
    n_steps = int(math.ceil(horizon / step))
    times = np.arange(n_steps) * step
    pos = positions_ecef(ephemerides, times)
    index = {e.node_id: i for i, e in enumerate(ephemerides)}
    regime = {e.node_id: e.regime for e in ephemerides}
    windows: list[ContactWindow] = []
    station_xyz = {st.id: station_ecef(st).tolist() for st in stations}

    def bounds(s, e):
        return float(times[s]), float(min(horizon, e * step))

    def emit(a_of, b_of, cls, cap_choices, found):
        if not found:
            return
        if np.isscalar(cap_choices):
            caps_drawn = [float(cap_choices)] * len(found)
        else:
            caps_drawn = rng.choice(np.asarray(cap_choices, dtype=float), size=len(found)).tolist()
        for (row, s, e), cap in zip(found, caps_drawn):
            start, end = bounds(s, e)
            if end <= start:
                continue
            a, b = a_of(row), b_of(row)
            other = tuple(station_xyz[b]) if isinstance(b, str) else ephemerides[index[b]]
            windows.append(ContactWindow(a, b, start, end, cls, cap, partial(_delay, ephemerides[index[a]], other)))

    leo = [e.node_id for e in ephemerides if e.regime == "LEO"]
    anchors = [e.node_id for e in ephemerides if e.regime != "LEO"]

    # LEO grid ISLs
    for a, b in grid_isl_pairs(ephemerides):
        mask = line_of_sight(pos[index[a]], pos[index[b]])
        emit(lambda r, a=a: a, lambda r, b=b: b, "laser_isl", capacity.laser_bps, runs(mask))

    caps = {"laser_isl": capacity.laser_bps, "microwave_isl": capacity.microwave_bps}
    if leo and anchors:
        leo_idx = np.array([index[n] for n in leo])
        lx, ly, lz = (np.ascontiguousarray(pos[leo_idx, :, c]) for c in range(3))
        r_leo = np.array([ephemerides[i].semi_major_axis for i in leo_idx])[:, None]
        cls = capacity.leo_anchor_class
        k = capacity.anchor_links
        chosen = None
        if k is not None and k < len(anchors):
            epoch_steps = max(1, int(round(capacity.anchor_epoch_s / step)))
            chosen = _nearest_anchor_samples(pos, leo_idx, np.array([index[n] for n in anchors]), k, epoch_steps)
        for j, anc in enumerate(anchors):
            p = pos[index[anc]]
            r_anc = ephemerides[index[anc]].semi_major_axis
            # both ends on circular orbits: the chord clears the sphere iff the
            # separation angle is within the sum of the two horizon angles
            limit = np.cos(np.arccos(R_EARTH / r_leo) + math.acos(R_EARTH / r_anc)) * r_leo * r_anc
            if chosen is None:
                mask = lx * p[None, :, 0] + ly * p[None, :, 1] + lz * p[None, :, 2] > limit
                found = runs(mask)
            else:
                rows, steps = chosen[j]
                dot = lx[rows, steps] * p[steps, 0] + ly[rows, steps] * p[steps, 1] + lz[rows, steps] * p[steps, 2]
                keep = dot > limit[rows, 0]
                found = _sparse_runs(rows[keep], steps[keep])
            emit(lambda r: leo[r], lambda r, anc=anc: anc, cls, caps[cls], found)
    cls = capacity.anchor_anchor_class
    for i, a in enumerate(anchors):
        others = anchors[i + 1 :]
        if not others:
            continue
        mask = line_of_sight(pos[index[a]][None], pos[[index[b] for b in others]])
        by_row: dict = {}
        for row, s, e in runs(mask):
            by_row.setdefault(row, []).append((0, s, e))
        for row in sorted(by_row):  # one draw per pair, in pair order
            emit(lambda r, a=a: a, lambda r, b=others[row]: b, cls, caps[cls], by_row[row])

    # satellite-ground
    if ephemerides:
        all_idx = np.arange(len(ephemerides))
        is_leo = np.array([regime[e.node_id] == "LEO" for e in ephemerides])
        max_track_steps = max(1, int(round(capacity.max_track_s / step)))
        for st in stations:
            g = station_ecef(st)
            mask = elevation_deg(pos[all_idx], g[None, None, :]) >= st.min_elevation
            if st.antennas is not None and is_leo.any():
                leo_rows = np.flatnonzero(is_leo)
                mask[leo_rows] = _rotate_antennas(mask[leo_rows], st.antennas, max_track_steps)
            emit(lambda r: ephemerides[r].node_id, lambda r, sid=st.id: sid, "ground", capacity.ground_bps, runs(mask))

    return ContactPlan(windows, horizon, step, ephemerides, stations, positions=pos)


def _eci_point(eph: Ephemeris, t: float) -> tuple[float, float, float]:
    u = eph.arg_latitude + eph.mean_motion * (t - eph.epoch)
    cu, su = math.cos(u), math.sin(u)
    co, so = math.cos(eph.raan), math.sin(eph.raan)
    ci, si = math.cos(eph.inclination), math.sin(eph.inclination)
    a = eph.semi_major_axis
    return a * (co * cu - so * su * ci), a * (so * cu + co * su * ci), a * su * si


def _delay(eph_a: Ephemeris, other, t: float) -> float:
    """Light time between a satellite and a satellite or Earth-fixed point.

    Distances are frame independent, so the work happens in the inertial frame.
    """
    ax, ay, az = _eci_point(eph_a, t)
    if isinstance(other, Ephemeris):
        bx, by, bz = _eci_point(other, t)
    else:
        th = OMEGA_EARTH * t
        c, s = math.cos(th), math.sin(th)
        gx, gy, gz = other
        bx, by, bz = c * gx - s * gy, s * gx + c * gy, gz
    return math.sqrt((ax - bx) ** 2 + (ay - by) ** 2 + (az - bz) ** 2) / C_KM_S

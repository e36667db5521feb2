import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spacecluster.config import desk_shells
from spacecluster.orbits import (
    C_KM_S,
    R_EARTH,
    CapacityConfig,
    ContactWindow,
    GroundStationSpec,
    OrbitShellSpec,
    _rotate_antennas,
    _sparse_runs,
    contact_plan,
    ecef_to_eci,
    eci_to_ecef,
    elevation_deg,
    generate_constellation,
    kepler_period,
    line_of_sight,
    pair_key,
    positions_ecef,
    propagate,
    runs,
    station_ecef,
    visible,
)

finite = st.floats(-5e4, 5e4, allow_nan=False)
vec = st.tuples(finite, finite, finite)


def chord_blocked(a, b, samples=20001):
    """Reference: does any sampled point of the chord dip inside the Earth?"""
    s = np.linspace(0.0, 1.0, samples)[:, None]
    pts = np.asarray(a)[None, :] * (1 - s) + np.asarray(b)[None, :] * s
    return bool((np.linalg.norm(pts, axis=1) <= R_EARTH).any())


def test_iss_like_period_is_about_95_minutes():
    assert kepler_period(R_EARTH + 550.0) == pytest.approx(5739.0, rel=1e-3)


@pytest.mark.parametrize("size", [60, 600, 6000])
def test_shell_periods_match_kepler(size):
    for e in generate_constellation(desk_shells(size)):
        assert e.period == pytest.approx(kepler_period(e.semi_major_axis), rel=1e-3)


def test_propagated_satellite_returns_after_one_period():
    (eph,) = generate_constellation([OrbitShellSpec("LEO", 550.0, 53.0, 1, 1)])
    p0 = propagate(eph, 0.0)
    p1 = propagate(eph, kepler_period(eph.semi_major_axis))
    assert np.linalg.norm(p1 - p0) < 1e-3 * np.linalg.norm(p0)


def test_walker_layout_ids_and_spacing():
    eph = generate_constellation([OrbitShellSpec("LEO", 550.0, 53.0, 4, 3, phasing_offset=10.0)])
    assert [e.node_id for e in eph] == list(range(12))
    assert {e.plane for e in eph} == {0, 1, 2, 3}
    raans = sorted({round(math.degrees(e.raan), 6) for e in eph})
    assert raans == [0.0, 90.0, 180.0, 270.0]
    plane1 = [e for e in eph if e.plane == 1]
    assert math.degrees(plane1[0].arg_latitude) == pytest.approx(10.0)


def test_geo_satellite_stays_fixed_over_the_earth():
    eph = generate_constellation([OrbitShellSpec("GEO", 35786.0, 0.0, 1, 2)])
    pos = positions_ecef(eph, [0.0, 3600.0, 40000.0])
    assert np.allclose(pos[:, 0], pos[:, 1], atol=1e-6)
    assert np.allclose(pos[:, 0], pos[:, 2], atol=1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(regime="HEO", altitude=500, inclination=0, plane_count=1, sats_per_plane=1),
        dict(regime="LEO", altitude=-1, inclination=0, plane_count=1, sats_per_plane=1),
        dict(regime="LEO", altitude=500, inclination=0, plane_count=0, sats_per_plane=1),
        dict(regime="GEO", altitude=20000, inclination=0, plane_count=1, sats_per_plane=1),
    ],
)
def test_invalid_shells_rejected(kwargs):
    with pytest.raises(ValueError):
        OrbitShellSpec(**kwargs)


def test_invalid_station_and_window_rejected():
    with pytest.raises(ValueError):
        GroundStationSpec("x", 91.0, 0.0)
    with pytest.raises(ValueError):
        GroundStationSpec("x", 0.0, 0.0, antennas=0)
    with pytest.raises(ValueError):
        ContactWindow(0, 1, 5.0, 5.0, "laser_isl", 1e9)
    with pytest.raises(ValueError):
        ContactWindow(0, 1, 0.0, 5.0, "radio", 1e9)


def test_negative_propagation_time_rejected():
    (eph,) = generate_constellation([OrbitShellSpec("LEO", 550.0, 53.0, 1, 1)])
    with pytest.raises(ValueError):
        propagate(eph, -1.0)


@given(vec, st.floats(0, 1e6, allow_nan=False))
def test_frame_rotation_preserves_length_and_round_trips(p, t):
    p = np.array(p)
    q = eci_to_ecef(p, t)
    assert np.linalg.norm(q) == pytest.approx(np.linalg.norm(p), rel=1e-9, abs=1e-9)
    assert np.allclose(ecef_to_eci(q, t), p, atol=1e-6)


@given(st.floats(200, 40000), st.floats(0, 180), st.floats(0, 2 * math.pi), st.floats(0, 1e5))
def test_circular_orbit_radius_is_constant(alt, inc, u, t):
    shell = OrbitShellSpec("LEO", alt, inc, 1, 1)
    (eph,) = generate_constellation([shell])
    assert np.linalg.norm(propagate(eph, t)) == pytest.approx(R_EARTH + alt, rel=1e-9)


def test_line_of_sight_matches_chord_sampling_on_1000_pairs():
    rng = np.random.default_rng(7)
    r = R_EARTH + rng.uniform(200.0, 40000.0, size=(1000, 2))
    d = rng.normal(size=(1000, 2, 3))
    d /= np.linalg.norm(d, axis=2, keepdims=True)
    pts = d * r[..., None]
    fast = line_of_sight(pts[:, 0], pts[:, 1])
    disagree = [i for i in range(1000) if bool(fast[i]) == chord_blocked(pts[i, 0], pts[i, 1])]
    assert disagree == []


def test_visible_modes():
    up = np.array([R_EARTH + 500.0, 0.0, 0.0])
    ground = np.array([R_EARTH, 0.0, 0.0])
    assert visible(up, ground, 80.0)
    assert not visible(-up, ground, 0.0)
    near = (R_EARTH + 500.0) * np.array([math.cos(0.2), math.sin(0.2), 0.0])
    assert visible(up, near)
    assert not visible(up, np.array([0.0, R_EARTH + 500.0, 0.0]))
    assert not visible(up, -up)


def test_elevation_straight_up_is_ninety():
    g = station_ecef(GroundStationSpec("g", 30.0, 45.0))
    assert float(elevation_deg(g * 1.1, g)) == pytest.approx(90.0)


@given(st.one_of(st.integers(0, 50), st.text(min_size=1, max_size=3)), st.integers(0, 50))
def test_pair_key_is_order_independent(a, b):
    assert pair_key(a, b) == pair_key(b, a)


@given(st.lists(st.lists(st.booleans(), min_size=1, max_size=30), min_size=1, max_size=4).filter(lambda m: len({len(r) for r in m}) == 1))
def test_runs_reconstruct_mask(rows):
    mask = np.array(rows, dtype=bool)
    back = np.zeros_like(mask)
    for row, s, e in runs(mask):
        assert e > s
        back[row, s:e] = True
    assert (back == mask).all()


@settings(max_examples=60)
@given(
    st.lists(st.lists(st.booleans(), min_size=20, max_size=20), min_size=1, max_size=6),
    st.integers(1, 3),
    st.integers(1, 5),
)
def test_antenna_rotation_respects_visibility_and_count(rows, antennas, track):
    mask = np.array(rows, dtype=bool)
    out = _rotate_antennas(mask, antennas, track)
    assert not (out & ~mask).any()
    assert (out.sum(axis=0) <= antennas).all()
    # an antenna is never idle while a visible satellite waits
    assert (out.sum(axis=0) == np.minimum(mask.sum(axis=0), antennas)).all()


@pytest.fixture(scope="module")
def small_plan():
    shells = [OrbitShellSpec("LEO", 550.0, 53.0, 3, 4, phasing_offset=1.0), OrbitShellSpec("MEO", 10000.0, 55.0, 1, 2)]
    stations = [GroundStationSpec("gs0", 40.0, 116.0, 10.0, 1), GroundStationSpec("gs1", -33.0, 151.0, 10.0)]
    return contact_plan(generate_constellation(shells), stations, 7200.0, 10.0, CapacityConfig())


def test_contact_windows_agree_with_sampled_geometry(small_plan):
    plan = small_plan
    times = np.arange(0.0, plan.horizon, plan.step)
    for (a, b), wins in plan.by_pair.items():
        if isinstance(b, str):
            continue
        expected = line_of_sight(plan.positions[a], plan.positions[b])
        got = np.zeros(len(times), dtype=bool)
        for w in wins:
            got[(times >= w.start) & (times < w.end)] = True
        assert (got == expected).all(), (a, b)


def test_ground_windows_respect_elevation_and_antennas(small_plan):
    plan = small_plan
    times = np.arange(0.0, plan.horizon, plan.step)
    busy = np.zeros(len(times), dtype=int)
    for (a, b), wins in plan.by_pair.items():
        if b != "gs0":
            continue
        for w in wins:
            ks = np.flatnonzero((times >= w.start) & (times < w.end))
            el = elevation_deg(plan.positions[a, ks], station_ecef(plan.stations[0]))
            assert (el >= 10.0).all()
            if plan.ephemerides[a].regime == "LEO":
                busy[ks] += 1
    assert busy.max() <= 1


def test_window_queries(small_plan):
    plan = small_plan
    (a, b), wins = next((k, v) for k, v in plan.by_pair.items() if not isinstance(k[1], str))
    w = wins[0]
    mid = (w.start + w.end) / 2
    assert plan.open_window(a, b, mid) is w
    assert plan.open_window(b, a, mid) is w
    assert plan.next_window(a, b, w.end) is (wins[1] if len(wins) > 1 else None)
    assert plan.windows[plan.window_index(w)] is w
    assert b in plan.neighbors(a) and a in plan.neighbors(b)


def test_propagation_delay_matches_distance(small_plan):
    plan = small_plan
    w = next(w for w in plan.windows if w.is_ground)
    t = w.start + 1.0
    assert w.propagation_delay(t) == pytest.approx(plan.distance(w.endpoint_a, w.endpoint_b, t) / C_KM_S, rel=1e-9)
    s = next(w for w in plan.windows if not w.is_ground)
    assert s.propagation_delay(s.start) == pytest.approx(plan.propagation_delay(s.endpoint_a, s.endpoint_b, s.start), rel=1e-9)


def test_capacities_drawn_from_configured_sets(small_plan):
    cfg = CapacityConfig()
    for w in small_plan.windows:
        allowed = {"laser_isl": cfg.laser_bps, "microwave_isl": cfg.microwave_bps, "ground": (cfg.ground_bps,)}[w.link_class]
        assert w.capacity in allowed


def test_contact_plan_is_deterministic():
    shells = [OrbitShellSpec("LEO", 550.0, 53.0, 2, 3)]
    eph = generate_constellation(shells)
    a = contact_plan(eph, [], 3600.0)
    b = contact_plan(eph, [], 3600.0)
    assert [(w.endpoint_a, w.endpoint_b, w.start, w.end, w.capacity) for w in a.windows] == [
        (w.endpoint_a, w.endpoint_b, w.start, w.end, w.capacity) for w in b.windows
    ]


def test_sensing_passes_lie_inside_elevation_cone(small_plan):
    target = GroundStationSpec("t", 35.0, 120.0, 20.0)
    leo = [e.node_id for e in small_plan.ephemerides if e.regime == "LEO"]
    passes = small_plan.sensing_passes(target, 0.0, 7200.0, leo)
    g = station_ecef(target)
    for n, ivs in passes.items():
        for s, e in ivs:
            ks = np.arange(int(s // 10), int(math.ceil(e / 10)))
            assert (elevation_deg(small_plan.positions[n, ks], g) >= 20.0).all()
    assert small_plan.sensing_passes(None, 5.0, 9.0, [0]) == {0: [(5.0, 9.0)]}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.booleans(), min_size=6, max_size=6), min_size=1, max_size=5))
def test_sparse_runs_match_dense(rows):
    mask = np.array(rows)
    r, s = np.nonzero(mask)
    assert _sparse_runs(r, s) == runs(mask)


def test_nearest_anchor_links_keep_only_close_anchors():
    from spacecluster.config import desk_scenario

    cfg = desk_scenario(150, 1)
    eph = generate_constellation(cfg.shells)
    full = contact_plan(eph, cfg.stations, 1800.0, 10.0, cfg.links)
    capped = contact_plan(eph, cfg.stations, 1800.0, 10.0, CapacityConfig(max_track_s=60.0, anchor_links=2))
    anchors = [e.node_id for e in eph if e.regime != "LEO"]
    mw = lambda p: [w for w in p.windows if w.link_class == "microwave_isl"]
    assert 0 < len(mw(capped)) < len(mw(full))
    # every capped sample is visible in the full plan and among the two nearest anchors at its epoch start
    idx = {e.node_id: i for i, e in enumerate(eph)}
    for w in mw(capped)[::25]:
        k = int(w.start // 300.0) * 30
        assert full.open_window(w.endpoint_a, w.endpoint_b, w.start) is not None
        d = {a: np.linalg.norm(full.positions[idx[a], k] - full.positions[idx[w.endpoint_a], k]) for a in anchors}
        assert sorted(d, key=d.get).index(w.endpoint_b) < 2
    # capacity draws shift with the window count, geometry does not
    other = lambda p: [(w.endpoint_a, w.endpoint_b, w.start, w.end) for w in p.windows if w.link_class != "microwave_isl"]
    assert other(capped) == other(full)


def test_windows_after_handles_nested_windows():
    from spacecluster.orbits import ContactPlan

    ws = [ContactWindow(0, "g", 4.0, 12.0, "ground", 1e9), ContactWindow(0, "g", 5.0, 8.0, "ground", 1e9), ContactWindow(0, "g", 6.0, 10.0, "ground", 1e9)]
    plan = ContactPlan(ws, 20.0)
    assert [(w.start, w.end) for w in plan.windows_after(0, "g", 8.5)] == [(4.0, 12.0), (6.0, 10.0)]
    assert [(w.start, w.end) for w in plan.windows_after(0, "g", 3.0)] == [(4.0, 12.0), (5.0, 8.0), (6.0, 10.0)]
    assert plan.windows_after(0, "g", 12.0) == []

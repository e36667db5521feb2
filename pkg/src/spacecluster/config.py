"""YAML scenario and sweep files, presets and the desk-scale constellation.

A scenario file mirrors :class:`ScenarioConfig` field for field. Two
shortcuts are accepted: ``desk_size`` fills in the desk constellation and
ground segment, and omitted sections take their defaults. Validation errors
carry the line of the offending key.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
import types
import typing
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .awareness import AwarenessConfig
from .cluster import LocalLoadSpec
from .engine import ScenarioConfig
from .orbits import CapacityConfig, GroundStationSpec, OrbitShellSpec
from .scheduler import SchedulerConfig
from .tasks import WorkloadSpec

MODES = ("yuheng", "baseline")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.message = message
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# -- desk-scale world ---------------------------------------------------------------------

_DESK_SITES = [
    (40.0, 116.0), (-33.0, 151.0), (52.0, 0.0), (37.0, -122.0), (-23.0, -46.0), (1.0, 103.0), (64.0, -147.0), (-26.0, 28.0),
    (35.0, 139.0), (20.0, -156.0), (-45.0, 170.0), (14.0, -17.0), (48.0, 11.0), (-12.0, -77.0), (25.0, 55.0), (-34.0, -58.0),
]  # fmt: skip
DESK_STATIONS = tuple(GroundStationSpec(f"gs{i}", lat, lon, 10.0, 2) for i, (lat, lon) in enumerate(_DESK_SITES))
DESK_COMPUTE = 300.0  # GB/s, held fixed as the constellation grows
DESK_WORKLOAD = WorkloadSpec(sensing_min_elevation=15.0)
DESK_LINKS = CapacityConfig(max_track_s=60.0)
DESK_LOAD = LocalLoadSpec(mean_dwell=900.0)


def _planes(n: int) -> tuple[int, int]:
    p = max(d for d in range(1, math.isqrt(n) + 1) if n % d == 0)
    return p, n // p


def desk_shells(size: int) -> tuple[OrbitShellSpec, ...]:
    """LEO/MEO/GEO split of 90/8/2 percent with near-square Walker shells."""
    if size < 1:
        raise ValueError("network size must be positive")
    leo = round(0.9 * size)
    meo = round(0.08 * size)
    geo = size - leo - meo
    shells = []
    if leo:
        shells.append(OrbitShellSpec("LEO", 550.0, 53.0, *_planes(leo), phasing_offset=1.0))
    if meo:
        shells.append(OrbitShellSpec("MEO", 10000.0, 55.0, *_planes(meo)))
    if geo:
        shells.append(OrbitShellSpec("GEO", 35786.0, 0.0, 1, geo))
    return tuple(shells)


def desk_scenario(size: int, tasks: int, mode: str = "yuheng", seed: int = 0, **overrides) -> ScenarioConfig:
    base = ScenarioConfig(
        seed=seed,
        shells=desk_shells(size),
        stations=DESK_STATIONS,
        total_compute=DESK_COMPUTE,
        workload=replace(DESK_WORKLOAD, count=tasks),
        links=DESK_LINKS,
        local_load=DESK_LOAD,
        awareness=AwarenessConfig(mode=mode),
    )
    return replace(base, **overrides)


# -- sweeps ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig
    network_sizes: tuple[int, ...]
    task_counts: tuple[int, ...]
    modes: tuple[str, ...] = MODES
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        for name in ("network_sizes", "task_counts", "modes", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis {name} is empty")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown awareness mode {m!r}")

    def cells(self) -> list[tuple[str, ScenarioConfig]]:
        """(cell name, scenario) for every axis combination; names are distinct."""
        out = []
        for size, n, mode, seed in itertools.product(self.network_sizes, self.task_counts, self.modes, self.seeds):
            cfg = replace(
                self.base,
                seed=seed,
                shells=desk_shells(size),
                workload=replace(self.base.workload, count=n),
                awareness=replace(self.base.awareness, mode=mode),
            )
            out.append((f"size{size}_tasks{n}_{mode}_seed{seed}", cfg))
        return out


def smoke_scenario() -> ScenarioConfig:
    """Two satellites meeting over the equator, one station, one task."""
    return ScenarioConfig(
        seed=0,
        shells=(OrbitShellSpec("LEO", 550.0, 53.0, 2, 1, phasing_offset=180.0),),
        stations=(GroundStationSpec("gs0", 0.0, 0.0, 10.0, 2),),
        horizon=7200.0,
        total_compute=4.0,
        workload=WorkloadSpec(count=1, priority_mix=(0.0, 0.0, 1.0, 0.0), arrival_window=(0.0, 60.0), sensing_min_elevation=None),
        local_load=LocalLoadSpec(enabled=False),
        # no anchors at this size, so reports go straight to the ground
        awareness=AwarenessConfig(mode="baseline"),
    )


def _fig_desk() -> SweepSpec:
    return SweepSpec(desk_scenario(600, 400), (60, 150, 300, 600), (50, 100, 200, 400))


PRESETS = {
    "smoke": smoke_scenario,
    "default": lambda: desk_scenario(600, 400),
    # all-pairs LEO-anchor links would mean millions of windows at this size
    "full-scale": lambda: desk_scenario(6000, 4000, total_compute=10 * DESK_COMPUTE, links=replace(DESK_LINKS, anchor_links=2)),
    "fig5-desk": _fig_desk,
    "fig6-desk": _fig_desk,
}


def preset(name: str):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None


# -- YAML <-> dataclasses ----------------------------------------------------------------------


def _plain(node, path, lines, source):
    """Plain Python data from a composed YAML node, recording key lines by path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = yaml.safe_load(yaml.serialize(k))
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", k.start_mark.line + 1, source)
            lines[path + (key,)] = k.start_mark.line + 1
            out[key] = _plain(v, path + (key,), lines, source)
            lines[path + (key,)] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, path + (i,), lines, source) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def _parse(text: str, source: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None, source) from None
    lines: dict = {}
    if node is None:
        raise ConfigError("empty document", 1, source)
    return _plain(node, (), lines, source), lines


class _Reader:
    def __init__(self, lines: dict, source: str):
        self.lines = lines
        self.source = source

    def line(self, path):
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)

    def fail(self, msg, path):
        dotted = ".".join(str(p) for p in path)
        raise ConfigError(f"{dotted}: {msg}" if dotted else msg, self.line(path), self.source)

    def value(self, tp, v, path):
        origin = typing.get_origin(tp)
        args = typing.get_args(tp)
        if origin in (typing.Union, types.UnionType):
            if v is None and type(None) in args:
                return None
            (tp,) = [a for a in args if a is not type(None)]
            return self.value(tp, v, path)
        if dataclasses.is_dataclass(tp):
            return self.dataclass(tp, v, path)
        if tp is bool:
            if not isinstance(v, bool):
                self.fail(f"expected true/false, got {v!r}", path)
            return v
        if tp is int:
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(f"expected an integer, got {v!r}", path)
            return v
        if tp is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(f"expected a number, got {v!r}", path)
            return float(v)
        if tp is str:
            if not isinstance(v, str):
                self.fail(f"expected a string, got {v!r}", path)
            return v
        if origin is tuple:
            if not isinstance(v, list):
                self.fail(f"expected a list, got {v!r}", path)
            if len(args) == 2 and args[1] is Ellipsis:
                return tuple(self.value(args[0], x, path + (i,)) for i, x in enumerate(v))
            if len(v) != len(args):
                self.fail(f"expected {len(args)} items, got {len(v)}", path)
            return tuple(self.value(a, x, path + (i,)) for i, (a, x) in enumerate(zip(args, v)))
        self.fail(f"unsupported field type {tp}", path)

    def dataclass(self, cls, data, path):
        if not isinstance(data, dict):
            self.fail(f"expected a mapping for {cls.__name__}", path)
        hints = typing.get_type_hints(cls)
        fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
        for k in data:
            if k not in fields:
                self.fail(f"unknown field {k!r}", path + (k,))
        kwargs = {}
        for name, f in fields.items():
            if name not in data:
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                    self.fail(f"missing required field {name!r}", path)
                continue
            special = _SPECIAL_READ.get((cls, name))
            kwargs[name] = special(self, data[name], path + (name,)) if special else self.value(hints[name], data[name], path + (name,))
        try:
            return cls(**kwargs)
        except (ValueError, TypeError) as exc:
            self.fail(str(exc), path)


def _read_cycles(r: _Reader, v, path):
    if not isinstance(v, dict):
        r.fail("expected a mapping of priority to seconds", path)
    return {r.value(int, k, path + (k,)): r.value(float, x, path + (k,)) for k, x in v.items()}


def _read_efficiency(r: _Reader, v, path):
    # task_type -> regime -> factor
    if not isinstance(v, dict):
        r.fail("expected a mapping of task type to regime factors", path)
    out = {}
    for tt, per in v.items():
        if not isinstance(per, dict):
            r.fail("expected a mapping of regime to factor", path + (tt,))
        for regime, x in per.items():
            out[(tt, regime)] = r.value(float, x, path + (tt, regime))
    return out


_SPECIAL_READ = {
    (SchedulerConfig, "cycles"): _read_cycles,
    (SchedulerConfig, "efficiency"): _read_efficiency,
}


def to_dict(obj) -> dict:
    """Plain, YAML-ready data for a config dataclass (explicit defaults included)."""
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(obj, SchedulerConfig) and f.name == "cycles":
            v = {int(k): float(x) for k, x in sorted(v.items())}
        elif isinstance(obj, SchedulerConfig) and f.name == "efficiency":
            eff: dict = {}
            for (tt, regime), x in sorted(v.items()):
                eff.setdefault(tt, {})[regime] = float(x)
            v = eff
        elif dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, tuple):
            v = [to_dict(x) if dataclasses.is_dataclass(x) else x for x in v]
        out[f.name] = v
    return out


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def _scenario_from(data, reader: _Reader, path=()) -> ScenarioConfig:
    if not isinstance(data, dict):
        reader.fail("expected a mapping of scenario fields", path)
    data = dict(data)
    if "desk_size" in data:
        size = data.pop("desk_size")
        if isinstance(size, bool) or not isinstance(size, int) or size < 1:
            reader.fail("desk_size must be a positive integer", path + ("desk_size",))
        data.setdefault("shells", to_dict_list(desk_shells(size)))
        data.setdefault("stations", to_dict_list(DESK_STATIONS))
        data.setdefault("total_compute", DESK_COMPUTE)
        for key, default in (("links", DESK_LINKS), ("local_load", DESK_LOAD), ("workload", DESK_WORKLOAD)):
            given = data.get(key)
            if given is None or isinstance(given, dict):
                data[key] = {**to_dict(default), **(given or {})}
    return reader.dataclass(ScenarioConfig, data, path)


def to_dict_list(items) -> list:
    return [to_dict(x) for x in items]


def parse_scenario(text: str, source: str = "<config>") -> ScenarioConfig:
    data, lines = _parse(text, source)
    return _scenario_from(data, _Reader(lines, source))


def parse_sweep(text: str, source: str = "<sweep>") -> SweepSpec:
    data, lines = _parse(text, source)
    r = _Reader(lines, source)
    if not isinstance(data, dict):
        r.fail("expected a mapping with 'base' and 'axes'", ())
    for k in data:
        if k not in ("base", "axes"):
            r.fail(f"unknown field {k!r}", (k,))
    for k in ("base", "axes"):
        if k not in data:
            r.fail(f"missing required field {k!r}", ())
    base = _scenario_from(data["base"], r, ("base",))
    axes = data["axes"]
    if not isinstance(axes, dict):
        r.fail("expected a mapping of axes", ("axes",))
    kinds = {"network_sizes": int, "task_counts": int, "modes": str, "seeds": int}
    for k in axes:
        if k not in kinds:
            r.fail(f"unknown axis {k!r}", ("axes", k))
    vals = {}
    for k, tp in kinds.items():
        if k not in axes:
            r.fail(f"missing required axis {k!r}", ("axes",))
        vals[k] = r.value(tuple[tp, ...], axes[k], ("axes", k))
    for m in vals["modes"]:
        if m not in MODES:
            r.fail(f"unknown awareness mode {m!r}", ("axes", "modes"))
    try:
        return SweepSpec(base, **vals)
    except ValueError as exc:
        r.fail(str(exc), ("axes",))


def dump_sweep(spec: SweepSpec) -> str:
    doc = {
        "base": to_dict(spec.base),
        "axes": {
            "network_sizes": list(spec.network_sizes),
            "task_counts": list(spec.task_counts),
            "modes": list(spec.modes),
            "seeds": list(spec.seeds),
        },
    }
    return yaml.safe_dump(doc, sort_keys=False)


def is_sweep_text(text: str) -> bool:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError:
        return False
    return isinstance(data, dict) and "axes" in data


def load(path) -> ScenarioConfig | SweepSpec:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from None
    return parse_sweep(text, str(p)) if is_sweep_text(text) else parse_scenario(text, str(p))


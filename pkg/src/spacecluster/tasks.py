"""Stage DAGs, the demand knowledge base, and workload generation."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import yaml

from .orbits import GroundStationSpec

STAGE_KINDS = ("sensing", "processing", "transmission", "fusion", "distribution")
FUSION = "remote_sensing_fusion"

GB = 1.0
MB = 1e-3


@dataclass(frozen=True)
class StageSpec:
    stage_id: str
    kind: str
    input_volume: float = 0.0  # GB
    output_volume: float = 0.0  # GB
    compute_demand: float = 0.0  # GB to process
    transfer_demand: float = 0.0  # GB to move
    # "sensor" needs an imaging payload; "ground" needs a satellite-ground window
    affinity: str | None = None
    # processing: cap on allocated throughput (GB/s); sensing: acquisition rate
    max_rate: float | None = None

    def __post_init__(self):
        if self.kind not in STAGE_KINDS:
            raise ValueError(f"unknown stage kind {self.kind!r}")
        if min(self.input_volume, self.output_volume, self.compute_demand, self.transfer_demand) < 0:
            raise ValueError(f"stage {self.stage_id}: volumes must be non-negative")
        if self.kind == "transmission" and self.compute_demand != 0:
            raise ValueError(f"transmission stage {self.stage_id} cannot carry compute demand")
        if self.kind in ("processing", "fusion") and self.transfer_demand != 0:
            raise ValueError(f"{self.kind} stage {self.stage_id} cannot carry transfer demand")

    @property
    def moves_data(self) -> bool:
        return self.kind in ("transmission", "distribution")

    @property
    def computes(self) -> bool:
        return self.kind in ("processing", "fusion")


class CycleError(ValueError):
    pass


def topological_order(stage_ids: Sequence[str], edges: Sequence[tuple[str, str]]) -> list[str]:
    """Kahn's algorithm; ties resolved by declaration order. Raises on cycles."""
    position = {s: i for i, s in enumerate(stage_ids)}
    indeg = {s: 0 for s in stage_ids}
    succ: dict[str, list[str]] = {s: [] for s in stage_ids}
    for u, v in edges:
        if u not in position or v not in position:
            raise ValueError(f"edge ({u}, {v}) references an unknown stage")
        succ[u].append(v)
        indeg[v] += 1
    ready = sorted((s for s in stage_ids if indeg[s] == 0), key=position.get)
    order = []
    while ready:
        s = ready.pop(0)
        order.append(s)
        for v in succ[s]:
            indeg[v] -= 1
            if indeg[v] == 0:
                bisect.insort(ready, v, key=position.get)
    if len(order) != len(stage_ids):
        raise CycleError("stage graph contains a cycle")
    return order


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    task_type: str
    priority: int
    arrival: float
    deadline: float
    quality_target: float = 1.0
    stages: tuple[StageSpec, ...] = ()
    edges: tuple[tuple[str, str], ...] = ()
    target: GroundStationSpec | None = None

    def __post_init__(self):
        if self.priority not in (1, 2, 3, 4):
            raise ValueError(f"task {self.task_id}: priority must be 1-4")
        if not self.deadline > self.arrival:
            raise ValueError(f"task {self.task_id}: deadline must follow arrival")
        if not 0 <= self.quality_target <= 1:
            raise ValueError(f"task {self.task_id}: quality target must lie in [0, 1]")
        ids = [s.stage_id for s in self.stages]
        if len(set(ids)) != len(ids):
            raise ValueError(f"task {self.task_id}: duplicate stage ids")
        object.__setattr__(self, "_order", tuple(topological_order(ids, self.edges)))
        object.__setattr__(self, "_by_id", {s.stage_id: s for s in self.stages})

    @property
    def emergency(self) -> bool:
        return self.priority == 4

    def order(self) -> tuple[str, ...]:
        return self._order

    def stage(self, stage_id: str) -> StageSpec:
        return self._by_id[stage_id]

    def predecessors(self, stage_id: str) -> list[str]:
        return [u for u, v in self.edges if v == stage_id]

    def successors(self, stage_id: str) -> list[str]:
        return [v for u, v in self.edges if u == stage_id]


@dataclass(frozen=True)
class CurvePoint:
    quality: float
    factors: dict  # stage_id -> demand scaling factor
    perf_mean: float = 1.0
    perf_spread: float = 0.0


@dataclass
class DemandCurve:
    points: list[CurvePoint]

    def __post_init__(self):
        self.validate()

    def validate(self):
        qs = [p.quality for p in self.points]
        if not qs:
            raise ValueError("demand curve needs at least one point")
        if any(b <= a for a, b in zip(qs, qs[1:])):
            raise ValueError("curve quality levels must be strictly increasing")
        for sid in self.stage_ids:
            fs = [p.factors[sid] for p in self.points]
            if any(b < a - 1e-12 for a, b in zip(fs, fs[1:])):
                raise ValueError(f"demand factors for stage {sid} decrease with quality")

    @property
    def stage_ids(self) -> list[str]:
        return sorted(self.points[0].factors)

    def factor(self, stage_id: str, quality: float) -> float:
        """Piecewise-linear interpolation, clamped to the end points."""
        qs = [p.quality for p in self.points]
        fs = [p.factors[stage_id] for p in self.points]
        if quality <= qs[0]:
            return fs[0]
        if quality >= qs[-1]:
            return fs[-1]
        i = bisect.bisect_right(qs, quality)
        q0, q1 = qs[i - 1], qs[i]
        w = (quality - q0) / (q1 - q0)
        return fs[i - 1] + w * (fs[i] - fs[i - 1])


@dataclass
class TaskTemplate:
    stages: tuple[StageSpec, ...]
    edges: tuple[tuple[str, str], ...]
    curve: DemandCurve
    samples: int = 0


@dataclass
class KnowledgeBase:
    types: dict[str, TaskTemplate] = field(default_factory=dict)

    def template(self, task_type: str) -> TaskTemplate:
        try:
            return self.types[task_type]
        except KeyError:
            raise KeyError(f"unknown task type {task_type!r}") from None

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for name, tpl in sorted(self.types.items()):
            out[name] = {
                "samples": tpl.samples,
                "stages": [
                    {k: v for k, v in vars(s).items() if v is not None} for s in tpl.stages
                ],
                "edges": [list(e) for e in tpl.edges],
                "curve": [
                    {
                        "quality": p.quality,
                        "perf_mean": p.perf_mean,
                        "perf_spread": p.perf_spread,
                        "factors": dict(sorted(p.factors.items())),
                    }
                    for p in tpl.curve.points
                ],
            }
        return {"task_types": out}

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeBase":
        kb = cls()
        for name, rec in data["task_types"].items():
            stages = tuple(StageSpec(**s) for s in rec["stages"])
            edges = tuple(tuple(e) for e in rec["edges"])
            points = [
                CurvePoint(
                    float(p["quality"]),
                    {k: float(v) for k, v in p["factors"].items()},
                    float(p.get("perf_mean", 1.0)),
                    float(p.get("perf_spread", 0.0)),
                )
                for p in rec["curve"]
            ]
            kb.types[name] = TaskTemplate(stages, edges, DemandCurve(points), int(rec.get("samples", 0)))
        return kb

    def save(self, path) -> None:
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    @classmethod
    def load(cls, path) -> "KnowledgeBase":
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f))


def fusion_template(
    raw_volume: float = 5 * GB,
    preprocessed_volume: float = 500 * MB,
    product_volume: float = 20 * MB,
    sensing_rate: float = 1.0,
    preprocess_rate: float = 1.0,
    fusion_rate: float = 0.5,
) -> tuple[tuple[StageSpec, ...], tuple[tuple[str, str], ...]]:
    """Five-stage remote-sensing fusion chain at full quality."""
    stages = (
        StageSpec("sensing", "sensing", 0.0, raw_volume, affinity="sensor", max_rate=sensing_rate),
        StageSpec("preprocessing", "processing", raw_volume, preprocessed_volume, compute_demand=raw_volume, max_rate=preprocess_rate),
        StageSpec("transmission", "transmission", preprocessed_volume, preprocessed_volume, transfer_demand=preprocessed_volume),
        # two source streams are fused, hence twice the preprocessed volume of work
        StageSpec("fusion", "fusion", preprocessed_volume, product_volume, compute_demand=2 * preprocessed_volume, max_rate=fusion_rate),
        StageSpec("distribution", "distribution", product_volume, product_volume, transfer_demand=product_volume, affinity="ground"),
    )
    ids = [s.stage_id for s in stages]
    return stages, tuple(zip(ids, ids[1:]))


def default_knowledge_base(**template_kwargs) -> KnowledgeBase:
    stages, edges = fusion_template(**template_kwargs)
    qualities = (0.0, 0.5, 0.8, 1.0)
    compute_factors = (0.3, 0.6, 0.85, 1.0)
    perf = ((0.55, 0.08), (0.75, 0.05), (0.9, 0.03), (0.97, 0.02))
    points = []
    for q, cf, (pm, ps) in zip(qualities, compute_factors, perf):
        factors = {s.stage_id: (cf if s.computes else 1.0) for s in stages}
        points.append(CurvePoint(q, factors, pm, ps))
    return KnowledgeBase({FUSION: TaskTemplate(stages, edges, DemandCurve(points))})


def query_demands(kb: KnowledgeBase, task_type: str, quality: float) -> dict:
    """Absolute per-stage demands at ``quality``: {stage_id: {"compute": GB, "transfer": GB}}."""
    if not 0 <= quality <= 1:
        raise ValueError(f"quality {quality} outside [0, 1]")
    tpl = kb.template(task_type)
    out = {}
    for s in tpl.stages:
        f = tpl.curve.factor(s.stage_id, quality)
        # data volumes are fixed by the pipeline; only processing effort scales
        out[s.stage_id] = {"compute": s.compute_demand * f, "transfer": s.transfer_demand}
    return out


def build_task(task_id, task_type, priority, arrival, deadline, quality, kb: KnowledgeBase, target=None) -> TaskSpec:
    tpl = kb.template(task_type)
    demands = query_demands(kb, task_type, quality)
    stages = tuple(replace(s, compute_demand=demands[s.stage_id]["compute"]) for s in tpl.stages)
    return TaskSpec(task_id, task_type, priority, arrival, deadline, quality, stages, tpl.edges, target)


def build_fusion_task(priority, arrival, deadline, quality, kb: KnowledgeBase, task_id: int = 0, target=None) -> TaskSpec:
    return build_task(task_id, FUSION, priority, arrival, deadline, quality, kb, target)


@dataclass(frozen=True)
class Feedback:
    task_type: str
    stage_id: str
    quality: float
    realized_factor: float  # realized demand relative to the full-quality template
    achieved_quality: float | None = None


def isotonic_non_decreasing(values: Sequence[float], weights: Sequence[float] | None = None) -> list[float]:
    """Pool-adjacent-violators fit of a non-decreasing sequence (least squares)."""
    w = [1.0] * len(values) if weights is None else list(weights)
    blocks: list[list[float]] = []  # [mean, weight, count]
    for v, wi in zip(values, w):
        blocks.append([float(v), float(wi), 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            m2, w2, c2 = blocks.pop()
            m1, w1, c1 = blocks.pop()
            wt = w1 + w2
            blocks.append([(m1 * w1 + m2 * w2) / wt, wt, c1 + c2])
    out = []
    for m, _, c in blocks:
        out.extend([m] * c)
    return out


def calibrate(kb: KnowledgeBase, feedback: Sequence[Feedback], alpha: float = 0.2) -> KnowledgeBase:
    """EWMA-update the nearest curve point for each observation, then restore monotonicity."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    new = KnowledgeBase.from_dict(kb.to_dict())
    touched = set()
    for fb in feedback:
        tpl = new.template(fb.task_type)
        pts = tpl.curve.points
        i = min(range(len(pts)), key=lambda j: (abs(pts[j].quality - fb.quality), j))
        p = pts[i]
        factors = dict(p.factors)
        factors[fb.stage_id] = (1 - alpha) * factors[fb.stage_id] + alpha * fb.realized_factor
        perf_mean = p.perf_mean
        if fb.achieved_quality is not None:
            perf_mean = (1 - alpha) * p.perf_mean + alpha * fb.achieved_quality
        pts[i] = CurvePoint(p.quality, factors, perf_mean, p.perf_spread)
        tpl.samples += 1
        touched.add(fb.task_type)
    for name in touched:
        tpl = new.types[name]
        pts = tpl.curve.points
        for sid in tpl.curve.stage_ids:
            fitted = isotonic_non_decreasing([p.factors[sid] for p in pts])
            for j, v in enumerate(fitted):
                f = dict(pts[j].factors)
                f[sid] = v
                pts[j] = CurvePoint(pts[j].quality, f, pts[j].perf_mean, pts[j].perf_spread)
        tpl.curve.validate()
    return new


@dataclass(frozen=True)
class WorkloadSpec:
    count: int = 400
    priority_mix: tuple[float, float, float, float] = (0.3, 0.3, 0.3, 0.1)
    arrival_window: tuple[float, float] = (0.0, 10800.0)
    regular_deadline: float = 3600.0
    emergency_deadline: float = 600.0
    quality_range: tuple[float, float] = (0.8, 1.0)
    target_max_latitude: float = 50.0
    # imaging geometry: the satellite must stand this high above the target;
    # None drops the targets and lets any sensor image at any time
    sensing_min_elevation: float | None = 60.0
    task_type: str = FUSION


def generate_workload(spec: WorkloadSpec, seed: int, kb: KnowledgeBase | None = None) -> list[TaskSpec]:
    """Seeded task list sorted by arrival; ids follow arrival order."""
    if spec.count < 0:
        raise ValueError("task count must be non-negative")
    kb = kb or default_knowledge_base()
    mix = np.asarray(spec.priority_mix, dtype=float)
    if mix.shape != (4,) or (mix < 0).any() or mix.sum() <= 0:
        raise ValueError("priority_mix needs four non-negative weights")
    rng = np.random.default_rng(seed)
    n = spec.count
    t0, t1 = spec.arrival_window
    arrivals = np.sort(rng.uniform(t0, t1, size=n))
    priorities = rng.choice(4, size=n, p=mix / mix.sum()) + 1
    qualities = rng.uniform(*spec.quality_range, size=n)
    # targets uniform on the sphere, restricted in latitude
    smax = math.sin(math.radians(spec.target_max_latitude))
    lats = np.degrees(np.arcsin(rng.uniform(-smax, smax, size=n)))
    lons = rng.uniform(-180.0, 180.0, size=n)
    tasks = []
    for i in range(n):
        prio = int(priorities[i])
        arrival = float(arrivals[i])
        horizon = spec.emergency_deadline if prio == 4 else spec.regular_deadline
        target = None
        if spec.sensing_min_elevation is not None:
            target = GroundStationSpec(f"target-{i}", float(lats[i]), float(lons[i]), spec.sensing_min_elevation)
        tasks.append(build_task(i, spec.task_type, prio, arrival, arrival + horizon, float(qualities[i]), kb, target))
    return tasks


def workload_to_csv(tasks: Sequence[TaskSpec], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["task_id", "type", "priority", "arrival_s", "deadline_s", "quality"])
        for t in tasks:
            w.writerow([t.task_id, t.task_type, t.priority, f"{t.arrival:.6f}", f"{t.deadline:.6f}", f"{t.quality_target:.6f}"])

"""Evaluation metrics and result export."""

from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

STALE = "stale_view_conflict"
METRIC_COLUMNS = ["network_size", "task_count", "mode", "seed", "wcr", "mean_delay_s", "afr", "completed", "failed_stale", "failed_other"]


class MetricsError(ValueError):
    pass


def weighted_completion_ratio(records: Iterable) -> float:
    """Priority-weighted share of tasks completed; 1.0 for an empty workload."""
    total = done = 0
    for r in records:
        if r.status not in ("completed", "failed"):
            raise MetricsError(f"task {r.task_id} is not terminal ({r.status})")
        total += r.priority
        if r.status == "completed":
            done += r.priority
    return 1.0 if total == 0 else done / total


def mean_awareness_delay(samples: Sequence[float]) -> float:
    """Mean over per-instant mean staleness (every instant covers all nodes)."""
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise MetricsError("no staleness samples")
    return float(s.mean())


def awareness_failure_ratio(records: Iterable) -> float:
    failed = [r for r in records if r.status == "failed"]
    if not failed:
        return 0.0
    return sum(r.reason == STALE for r in failed) / len(failed)


@dataclass
class MetricsReport:
    weighted_completion_ratio: float
    mean_awareness_delay: float
    awareness_failure_ratio: float
    per_priority: dict = field(default_factory=dict)  # priority -> (completed, total)
    placed: int = 0
    completed: int = 0
    failed: int = 0
    failed_by_reason: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("weighted_completion_ratio", "awareness_failure_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise MetricsError(f"{name} = {v} outside [0, 1]")
        if sum(self.failed_by_reason.values()) != self.failed:
            raise MetricsError("failure counts by reason do not add up")


def metrics_report(trace) -> MetricsReport:
    recs = list(trace.tasks.values())
    by_reason: dict = {}
    per: dict = {}
    for r in recs:
        c, n = per.get(r.priority, (0, 0))
        per[r.priority] = (c + (r.status == "completed"), n + 1)
        if r.status == "failed":
            by_reason[r.reason] = by_reason.get(r.reason, 0) + 1
    placed = len({e.task_id for e in trace.entries})
    return MetricsReport(
        weighted_completion_ratio(recs),
        mean_awareness_delay(trace.staleness),
        awareness_failure_ratio(recs),
        dict(sorted(per.items())),
        placed,
        sum(r.status == "completed" for r in recs),
        sum(r.status == "failed" for r in recs),
        dict(sorted(by_reason.items())),
    )


@dataclass(frozen=True)
class MetricsRow:
    network_size: int
    task_count: int
    mode: str
    seed: int
    wcr: float
    mean_delay_s: float
    afr: float
    completed: int
    failed_stale: int
    failed_other: int

    @classmethod
    def from_report(cls, report: MetricsReport, network_size: int, task_count: int, mode: str, seed: int) -> "MetricsRow":
        stale = report.failed_by_reason.get(STALE, 0)
        return cls(network_size, task_count, mode, seed, report.weighted_completion_ratio, report.mean_awareness_delay,
                   report.awareness_failure_ratio, report.completed, stale, report.failed - stale)


def sort_rows(rows: Iterable[MetricsRow]) -> list[MetricsRow]:
    return sorted(rows, key=lambda r: (r.mode, r.network_size, r.task_count, r.seed))


def export(rows: Iterable[MetricsRow], path) -> None:
    """Write metric rows, sorted by (mode, network_size, task_count, seed)."""
    rows = sort_rows(rows)
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(METRIC_COLUMNS)
            for r in rows:
                w.writerow([r.network_size, r.task_count, r.mode, r.seed, repr(r.wcr), repr(r.mean_delay_s), repr(r.afr), r.completed, r.failed_stale, r.failed_other])
    except OSError as exc:
        raise OSError(f"cannot write metrics to {os.fspath(path)}: {exc.strerror}") from exc


def load_rows(path) -> list[MetricsRow]:
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        if rd.fieldnames != METRIC_COLUMNS:
            raise MetricsError(f"{path}: unexpected columns {rd.fieldnames}")
        return [
            MetricsRow(int(d["network_size"]), int(d["task_count"]), d["mode"], int(d["seed"]), float(d["wcr"]),
                       float(d["mean_delay_s"]), float(d["afr"]), int(d["completed"]), int(d["failed_stale"]), int(d["failed_other"]))
            for d in rd
        ]


def group_means(rows: Iterable[MetricsRow], by=("mode", "network_size")) -> dict:
    """Mean wcr / delay / afr per group key."""
    acc: dict = {}
    for r in rows:
        key = tuple(getattr(r, k) for k in by)
        acc.setdefault(key, []).append(r)
    out = {}
    for key, rs in sorted(acc.items()):
        out[key] = {
            "wcr": float(np.mean([r.wcr for r in rs])),
            "mean_delay_s": float(np.mean([r.mean_delay_s for r in rs])),
            "afr": float(np.mean([r.afr for r in rs])),
            "runs": len(rs),
        }
    return out


def write_summary(rows: Iterable[MetricsRow], path) -> None:
    rows = list(rows)
    lines = ["mode      size  runs   wcr     delay_s    afr"]
    for (mode, size), m in group_means(rows).items():
        lines.append(f"{mode:<9} {size:>5} {m['runs']:>5}   {m['wcr']:.3f}  {m['mean_delay_s']:>9.2f}  {m['afr']:.3f}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def report_dict(report: MetricsReport) -> dict:
    return asdict(report)

"""Run scenarios and sweeps, writing traces and metric tables to disk."""

from __future__ import annotations

import csv
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import SweepSpec, dump_scenario
from .engine import ScenarioConfig, run
from .metrics import MetricsRow, export, sort_rows, write_summary

TRACE_FILES = ("events.csv", "tasks.csv", "plans.csv", "staleness.csv", "awareness.csv")


def write_trace(trace, out: Path, mode: str) -> None:
    trace.events_csv(out / "events.csv")
    trace.tasks_csv(out / "tasks.csv")
    trace.plans_csv(out / "plans.csv")
    trace.staleness_csv(out / "staleness.csv")
    trace.awareness.log.to_csv(out / "awareness.csv", mode=mode)


def run_scenario(config: ScenarioConfig, out_dir) -> MetricsRow:
    """Run one scenario and write its config, trace CSVs, metrics row and summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_scenario(config))
    trace, report = run(config)
    write_trace(trace, out, config.mode)
    row = MetricsRow.from_report(report, config.network_size, config.workload.count, config.mode, config.seed)
    export([row], out / "metrics.csv")
    write_summary([row], out / "summary.txt")
    return row


def _cell(args):
    name, config, out = args
    try:
        return name, run_scenario(config, Path(out) / name), None
    except Exception:  # recorded per cell so the sweep carries on
        return name, None, traceback.format_exc()


def run_sweep(spec: SweepSpec, out_dir, jobs: int = 1) -> tuple[list[MetricsRow], dict]:
    """Run every cell (up to ``jobs`` at once) and aggregate.

    Returns the metric rows and a map of failed cell name to traceback; the
    aggregate ``metrics.csv`` and ``summary.txt`` hold the successful cells
    and ``failures.csv`` lists the rest.
    """
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    work = [(name, cfg, os.fspath(out)) for name, cfg in spec.cells()]
    if jobs == 1:
        results = list(map(_cell, work))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, work))
    rows = sort_rows(r for _, r, err in results if err is None)
    failures = {name: err for name, _, err in results if err is not None}
    export(rows, out / "metrics.csv")
    write_summary(rows, out / "summary.txt")
    with open(out / "failures.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["cell", "error"])
        for name in sorted(failures):
            w.writerow([name, failures[name].strip().splitlines()[-1]])
    return rows, failures

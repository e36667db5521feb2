"""Command line entry point: ``spacecluster {run,sweep,print-default-config,validate}``.

Exit status is 0 on success, 1 for configuration errors and 2 for runtime
failures (including sweeps where any cell failed).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace

from . import config as cfgmod
from .config import ConfigError, SweepSpec
from .engine import ScenarioConfig
from .runner import run_scenario, run_sweep

log = logging.getLogger("spacecluster")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _load(args, want):
    if bool(args.config) == bool(args.preset):
        raise ConfigError("give exactly one of --config or --preset")
    obj = cfgmod.load(args.config) if args.config else cfgmod.preset(args.preset)
    if want is ScenarioConfig and isinstance(obj, SweepSpec):
        raise ConfigError("this is a sweep; use the sweep subcommand", source=args.config or args.preset)
    if want is SweepSpec and isinstance(obj, ScenarioConfig):
        obj = SweepSpec(obj, (obj.network_size,), (obj.workload.count,), (obj.mode,), (obj.seed,))
    seed = getattr(args, "seed_override", None)
    if seed is not None:
        obj = replace(obj, seed=seed) if isinstance(obj, ScenarioConfig) else replace(obj, seeds=(seed,))
    return obj


def _cmd_run(args) -> int:
    config = _load(args, ScenarioConfig)
    t0 = time.perf_counter()
    row = run_scenario(config, args.out)
    log.info("%s: wcr=%.3f delay=%.1fs afr=%.3f (%.1fs)", args.out, row.wcr, row.mean_delay_s, row.afr, time.perf_counter() - t0)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = _load(args, SweepSpec)
    t0 = time.perf_counter()
    rows, failures = run_sweep(spec, args.out, args.jobs)
    log.info("%d cells done, %d failed (%.1fs)", len(rows), len(failures), time.perf_counter() - t0)
    for name in sorted(failures):
        log.error("cell %s failed:\n%s", name, failures[name])
    return EXIT_RUNTIME if failures else EXIT_OK


def _cmd_print(args) -> int:
    obj = cfgmod.preset(args.preset or "default")
    text = cfgmod.dump_sweep(obj) if isinstance(obj, SweepSpec) else cfgmod.dump_scenario(obj)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_validate(args) -> int:
    obj = _load(args, None)
    kind = "sweep" if isinstance(obj, SweepSpec) else "scenario"
    print(f"{args.config or args.preset}: valid {kind}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spacecluster", description="Space cluster scheduling simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def source(sp):
        sp.add_argument("--config", help="YAML scenario or sweep file")
        sp.add_argument("--preset", help=f"built-in configuration: {', '.join(sorted(cfgmod.PRESETS))}")

    r = sub.add_parser("run", help="run one scenario")
    source(r)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed-override", type=int)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    source(s)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.add_argument("--seed-override", type=int, help="replace the seed axis with this single seed")
    s.set_defaults(func=_cmd_sweep)

    d = sub.add_parser("print-default-config", help="print a configuration with every default spelled out")
    d.add_argument("--preset", help="print this preset instead of the default scenario")
    d.set_defaults(func=_cmd_print)

    v = sub.add_parser("validate", help="check a configuration without running it")
    source(v)
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

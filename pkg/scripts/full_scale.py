"""One 6000-satellite, 4000-task run per awareness mode, timed.

    python scripts/full_scale.py --out runs/full

Results are recorded as-is; they are not expected to match reference
absolute numbers, only the direction of the desk-scale trends.
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from spacecluster.config import preset
from spacecluster.runner import run_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--modes", nargs="+", default=["yuheng", "baseline"])
    args = ap.parse_args()

    base = preset("full-scale")
    for mode in args.modes:
        cfg = replace(base, awareness=replace(base.awareness, mode=mode))
        t0 = time.perf_counter()
        row = run_scenario(cfg, Path(args.out) / mode)
        print(f"{mode}: wcr={row.wcr:.3f} delay={row.mean_delay_s:.1f}s afr={row.afr:.3f} ({time.perf_counter() - t0:.0f}s)", flush=True)


if __name__ == "__main__":
    main()

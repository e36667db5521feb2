"""Run the desk-scale sweep and print per-size trends.

    python scripts/desk_sweep.py --out runs/desk [--jobs 4]
"""

import argparse
import time

from spacecluster.config import preset
from spacecluster.metrics import group_means
from spacecluster.runner import run_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--preset", default="fig5-desk")
    args = ap.parse_args()

    spec = preset(args.preset)
    t0 = time.perf_counter()
    rows, failures = run_sweep(spec, args.out, args.jobs)
    elapsed = time.perf_counter() - t0
    means = group_means(rows)
    print(f"{len(rows)} cells in {elapsed:.0f}s, {len(failures)} failed")
    print("size   wcr(y)  wcr(b)  delay(y)  delay(b)  afr(y)  afr(b)")
    for size in sorted(spec.network_sizes):
        y, b = means[("yuheng", size)], means[("baseline", size)]
        print(f"{size:>4}   {y['wcr']:.3f}   {b['wcr']:.3f}   {y['mean_delay_s']:7.1f}   {b['mean_delay_s']:7.1f}   {y['afr']:.3f}   {b['afr']:.3f}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Full Monte-Carlo comparison (default 500 runs) with a percentile table.

    python3 scripts/run_monte_carlo.py --runs 500 --workers 4 --out results/mc500
"""
import argparse
import logging
import time
from dataclasses import replace

from agmix.experiment import METHODS, METRICS, load_config, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="paper_experiment")
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="results/monte_carlo")
    args = p.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = replace(load_config(args.config), output_dir=args.out)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    t0 = time.perf_counter()
    agg = run_experiment(cfg, runs=args.runs, workers=args.workers)
    print(f"{args.runs} runs in {time.perf_counter() - t0:.0f}s\n")

    print(f"{'':8s}" + "".join(f"{m:>12s}" for m in METRICS))
    for method in METHODS:
        if method in agg.means:
            print(f"{method:8s}" + "".join(f"{agg.means[method][m]:12.4g}" for m in METRICS))
    print(f"\nGS_DEC percentiles ({agg.counts['GS_DEC']} runs, {agg.failed['GS_DEC']} failed)")
    for pct, vals in agg.percentiles.items():
        print(f"{pct:>6d}% " + "".join(f"{vals[m]:12.4g}" for m in METRICS))
    print(f"\nCSV files in {args.out}")


if __name__ == "__main__":
    main()

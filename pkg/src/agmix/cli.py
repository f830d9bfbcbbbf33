"""Command line entry point: ``agmix run|truth|seed-demo --config FILE``.

Exit codes: 0 success, 1 config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, NumericalError
from .experiment import (METHODS, METRICS, load_config, run_experiment, solve_truth, write_candidates_csv,
                         write_sampling_csv, write_truth_snapshots)
from .mixture import mixture_moments
from .seeder import progressive_selection
from .truth import expected_loss_on_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agmix", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte-Carlo comparison of TRUTH, EKF, GS_BCK and GS_DEC")
    run.add_argument("--config", required=True, help="config file or preset name (paper_experiment)")
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--workers", type=int, default=1)

    truth = sub.add_parser("truth", help="grid FPKE solution snapshots")
    truth.add_argument("--config", required=True)
    truth.add_argument("--out")

    demo = sub.add_parser("seed-demo", help="per-iteration sampling pdf of one progressive selection")
    demo.add_argument("--config", required=True)
    demo.add_argument("--seed", type=int)
    demo.add_argument("--out")
    return p


def _config(args):
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        updates["monte_carlo_runs"] = args.runs
    if getattr(args, "out", None):
        updates["output_dir"] = args.out
    try:
        return replace(cfg, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_run(args) -> None:
    cfg = _config(args)
    agg = run_experiment(cfg, workers=args.workers)
    print(f"{'method':8s} " + " ".join(f"{m:>12s}" for m in METRICS) + "   ok  failed")
    for method in METHODS:
        if method in agg.means:
            vals = agg.means[method]
            print(f"{method:8s} " + " ".join(f"{vals[m]:12.4g}" for m in METRICS)
                  + f" {agg.counts[method]:4d} {agg.failed[method]:7d}")
    print("GS_DEC percentiles")
    for p, vals in agg.percentiles.items():
        print(f"{p:>7d}% " + " ".join(f"{vals[m]:12.4g}" for m in METRICS))
    print(f"wrote {cfg.output_dir}/runs.csv, aggregate.csv, pdf_t{cfg.t_d:g}.csv")


def _cmd_truth(args) -> None:
    cfg = _config(args)
    times = list(np.arange(0.0, cfg.t_d + 1e-9, cfg.weight_update_interval))
    sol = solve_truth(cfg, times)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_truth_snapshots(out / "truth_snapshots.csv", sol)
    L = expected_loss_on_grid(sol.final, cfg.loss())
    print(f"expected loss at t={cfg.t_d:g}: {L:.6g}  (max mass drift {sol.max_mass_drift:.2e})")
    print(f"wrote {out / 'truth_snapshots.csv'}")


def _cmd_seed_demo(args) -> None:
    cfg = _config(args)
    res = progressive_selection(cfg.initial_pdf(), cfg.dynamics(), cfg.seeder_config(cfg.seed), cfg.loss())
    mu, P = mixture_moments(cfg.initial_pdf())
    sd = float(np.sqrt(P[0, 0]))
    x = np.linspace(mu[0] - 6 * sd, mu[0] + 6 * sd, 1201)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sampling_csv(out / "sampling_iters.csv", res, x)
    write_candidates_csv(out / "seed_candidates.csv", res)
    for i, it in enumerate(res.history, 1):
        print(f"iteration {i:2d}: alpha={it.alpha:10.4g} gamma={it.gamma:.4g} beta={it.beta:g}")
    print(f"converged={res.converged} added={res.added}")
    print(f"wrote {out / 'sampling_iters.csv'}, {out / 'seed_candidates.csv'}")


COMMANDS = {"run": _cmd_run, "truth": _cmd_truth, "seed-demo": _cmd_seed_demo}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Discretization checks for the reference solver and the moment integrator.

Prints the truth expected loss at t_d under grid and time-step refinement,
and the RK4 self-convergence of the sine-model moments.
"""
import time

import numpy as np

from agmix.experiment import ExperimentConfig
from agmix.propagate import propagate_moments
from agmix.truth import FPKEGridSpec, expected_loss_on_grid, solve_fpke


def truth_table(cfg):
    print("truth expected loss at t_d")
    print(f"{'domain':>14s} {'nodes':>6s} {'dt':>8s} {'L_true':>10s} {'seconds':>8s}")
    for lo, hi, nodes, dt in [(-20, 20, 2001, 2e-3), (-20, 20, 4001, 1e-3), (-20, 20, 8001, 5e-4),
                              (-30, 30, 6001, 1e-3)]:
        t0 = time.perf_counter()
        sol = solve_fpke(cfg.dynamics(), cfg.initial_pdf(), FPKEGridSpec(lo, hi, nodes, dt), cfg.t_d)
        L = expected_loss_on_grid(sol.final, cfg.loss())
        print(f"{f'[{lo},{hi}]':>14s} {nodes:6d} {dt:8.0e} {L:10.6f} {time.perf_counter() - t0:8.1f}")


def rk4_table(cfg):
    print("\nRK4 step refinement, sine model moments at t_d")
    ref = propagate_moments(cfg.dynamics(), [[-0.3]], [[[0.09]]], 0.0, cfg.t_d, 1e-4)
    for h in (0.08, 0.04, 0.02, 0.01):
        m, P = propagate_moments(cfg.dynamics(), [[-0.3]], [[[0.09]]], 0.0, cfg.t_d, h)
        print(f"h={h:5.3f}  mean err {abs(m - ref[0]).max():.2e}  cov err {abs(P - ref[1]).max():.2e}")


if __name__ == "__main__":
    cfg = ExperimentConfig()
    truth_table(cfg)
    rk4_table(cfg)

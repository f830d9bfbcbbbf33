"""Reference 1D Fokker-Planck solver on a uniform grid.

Finite-volume discretization of

    dp/dt = -d/dx[(f + d1) p] + d^2/dx^2 [d2 p]

with zero-flux walls, Crank-Nicolson in time. Face advection is central
where the cell Peclet number is below 2 and upwinded elsewhere.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dynamics import DynamicsModel, fpke_diffusion_terms
from .exceptions import NumericalError
from .mixture import GaussianMixture, LossFunction, eval_density

log = logging.getLogger(__name__)

NEGATIVE_TOL = 1e-10
MASS_TOL = 1e-4
BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class FPKEGridSpec:
    x_lo: float = -20.0
    x_hi: float = 20.0
    nodes: int = 4001
    dt: float = 1e-3

    def __post_init__(self):
        if not self.x_hi > self.x_lo:
            raise ValueError("x_hi must exceed x_lo")
        if self.nodes < 3 or self.dt <= 0:
            raise ValueError("need nodes >= 3 and dt > 0")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nodes)

    @property
    def spacing(self) -> float:
        return (self.x_hi - self.x_lo) / (self.nodes - 1)


@dataclass(frozen=True)
class FPKEGrid:
    """pdf values at the grid nodes at one time."""

    x: np.ndarray
    t: float
    pdf: np.ndarray

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    def mass(self) -> float:
        return float(np.trapezoid(self.pdf, self.x))


@dataclass
class FPKESolution:
    snapshots: list[FPKEGrid]
    max_mass_drift: float
    min_density: float

    def at(self, t: float) -> FPKEGrid:
        for s in self.snapshots:
            if math.isclose(s.t, t, rel_tol=0.0, abs_tol=1e-9):
                return s
        raise KeyError(f"no snapshot at t={t}")

    @property
    def final(self) -> FPKEGrid:
        return self.snapshots[-1]


def _operator(model: DynamicsModel, t: float, x: np.ndarray) -> sp.csc_matrix:
    """Sparse generator A with dp/dt = A p (per-node values, cell width h)."""
    h = x[1] - x[0]
    xf = 0.5 * (x[1:] + x[:-1])
    pts = xf[:, None]
    d1, d2 = fpke_diffusion_terms(model, t, pts)
    a = model.eval_drift(t, pts)[:, 0] + d1[:, 0]
    # diffusion flux -(d2 p)' uses node values of d2
    _, d2n = fpke_diffusion_terms(model, t, x[:, None])
    b_node = d2n[:, 0, 0]
    b_face = d2[:, 0, 0]
    peclet = np.abs(a) * h / np.maximum(b_face, np.finfo(float).tiny)
    central = peclet < 2.0
    # advective flux a * (theta_L p_L + theta_R p_R)
    th_l = np.where(central, 0.5, np.where(a > 0, 1.0, 0.0))
    th_r = 1.0 - th_l
    # F_{k+1/2} = cL p_k + cR p_{k+1}
    cL = a * th_l + b_node[:-1] / h
    cR = a * th_r - b_node[1:] / h
    n = len(x)
    main = np.zeros(n)
    main[:-1] -= cL / h
    main[1:] += cR / h
    upper = -cR / h
    lower = cL / h
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csc")


def solve_fpke(model: DynamicsModel, initial_pdf: GaussianMixture, grid_spec: FPKEGridSpec | None = None,
               t_end: float = 8.0, snapshot_times: Sequence[float] | None = None,
               t_start: float = 0.0, check_boundary: bool = True) -> FPKESolution:
    """Integrate the 1D FPKE from ``t_start`` to ``t_end``.

    Snapshots are stored at every requested time (rounded to the time grid)
    and always at ``t_end``.
    """
    if model.dimension != 1:
        raise ValueError("the grid solver handles 1D models only")
    spec = grid_spec or FPKEGridSpec()
    x = spec.x
    h = spec.spacing
    p = np.asarray(eval_density(initial_pdf, x), dtype=float)
    n_steps = int(round((t_end - t_start) / spec.dt))
    if n_steps < 1 or abs(n_steps * spec.dt - (t_end - t_start)) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end - t_start must be a positive multiple of dt")
    dt = spec.dt
    wanted = sorted(set(round((s - t_start) / dt) for s in (snapshot_times or []) if t_start <= s <= t_end))
    wanted_set = set(wanted) | {n_steps}

    mass0 = p.sum() * h
    if mass0 <= 0:
        raise ValueError("initial pdf has no mass on the grid")
    p = p / mass0
    snapshots = []
    if 0 in wanted_set:
        snapshots.append(FPKEGrid(x, t_start, p.copy()))

    eye = sp.identity(len(x), format="csc")
    lu = rhs_op = None
    max_drift = 0.0
    min_density = 0.0
    for k in range(n_steps):
        t = t_start + k * dt
        if lu is None or not model.autonomous:
            A = _operator(model, t + 0.5 * dt, x)
            lu = spla.splu((eye - 0.5 * dt * A).tocsc())
            rhs_op = (eye + 0.5 * dt * A).tocsr()
        p = lu.solve(rhs_op @ p)
        low = p.min()
        if low < 0.0:
            min_density = min(min_density, low)
            if low < -NEGATIVE_TOL:
                log.info("clamping negative density %.3e at t=%.4f", low, t + dt)
            p = np.maximum(p, 0.0)
        mass = p.sum() * h
        drift = abs(mass - 1.0)
        max_drift = max(max_drift, drift)
        if drift > MASS_TOL:
            raise NumericalError(f"mass drifted to {mass:.6f} at t={t + dt:.4f}")
        p = p / mass
        if k + 1 in wanted_set:
            snapshots.append(FPKEGrid(x, t_start + (k + 1) * dt, p.copy()))

    if max_drift > 1e-8:
        log.info("largest per-step renormalization %.3e", max_drift)
    if check_boundary:
        edge = max(snapshots[-1].pdf[0], snapshots[-1].pdf[-1])
        if edge > BOUNDARY_TOL:
            raise NumericalError(f"density {edge:.3e} at the grid boundary; widen the domain")
    return FPKESolution(snapshots, max_drift, min_density)


def expected_loss_on_grid(grid: FPKEGrid, loss: LossFunction) -> float:
    """Trapezoidal integral of L(x) p(x)."""
    return float(np.trapezoid(loss(grid.x[:, None]) * grid.pdf, grid.x))

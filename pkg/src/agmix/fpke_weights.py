"""Weight adaptation by minimizing the Fokker-Planck residual of the mixture.

Each component ``p_i = N(x | mu_i, P_i)`` moving under the EKF moment ODEs
leaves a residual

    R_i(t, x) = dp_i/dt + sum_j d(f_j p_i)/dx_j + sum_j d(d1_j p_i)/dx_j
                - sum_jk d^2(d2_jk p_i)/dx_j dx_k

where ``dp_i/dt`` is the chain rule through ``mu_i`` and ``P_i``. The weights
at each update epoch solve

    min 1/2 w^T (L + I) w - w^T w_prev   on the simplex,   L_ij = int R_i R_j dx.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsModel, fpke_diffusion_terms
from .mixture import GaussianComponent, GaussianMixture, gaussian_pdf
from .propagate import moment_rates
from .qp import solve_simplex_qp

log = logging.getLogger(__name__)

BOUNDARY_WARN_RATIO = 1e-8


@dataclass(frozen=True)
class QuadratureSpec:
    """Integration box ``mean +- sigma_pad * std`` around all components.

    1D merges a uniform grid over the whole box with a uniform grid of the
    same size over each component's own box, and integrates with the
    trapezoid rule, so narrow and wide components are both resolved. Higher
    dimensions use a tensor Gauss-Legendre rule with ``nodes_per_dim`` points
    per axis over the whole box.
    """

    nodes: int = 801
    sigma_pad: float = 6.0
    nodes_per_dim: int = 40

    def __post_init__(self):
        if self.nodes < 3:
            raise ValueError("quadrature needs at least 3 nodes")
        if self.sigma_pad <= 0:
            raise ValueError("sigma_pad must be positive")


def _residual_batch(model: DynamicsModel, t: float, mean: np.ndarray, cov: np.ndarray,
                    x: np.ndarray, mean_rate=None, cov_rate=None) -> np.ndarray:
    """Residual of one Gaussian at points x (K, n)."""
    n = model.dimension
    if mean_rate is None or cov_rate is None:
        dm, dP = moment_rates(model, t, mean[None], cov[None])
        mean_rate = dm[0] if mean_rate is None else mean_rate
        cov_rate = dP[0] if cov_rate is None else cov_rate
    p = gaussian_pdf(x, mean, cov)
    P_inv = np.linalg.inv(cov)
    s = (x - mean) @ P_inv  # P^-1 (x - mu), rows
    # chain rule through the moments
    term_mean = p * (s @ mean_rate)
    term_cov = 0.5 * p * (np.einsum("ki,ij,kj->k", s, cov_rate, s) - np.trace(P_inv @ cov_rate))
    # advection: f . grad p + p div f, with grad p = -p s
    f = model.eval_drift(t, x)
    div = model.eval_divergence(t, x)
    term_adv = -p * np.sum(f * s, axis=-1) + p * div

    d1, d2 = fpke_diffusion_terms(model, t, x)
    if model.constant_diffusion:
        D = d2[0] if d2.ndim == 3 else d2
        term_d1 = 0.0
        term_d2 = -p * (np.einsum("ki,ij,kj->k", s, D, s) - np.trace(D @ P_inv))
    else:
        # 1D only (fpke_diffusion_terms rejects the rest)
        xs = x[:, 0]
        h = 1e-4 * (1.0 + np.abs(xs))
        d1p, d2p = fpke_diffusion_terms(model, t, (xs + h)[:, None])
        d1m, d2m = fpke_diffusion_terms(model, t, (xs - h)[:, None])
        a1 = d1[:, 0]
        a1_x = (d1p[:, 0] - d1m[:, 0]) / (2 * h)
        b = d2[:, 0, 0]
        b_x = (d2p[:, 0, 0] - d2m[:, 0, 0]) / (2 * h)
        b_xx = (d2p[:, 0, 0] - 2 * b + d2m[:, 0, 0]) / (h * h)
        sv = s[:, 0]
        p_x = -p * sv
        p_xx = p * (sv * sv - P_inv[0, 0])
        term_d1 = a1_x * p + a1 * p_x
        term_d2 = -(b_xx * p + 2 * b_x * p_x + b * p_xx)
    return term_mean + term_cov + term_adv + term_d1 + term_d2


def residual_at(component: GaussianComponent, model: DynamicsModel, t: float, x,
                mean_rate=None, cov_rate=None):
    """FPKE residual of a single component at x (a point (n,) or a batch (K, n)).

    ``mean_rate``/``cov_rate`` default to the EKF moment ODEs at time t.
    """
    x = np.asarray(x, dtype=float)
    n = component.dimension
    if model.dimension != n:
        raise ValueError("model and component dimensions differ")
    if n == 1 and x.ndim <= 1:
        single = x.ndim == 0
    else:
        single = x.ndim == 1
    pts = x.reshape(-1, n)
    mr = None if mean_rate is None else np.asarray(mean_rate, dtype=float).reshape(n)
    cr = None if cov_rate is None else np.asarray(cov_rate, dtype=float).reshape(n, n)
    r = _residual_batch(model, t, component.mean, component.cov, pts, mr, cr)
    return float(r[0]) if single else r


def quadrature_rule(components, spec: QuadratureSpec):
    """Nodes (K, n) and weights (K,) covering every component's +-pad sigma box."""
    means = np.stack([c.mean for c in components])
    stds = np.stack([np.sqrt(np.diag(c.cov)) for c in components])
    lo = np.min(means - spec.sigma_pad * stds, axis=0)
    hi = np.max(means + spec.sigma_pad * stds, axis=0)
    n = means.shape[1]
    if n == 1:
        grids = [np.linspace(lo[0], hi[0], spec.nodes)]
        grids += [np.linspace(m - spec.sigma_pad * sd, m + spec.sigma_pad * sd, spec.nodes)
                  for m, sd in zip(means[:, 0], stds[:, 0])]
        xs = np.unique(np.concatenate(grids))
        return xs[:, None], _trapezoid_weights(xs)
    g, gw = np.polynomial.legendre.leggauss(spec.nodes_per_dim)
    axes = [0.5 * (hi[j] - lo[j]) * g + 0.5 * (hi[j] + lo[j]) for j in range(n)]
    wts = [0.5 * (hi[j] - lo[j]) * gw for j in range(n)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    weights = np.ones(1)
    for w in wts:
        weights = np.outer(weights, w).reshape(-1)
    return nodes, weights


def _trapezoid_weights(xs: np.ndarray) -> np.ndarray:
    dx = np.diff(xs)
    w = np.zeros(len(xs))
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def residual_matrix(components, model: DynamicsModel, t: float, spec: QuadratureSpec):
    """Stack of component residuals on the quadrature nodes, plus the rule."""
    nodes, weights = quadrature_rule(components, spec)
    R = np.stack([_residual_batch(model, t, c.mean, c.cov, nodes) for c in components])
    return R, nodes, weights


def build_L_matrix(components, model: DynamicsModel, t: float, spec: QuadratureSpec | None = None) -> np.ndarray:
    """L_ij = integral of R_i R_j over the quadrature box."""
    spec = spec or QuadratureSpec()
    if isinstance(components, GaussianMixture):
        components = components.components
    components = list(components)
    if len({c.dimension for c in components}) != 1:
        raise ValueError("components must share one dimension")
    R, nodes, weights = residual_matrix(components, model, t, spec)
    L = (R * weights) @ R.T
    L = 0.5 * (L + L.T)
    _check_boundary(R, nodes, components)
    return L


def _check_boundary(R: np.ndarray, nodes: np.ndarray, components) -> None:
    if nodes.shape[1] != 1:
        return
    sq = R * R
    peak = np.max(sq)
    if peak <= 0.0:
        return
    edge = max(np.max(sq[:, 0]), np.max(sq[:, -1]))
    if edge > BOUNDARY_WARN_RATIO * peak:
        warnings.warn(
            f"residual at the quadrature boundary is {edge / peak:.2e} of its peak; "
            "increase sigma_pad",
            RuntimeWarning,
            stacklevel=3,
        )


def solve_weight_qp(L, prior_weights) -> np.ndarray:
    """Minimize 1/2 w^T (L + I) w - w^T prior on the simplex, warm-started at the prior."""
    L = np.asarray(L, dtype=float)
    prior = np.asarray(prior_weights, dtype=float).reshape(-1)
    H = L + np.eye(len(prior))
    return solve_simplex_qp(H, prior, w0=prior)


class FPKEWeightAdapter:
    """Callable used by :func:`propagate_mixture` at each update epoch."""

    def __init__(self, quadrature: QuadratureSpec | None = None):
        self.quadrature = quadrature or QuadratureSpec()

    def __call__(self, model: DynamicsModel, t: float, mix: GaussianMixture) -> np.ndarray:
        if len(mix) == 1:
            return np.ones(1)
        L = build_L_matrix(mix.components, model, t, self.quadrature)
        w = solve_weight_qp(L, mix.weights)
        log.debug("t=%.3f weights=%s", t, np.array2string(w, precision=4))
        return w

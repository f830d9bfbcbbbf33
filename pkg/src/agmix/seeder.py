"""Loss-sensitive seeding of extra mixture components.

:func:`progressive_selection` iteratively samples candidate initial means,
propagates them to the decision time, weights them by how much they
contribute to the expected loss, and anneals the sampling pdf toward the
region whose forward image covers the loss support. :func:`backprop_seed`
is the simple baseline that integrates loss-region points backwards.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .dynamics import DynamicsModel
from .exceptions import NumericalError
from .mixture import GaussianComponent, GaussianMixture, LossFunction, gaussian_overlap, mixture_moments
from .propagate import propagate_moments, propagate_points
from .qp import solve_simplex_qp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeederConfig:
    t_d: float = 8.0
    M: int = 5
    D: np.ndarray = field(default_factory=lambda: np.array([[0.01]]))
    w_tol: float = 1e-3
    beta: float = 0.9
    max_iter: int = 25
    rng_seed: int = 0
    ode_step: float = 0.01
    max_resample: int = 100

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        try:
            np.linalg.cholesky(D)
        except np.linalg.LinAlgError:
            raise ValueError("D must be symmetric positive definite") from None
        object.__setattr__(self, "D", D)
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.w_tol < 0:
            raise ValueError("w_tol must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.t_d <= 0:
            raise ValueError("t_d must be positive")


@dataclass
class SeedingIteration:
    """Everything computed in one pass of the selection loop."""

    sampling_pdf: GaussianMixture
    means: np.ndarray
    gamma: float
    covs: np.ndarray
    means_td: np.ndarray
    covs_td: np.ndarray
    most_distant: int
    alpha: float
    weights: np.ndarray
    beta: float
    resamples: int


@dataclass
class SeedingResult:
    mixture: GaussianMixture
    history: list[SeedingIteration]
    converged: bool
    added: int

    @property
    def iterations(self) -> int:
        return len(self.history)


def sample_mixture(mix: GaussianMixture, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` iid points (count, n) from a normalized mixture."""
    w = mix.weights
    idx = rng.choice(len(mix), size=count, p=w / w.sum())
    out = np.empty((count, mix.dimension))
    for k, i in enumerate(idx):
        c = mix.components[i]
        out[k] = rng.multivariate_normal(c.mean, c.cov)
    return out


def sample_candidate_means(sampling_pdf: GaussianMixture, mu0, M: int, rng: np.random.Generator) -> np.ndarray:
    """M-1 draws from the sampling pdf plus one mean forcing the sample average to ``mu0``."""
    if M < 2:
        raise ValueError("M must be at least 2")
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
    draws = sample_mixture(sampling_pdf, M - 1, rng)
    last = M * mu0 - draws.sum(axis=0)
    return np.vstack([draws, last])


def solve_gamma(D, P0, mu0, means) -> float:
    """Scale on D so the candidate set reproduces the trace of P0.

    A nonpositive value means the candidate scatter already exceeds P0 and the
    means must be resampled.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    dev = np.atleast_2d(np.asarray(means, dtype=float)) - np.atleast_1d(mu0)
    scatter = dev.T @ dev / dev.shape[0]
    return float(np.trace(P0 - scatter) / np.trace(D))


def mahalanobis_to_loss(means_td, covs_td, loss: LossFunction) -> np.ndarray:
    d = []
    for m, P in zip(np.atleast_2d(means_td), covs_td):
        r = loss.mean - m
        d.append(float(r @ np.linalg.solve(P + loss.cov, r)))
    return np.array(d)


def most_distant_component(means_td, covs_td, loss: LossFunction) -> tuple[int, np.ndarray, np.ndarray]:
    """Index, mean and covariance of the candidate farthest from the loss.

    Distance is Mahalanobis under ``P_i + Sigma_L``; ties go to the first index.
    """
    d = mahalanobis_to_loss(means_td, covs_td, loss)
    i = int(np.argmax(d))
    return i, np.atleast_2d(means_td)[i], np.asarray(covs_td)[i]


def alpha_objective(alpha: float, mean_max, cov_max, loss: LossFunction) -> float:
    """Negative log (up to constants) of the inflated expected loss of one component."""
    K = alpha * loss.cov + cov_max
    r = loss.mean - mean_max
    sign, logdet = np.linalg.slogdet(K)
    if sign <= 0:
        return math.inf
    return float(logdet + r @ np.linalg.solve(K, r))


def alpha_closed_form(mean_max, cov_max, loss: LossFunction) -> float:
    r = np.atleast_1d(loss.mean - mean_max)
    U = np.outer(r, r)
    n = loss.dimension
    return float(np.trace((U - cov_max) @ np.linalg.inv(loss.cov)) / n)


def solve_alpha(mean_max, cov_max, loss: LossFunction) -> float:
    """Inflation factor of the loss covariance, clamped below at 1.

    In 1D the closed form is the exact stationary point of
    :func:`alpha_objective`. For n > 1 it is only a starting guess and is
    refined by a bounded scalar search.
    """
    cov_max = np.atleast_2d(cov_max)
    alpha = alpha_closed_form(mean_max, cov_max, loss)
    if loss.dimension > 1 and alpha > 1.0:
        hi = max(4.0 * alpha, 10.0)
        res = minimize_scalar(alpha_objective, bounds=(1e-12, hi), args=(mean_max, cov_max, loss),
                              method="bounded", options={"xatol": 1e-10 * hi})
        alpha = float(res.x)
    return max(alpha, 1.0)


def seed_qp_terms(means_td, covs_td, loss: LossFunction, alpha: float):
    """Overlap matrix between candidates and their overlap with the inflated loss."""
    means_td = np.atleast_2d(means_td)
    k = len(means_td)
    Mmat = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            Mmat[i, j] = Mmat[j, i] = gaussian_overlap(means_td[j], covs_td[j], means_td[i], covs_td[i])
    inflated = alpha * loss.cov
    Nvec = np.array([gaussian_overlap(loss.mean, inflated, m, P) for m, P in zip(means_td, covs_td)])
    return Mmat, Nvec


def solve_seed_weight_qp(means_td, covs_td, loss: LossFunction, alpha: float) -> np.ndarray:
    Mmat, Nvec = seed_qp_terms(means_td, covs_td, loss, alpha)
    return solve_simplex_qp(Mmat, Nvec)


def progressive_selection(initial_pdf: GaussianMixture, model: DynamicsModel, config: SeederConfig,
                          loss: LossFunction, rng: Optional[np.random.Generator] = None) -> SeedingResult:
    """Append zero-weight components whose images at ``t_d`` probe the loss region.

    The loop stops once the inflation factor reaches 1, or after
    ``max_iter`` passes; in the latter case the pass with the smallest
    factor is used and ``converged`` is False.
    """
    if initial_pdf.unnormalized:
        raise ValueError("initial pdf must be normalized")
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    M = config.M
    D = config.D
    sampling = initial_pdf
    prev_alpha = None
    history: list[SeedingIteration] = []
    converged = False

    for _ in range(config.max_iter):
        mu0, P0 = mixture_moments(sampling)
        gamma = -1.0
        for attempt in range(1, config.max_resample + 1):
            means = sample_candidate_means(sampling, mu0, M, rng)
            gamma = solve_gamma(D, P0, mu0, means)
            if gamma > 0:
                break
        else:
            raise NumericalError(f"no positive gamma after {config.max_resample} resamples")
        covs = np.broadcast_to(gamma * D, (M,) + D.shape).copy()
        means_td, covs_td = propagate_moments(model, means, covs, 0.0, config.t_d, config.ode_step)
        i_max, m_max, P_max = most_distant_component(means_td, covs_td, loss)
        alpha = solve_alpha(m_max, P_max, loss)
        w = solve_seed_weight_qp(means_td, covs_td, loss, alpha)
        beta = config.beta if (prev_alpha is not None and alpha < prev_alpha) else 1.0
        sampling = GaussianMixture.from_arrays(w, means, beta * covs)
        history.append(SeedingIteration(
            sampling_pdf=sampling, means=means, gamma=gamma, covs=covs, means_td=means_td,
            covs_td=covs_td, most_distant=i_max, alpha=alpha, weights=w, beta=beta, resamples=attempt,
        ))
        log.debug("iteration %d: alpha=%.4g gamma=%.4g weights=%s", len(history), alpha, gamma, w)
        if alpha <= 1.0:
            converged = True
            break
        prev_alpha = alpha

    if converged:
        final = history[-1]
    else:
        final = min(history, key=lambda it: it.alpha)
        log.warning("progressive selection hit max_iter=%d (best alpha %.4g)", config.max_iter, final.alpha)

    keep = [j for j in range(M) if final.weights[j] >= config.w_tol]
    extra = [GaussianComponent(0.0, final.means[j], final.covs[j]) for j in keep]
    return SeedingResult(initial_pdf.extended(extra), history, converged, len(extra))


def backprop_seed(initial_pdf: GaussianMixture, model: DynamicsModel, loss: LossFunction, t_d: float,
                  count: int = 5, tiny_var: float = 1e-10, ode_step: float = 0.01) -> GaussianMixture:
    """Append zero-weight, near-point components at the pre-images of loss-region samples.

    ``count`` equidistant points across the 3-sigma interval of the loss are
    integrated backwards from ``t_d`` to 0 under the deterministic drift.
    """
    if model.dimension != 1:
        raise ValueError("back-propagation seeding is defined for 1D models only")
    sd = math.sqrt(loss.cov[0, 0])
    targets = np.linspace(loss.mean[0] - 3 * sd, loss.mean[0] + 3 * sd, count)[:, None]
    starts = propagate_points(model, targets, t_d, 0.0, ode_step)
    extra = [GaussianComponent(0.0, m, np.array([[tiny_var]])) for m in starts]
    return initial_pdf.extended(extra)

"""Gaussian mixture value types and closed-form Gaussian integrals.

Covariances are stored as full symmetric matrices; Cholesky factors are
computed on demand inside each vectorized evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-9
SYMMETRY_TOL = 1e-12
# densities below this are flushed to zero
DENSITY_FLOOR = 1e-300

_LOG_2PI = np.log(2.0 * np.pi)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_spd(cov: np.ndarray, name: str = "cov") -> None:
    scale = max(np.max(np.abs(cov)), np.finfo(float).tiny)
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        n = mean.shape[0]
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0 or cov.size == 1 and n == 1:
            cov = cov.reshape(1, 1)
        if cov.shape != (n, n):
            raise ValueError(f"cov shape {cov.shape} does not match mean dimension {n}")
        _check_spd(cov)
        weight = float(self.weight)
        if not weight >= 0.0:
            raise ValueError(f"weight must be nonnegative, got {weight}")
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    def with_weight(self, weight: float) -> "GaussianComponent":
        return GaussianComponent(weight, self.mean, self.cov)


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted sum of Gaussian pdfs.

    The weights must lie on the probability simplex unless ``unnormalized``
    is set, which the seeding stage uses for collections that are not
    densities in their own right.
    """

    components: tuple[GaussianComponent, ...]
    unnormalized: bool = False
    dimension: int = field(init=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        n = comps[0].dimension
        if any(c.dimension != n for c in comps):
            raise ValueError("all components must share the same dimension")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "dimension", n)
        if not self.unnormalized:
            total = sum(c.weight for c in comps)
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError(f"mixture weights sum to {total!r}, expected 1")

    @classmethod
    def from_arrays(cls, weights, means, covs, unnormalized: bool = False) -> "GaussianMixture":
        """Build a mixture from stacked arrays.

        ``means`` is (N, n) and ``covs`` is (N, n, n); for 1D mixtures plain
        length-N sequences are accepted for both.
        """
        weights = np.asarray(weights, dtype=float).reshape(-1)
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        if means.ndim <= 1:
            means = means.reshape(-1, 1)
        if covs.ndim <= 1:
            covs = covs.reshape(-1, 1, 1)
        if not (len(weights) == len(means) == len(covs)):
            raise ValueError("weights, means and covs must have the same length")
        comps = tuple(GaussianComponent(w, m, P) for w, m, P in zip(weights, means, covs))
        return cls(comps, unnormalized=unnormalized)

    def __len__(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])

    @property
    def covs(self) -> np.ndarray:
        return np.stack([c.cov for c in self.components])

    def with_weights(self, weights: Sequence[float], unnormalized: bool | None = None) -> "GaussianMixture":
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(weights) != len(self):
            raise ValueError("weight vector length does not match component count")
        flag = self.unnormalized if unnormalized is None else unnormalized
        return GaussianMixture(
            tuple(c.with_weight(w) for c, w in zip(self.components, weights)), unnormalized=flag
        )

    def extended(self, extra: Iterable[GaussianComponent]) -> "GaussianMixture":
        return GaussianMixture(self.components + tuple(extra), unnormalized=self.unnormalized)


@dataclass(frozen=True)
class LossFunction:
    """Gaussian-shaped loss ``N(x | mean, cov)`` attached to a decision action."""

    mean: np.ndarray
    cov: np.ndarray
    action_label: str = "a_d"

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float).reshape(mean.shape[0], mean.shape[0])
        _check_spd(cov, "loss cov")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    def __call__(self, x) -> np.ndarray:
        return gaussian_pdf(x, self.mean, self.cov)


def gaussian_logpdf(x, mean, cov) -> np.ndarray:
    """Log of N(x | mean, cov) for x of shape (n,) or (K, n)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    n = mean.shape[0]
    cov = np.asarray(cov, dtype=float).reshape(n, n)
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x = x.reshape(-1, n)
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, (x - mean).T)
    maha = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    out = -0.5 * (maha + logdet + n * _LOG_2PI)
    return out[0] if single else out


def gaussian_pdf(x, mean, cov) -> np.ndarray:
    """N(x | mean, cov) with underflow flushed to zero."""
    p = np.exp(gaussian_logpdf(x, mean, cov))
    return np.where(p < DENSITY_FLOOR, 0.0, p)


def eval_density(mix: GaussianMixture, x) -> np.ndarray | float:
    """Mixture density at x.

    ``x`` may be a single point of shape (n,) or a batch of shape (K, n).
    For 1D mixtures a flat array of K points is also accepted.
    """
    x = np.asarray(x, dtype=float)
    n = mix.dimension
    if x.ndim == 0 or (x.ndim == 1 and n == 1):
        pts = x.reshape(-1, 1)
        single = x.ndim == 0
    elif x.ndim == 1:
        if x.shape[0] != n:
            raise ValueError(f"point has dimension {x.shape[0]}, mixture has {n}")
        pts = x.reshape(1, n)
        single = True
    else:
        if x.shape[-1] != n:
            raise ValueError(f"points have dimension {x.shape[-1]}, mixture has {n}")
        pts = x
        single = False
    total = np.zeros(pts.shape[0])
    for c in mix.components:
        if c.weight > 0.0:
            total += c.weight * gaussian_pdf(pts, c.mean, c.cov)
    return float(total[0]) if single else total


def mixture_moments(mix: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of a normalized mixture."""
    if mix.unnormalized:
        raise ValueError("moments are only defined for a normalized mixture")
    w = mix.weights
    means = mix.means
    mean = w @ means
    dev = means - mean
    cov = np.einsum("i,ijk->jk", w, mix.covs) + np.einsum("i,ij,ik->jk", w, dev, dev)
    return mean, 0.5 * (cov + cov.T)


def gaussian_overlap(mean1, cov1, mean2, cov2) -> float:
    """Integral of N(x|mean1,cov1) N(x|mean2,cov2) over x, i.e. N(mean1 | mean2, cov1 + cov2)."""
    mean1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    n = mean1.shape[0]
    cov1 = np.asarray(cov1, dtype=float).reshape(n, n)
    cov2 = np.asarray(cov2, dtype=float).reshape(n, n)
    _check_spd(cov1, "cov1")
    _check_spd(cov2, "cov2")
    return float(gaussian_pdf(mean1, mean2, cov1 + cov2))

"""Forecast accuracy measures of an approximate pdf against the grid truth."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .mixture import GaussianMixture, LossFunction, eval_density, gaussian_overlap
from .truth import FPKEGrid


@dataclass(frozen=True)
class RunReport:
    method: str
    seed: int
    L_hat: float
    R_err: float
    ISD: float
    WISD: float

    FIELDS = ("method", "seed", "L_hat", "R_err", "ISD", "WISD")

    def as_row(self) -> dict:
        return asdict(self)


def expected_loss_mixture(mix: GaussianMixture, loss: LossFunction) -> float:
    """Closed-form sum_i w_i N(mu_L | mu_i, P_i + Sigma_L)."""
    if mix.unnormalized:
        raise ValueError("expected loss needs a normalized mixture")
    return float(sum(c.weight * gaussian_overlap(loss.mean, loss.cov, c.mean, c.cov)
                     for c in mix.components if c.weight > 0.0))


def relative_error(L_hat: float, L_true: float) -> float:
    if L_true == 0:
        raise ValueError("relative error undefined for zero true loss")
    return abs(L_true - L_hat) / abs(L_true)


def _sq_diff(truth: FPKEGrid, mix: GaussianMixture) -> np.ndarray:
    approx = eval_density(mix, truth.x)
    return (truth.pdf - approx) ** 2


def isd(truth: FPKEGrid, mix: GaussianMixture) -> float:
    """Integral of the squared pdf difference on the truth grid."""
    return float(np.trapezoid(_sq_diff(truth, mix), truth.x))


def wisd(truth: FPKEGrid, mix: GaussianMixture, loss: LossFunction) -> float:
    """Loss-weighted integral square difference."""
    return float(np.trapezoid(loss(truth.x[:, None]) * _sq_diff(truth, mix), truth.x))


def isd_arrays(x, p, q) -> float:
    return float(np.trapezoid((np.asarray(p) - np.asarray(q)) ** 2, x))


def report(method: str, seed: int, mix: GaussianMixture, truth: FPKEGrid, loss: LossFunction,
           L_true: float) -> RunReport:
    L_hat = expected_loss_mixture(mix, loss)
    return RunReport(method, int(seed), L_hat, relative_error(L_hat, L_true),
                     isd(truth, mix), wisd(truth, mix, loss))

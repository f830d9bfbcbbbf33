"""EKF time update for every mixture component, interleaved with weight adaptation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import DynamicsModel
from .exceptions import CovarianceError, NumericalError
from .mixture import GaussianComponent, GaussianMixture

# (model, t, mixture) -> new weight vector
WeightAdapter = Callable[[DynamicsModel, float, GaussianMixture], np.ndarray]


@dataclass(frozen=True)
class PropagationSchedule:
    t_start: float
    t_end: float
    ode_step: float = 0.01
    weight_update_interval: float = 0.5

    def __post_init__(self):
        span = self.t_end - self.t_start
        if not 0.0 < self.ode_step <= self.weight_update_interval <= span + 1e-12:
            raise ValueError("need 0 < ode_step <= weight_update_interval <= t_end - t_start")
        ratio = self.weight_update_interval / self.ode_step
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("weight_update_interval must be an integer multiple of ode_step")

    @property
    def epoch_times(self) -> np.ndarray:
        """Weight-update instants after t_start; the last one is t_end."""
        k = int(math.ceil((self.t_end - self.t_start) / self.weight_update_interval - 1e-9))
        times = self.t_start + self.weight_update_interval * np.arange(1, k + 1)
        times[-1] = self.t_end
        return times


def moment_rates(model: DynamicsModel, t: float, means: np.ndarray, covs: np.ndarray):
    """Right-hand side of the EKF moment ODEs for a batch of components.

    ``means`` is (N, n) and ``covs`` is (N, n, n). Returns (mean_rate, cov_rate).
    """
    dm = model.eval_drift(t, means)
    A = model.eval_jacobian(t, means)
    AP = A @ covs
    dP = AP + np.swapaxes(AP, -1, -2) + model.process_noise(t, means)
    return dm, dP


def _check_spd_batch(covs: np.ndarray, t: float) -> None:
    if covs.shape[-1] == 1:
        if not np.all(covs[..., 0, 0] > 0.0) or not np.all(np.isfinite(covs)):
            raise CovarianceError("covariance lost positive definiteness", t)
        return
    try:
        np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        raise CovarianceError("covariance lost positive definiteness", t) from None


def propagate_moments(model: DynamicsModel, means, covs, t0: float, t1: float, ode_step: float = 0.01):
    """Integrate the mean/covariance ODEs of a batch of components from t0 to t1.

    Classical fixed-step RK4; when ``t1 - t0`` is not a multiple of
    ``ode_step`` the step is shortened uniformly. Works backwards in time
    when ``t1 < t0``.
    """
    means = np.array(means, dtype=float)
    covs = np.array(covs, dtype=float)
    span = t1 - t0
    if span == 0.0:
        return means, covs
    n_steps = max(1, int(math.ceil(abs(span) / ode_step - 1e-9)))
    h = span / n_steps
    t = t0
    for k in range(n_steps):
        k1m, k1P = moment_rates(model, t, means, covs)
        k2m, k2P = moment_rates(model, t + 0.5 * h, means + 0.5 * h * k1m, covs + 0.5 * h * k1P)
        k3m, k3P = moment_rates(model, t + 0.5 * h, means + 0.5 * h * k2m, covs + 0.5 * h * k2P)
        k4m, k4P = moment_rates(model, t + h, means + h * k3m, covs + h * k3P)
        means = means + (h / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        covs = covs + (h / 6.0) * (k1P + 2.0 * k2P + 2.0 * k3P + k4P)
        covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
        t = t0 + (k + 1) * h
        _check_spd_batch(covs, t)
    return means, covs


def propagate_component(model: DynamicsModel, component: GaussianComponent, t0: float, t1: float,
                        ode_step: float = 0.01) -> GaussianComponent:
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    m, P = propagate_moments(model, component.mean[None], component.cov[None], t0, t1, ode_step)
    return GaussianComponent(component.weight, m[0], P[0])


def propagate_points(model: DynamicsModel, points, t0: float, t1: float, ode_step: float = 0.01) -> np.ndarray:
    """Integrate the deterministic flow x' = f(t, x) for a batch of points (N, n)."""
    x = np.array(points, dtype=float)
    span = t1 - t0
    if span == 0.0:
        return x
    n_steps = max(1, int(math.ceil(abs(span) / ode_step - 1e-9)))
    h = span / n_steps
    for k in range(n_steps):
        t = t0 + k * h
        k1 = model.eval_drift(t, x)
        k2 = model.eval_drift(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = model.eval_drift(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = model.eval_drift(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"deterministic flow diverged near t={t + h:.6g}")
    return x


@dataclass(frozen=True)
class Epoch:
    time: float
    mixture: GaussianMixture


def propagate_mixture(model: DynamicsModel, mix: GaussianMixture, schedule: PropagationSchedule,
                      weight_adapter: Optional[WeightAdapter] = None) -> list[Epoch]:
    """Advance every component over each weight-update interval.

    After each interval the adapter (if any) replaces the weights. Returns the
    mixture at every update epoch; the initial mixture is not included.
    """
    means, covs = mix.means, mix.covs
    weights = mix.weights
    t = schedule.t_start
    trajectory = []
    for t_next in schedule.epoch_times:
        means, covs = propagate_moments(model, means, covs, t, t_next, schedule.ode_step)
        current = GaussianMixture.from_arrays(weights, means, covs, unnormalized=mix.unnormalized)
        if weight_adapter is not None:
            weights = np.asarray(weight_adapter(model, t_next, current), dtype=float)
            current = current.with_weights(weights)
        trajectory.append(Epoch(float(t_next), current))
        t = t_next
    return trajectory

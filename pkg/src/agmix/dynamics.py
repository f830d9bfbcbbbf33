"""Continuous-time SDE models ``dx = f(t, x) dt + g(t, x) dW`` with ``E[dW dW^T] = Q dt``.

Model callables are batched: ``x`` has shape ``(..., n)`` and results carry
the same leading axes (``(..., n)`` for the drift, ``(..., n, m)`` for the
diffusion, ``(..., n, n)`` for the drift Jacobian).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import UnsupportedModelError

Array = np.ndarray


def _fd_step(x: Array) -> Array:
    return 1e-6 * (1.0 + np.abs(x))


def finite_difference_jacobian(func: Callable[[float, Array], Array], t: float, x: Array) -> Array:
    """Central-difference Jacobian of a batched vector field; returns (..., n_out, n)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for j in range(n):
        h = _fd_step(x[..., j])
        e = np.zeros(x.shape)
        e[..., j] = h
        df = (np.asarray(func(t, x + e)) - np.asarray(func(t, x - e))) / (2.0 * h[..., None])
        cols.append(df)
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class DynamicsModel:
    dimension: int
    drift: Callable[[float, Array], Array]
    diffusion: Callable[[float, Array], Array]
    noise_intensity: Array
    drift_jacobian: Optional[Callable[[float, Array], Array]] = None
    # d g / d x with shape (..., n, m, n); finite differences when absent
    diffusion_jacobian: Optional[Callable[[float, Array], Array]] = None
    constant_diffusion: bool = False
    autonomous: bool = True
    name: str = "custom"

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.noise_intensity, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("noise intensity must be square")
        np.linalg.cholesky(Q)
        Q.setflags(write=False)
        object.__setattr__(self, "noise_intensity", Q)

    def _check(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 and self.dimension == 1:
            x = x.reshape(1)
        if x.shape[-1] != self.dimension:
            raise ValueError(f"state has dimension {x.shape[-1]}, model has {self.dimension}")
        return x

    def eval_drift(self, t: float, x) -> Array:
        return np.asarray(self.drift(t, self._check(x)), dtype=float)

    def eval_diffusion(self, t: float, x) -> Array:
        return np.asarray(self.diffusion(t, self._check(x)), dtype=float)

    def eval_jacobian(self, t: float, x) -> Array:
        x = self._check(x)
        if self.drift_jacobian is not None:
            return np.asarray(self.drift_jacobian(t, x), dtype=float)
        return finite_difference_jacobian(self.drift, t, x)

    def eval_divergence(self, t: float, x) -> Array:
        """Sum of the diagonal drift derivatives, shape (...)."""
        return np.trace(self.eval_jacobian(t, x), axis1=-2, axis2=-1)

    def process_noise(self, t: float, x) -> Array:
        """g Q g^T, shape (..., n, n)."""
        g = self.eval_diffusion(t, x)
        return g @ self.noise_intensity @ np.swapaxes(g, -1, -2)

    def eval_diffusion_jacobian(self, t: float, x) -> Array:
        x = self._check(x)
        if self.constant_diffusion:
            g = self.eval_diffusion(t, x)
            return np.zeros(g.shape + (self.dimension,))
        if self.diffusion_jacobian is not None:
            return np.asarray(self.diffusion_jacobian(t, x), dtype=float)
        n = self.dimension
        cols = []
        for j in range(n):
            h = _fd_step(x[..., j])
            e = np.zeros(x.shape)
            e[..., j] = h
            dg = (self.eval_diffusion(t, x + e) - self.eval_diffusion(t, x - e)) / (2.0 * h[..., None, None])
            cols.append(dg)
        return np.stack(cols, axis=-1)


def fpke_diffusion_terms(model: DynamicsModel, t: float, x) -> tuple[Array, Array]:
    """Return ``(d1, d2)`` with ``d1 = 1/2 (dg/dx) Q g`` and ``d2 = 1/2 g Q g^T``.

    ``d1`` is only defined for scalar states or state-independent diffusion;
    other cases raise :class:`UnsupportedModelError`.
    """
    x = model._check(x)
    d2 = 0.5 * model.process_noise(t, x)
    n = model.dimension
    if model.constant_diffusion:
        return np.zeros(x.shape), d2
    if n != 1 or model.noise_intensity.shape[0] != 1:
        raise UnsupportedModelError("d1 is implemented only for 1D states with scalar noise")
    g = model.eval_diffusion(t, x)[..., 0, 0]
    dg = model.eval_diffusion_jacobian(t, x)[..., 0, 0, 0]
    q = model.noise_intensity[0, 0]
    return (0.5 * dg * q * g)[..., None], d2


# -- built-in models ---------------------------------------------------------

def _ones_gain(x: Array) -> Array:
    return np.ones(x.shape[:-1] + (1, 1))


def sine_model(q: float = 1.0) -> DynamicsModel:
    """x' = sin(x) + w, noise intensity q."""
    return DynamicsModel(
        dimension=1,
        drift=lambda t, x: np.sin(x),
        diffusion=lambda t, x: _ones_gain(x),
        noise_intensity=np.array([[q]]),
        drift_jacobian=lambda t, x: np.cos(x)[..., None],
        constant_diffusion=True,
        name="sine",
    )


def pure_diffusion_model(q: float = 1.0) -> DynamicsModel:
    """x' = w."""
    return DynamicsModel(
        dimension=1,
        drift=lambda t, x: np.zeros_like(x),
        diffusion=lambda t, x: _ones_gain(x),
        noise_intensity=np.array([[q]]),
        drift_jacobian=lambda t, x: np.zeros(x.shape + (1,)),
        constant_diffusion=True,
        name="pure_diffusion",
    )


def linear_model(a: float = -1.0, q: float = 1.0) -> DynamicsModel:
    """x' = a x + w."""
    return DynamicsModel(
        dimension=1,
        drift=lambda t, x: a * x,
        diffusion=lambda t, x: _ones_gain(x),
        noise_intensity=np.array([[q]]),
        drift_jacobian=lambda t, x: np.full(x.shape + (1,), float(a)),
        constant_diffusion=True,
        name="linear",
    )


BUILTIN_MODELS = {
    "sine": sine_model,
    "pure_diffusion": pure_diffusion_model,
    "linear": linear_model,
}


def get_model(name: str, **params) -> DynamicsModel:
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(BUILTIN_MODELS)}") from None
    return factory(**params)

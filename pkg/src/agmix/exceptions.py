"""Exceptions raised by the numerical routines."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (loss of positive-definiteness, divergence, ...)."""


class CovarianceError(NumericalError):
    """A propagated covariance stopped being positive definite."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time


class UnsupportedModelError(NotImplementedError):
    """The model uses a feature the residual/diffusion machinery does not cover."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""

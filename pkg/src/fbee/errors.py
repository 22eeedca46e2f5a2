"""Exception taxonomy. Each family maps to one CLI exit code."""

from __future__ import annotations


class FBEEError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class SingularOperatorError(FBEEError):
    """A linear solve hit a (numerically) non-invertible operator."""

    exit_code = 2


class FredholmSingularError(SingularOperatorError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class ShootingSingularError(SingularOperatorError):
    def __init__(self, message: str, sigma_min: float):
        super().__init__(message)
        self.sigma_min = sigma_min


class NonConvergenceError(FBEEError):
    exit_code = 3


class RiccatiBlowUpError(NonConvergenceError):
    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class RiccatiAccuracyError(NonConvergenceError):
    pass


class PicardDivergenceError(NonConvergenceError):
    """No contraction at the current homotopy level; triggers step halving."""


class ContinuationStalledError(NonConvergenceError):
    def __init__(self, message: str, last_rho: float):
        super().__init__(message)
        self.last_rho = last_rho


class CertificateFailure(FBEEError):
    exit_code = 4


class ConfigError(FBEEError, ValueError):
    exit_code = 5


class HypothesisError(FBEEError, ValueError):
    """Structural hypotheses of an operation are violated by its inputs."""

    exit_code = 5

"""Centralized numerical tolerances and module thresholds."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    """Tolerance record shared by every solver and checker.

    Attributes
    ----------
    linalg : float
        Agreement of algebraically equal quantities (dense vs. spectral, symmetry).
    residual : float
        Default mild-residual / inner-iteration tolerance.
    psd_slack : float
        Eigenvalue slack for semidefinite checks: ``lambda_min >= -psd_slack``.
    """

    linalg: float = 1e-12
    residual: float = 1e-8
    psd_slack: float = 1e-10

    def with_overrides(self, **kwargs: float) -> "Tolerances":
        return replace(self, **{k: float(v) for k, v in kwargs.items() if v is not None})


DEFAULT_TOLERANCES = Tolerances()

# Riccati solutions with norm beyond this are declared blown up.
RICCATI_BLOWUP = 1e8
# Step-halving disagreement that fails a Riccati integration.
RICCATI_HALVING_TOL = 1e-6
# Smallest admissible singular value of the shooting matrix.
SHOOTING_SIGMA_MIN = 1e-10
# Fredholm (Nystrom) condition-number ceiling and system-size guard.
FREDHOLM_COND_MAX = 1e12
FREDHOLM_MAX_UNKNOWNS = 20000
# Jacobian values beyond this are flagged as unbounded growth.
GROWTH_FLAG = 1e6

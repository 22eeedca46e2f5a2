"""Truncated spectral generators, their semigroups, and Duhamel quadrature.

A :class:`SpectralOperator` is a normal matrix given by its spectral data in an
orthonormal basis: real eigenvalues (the self-adjoint, strictly negative case)
or 2x2 rotation blocks plus zero modes (the skew-adjoint case). Every
exponential is evaluated mode by mode, which keeps stiff heat-type spectra
exact and cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Mapping

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError

__all__ = [
    "OperatorKind",
    "SpectralOperator",
    "TimeGrid",
    "semigroup_apply",
    "yosida_apply",
    "duhamel_step",
    "duhamel_sweep",
    "duhamel_sweep_backward",
    "dirichlet_laplacian",
    "operator_from_config",
]


class OperatorKind(str, Enum):
    SYMMETRIC = "symmetric"
    SKEW = "skew"


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Generator ``A`` in truncated spectral form.

    Parameters
    ----------
    kind : OperatorKind
    eigenvalues : array_like
        Symmetric kind: the ``n`` eigenvalues, all strictly negative.
        Skew kind: the nonzero rotation frequencies ``omega_j``.
    zero_modes : int
        Skew kind only: number of trailing zero modes.
    damping : array_like, optional
        Skew kind only: nonnegative decay ``d_j`` of each rotation block. Zero for a
        genuine skew operator; nonzero blocks arise from Yosida approximation.
    basis : ndarray, optional
        Orthonormal ``n x n`` matrix whose columns carry the modes. Identity if omitted.
    """

    kind: OperatorKind
    eigenvalues: np.ndarray
    zero_modes: int = 0
    damping: np.ndarray | None = None
    basis: np.ndarray | None = None

    def __post_init__(self) -> None:
        kind = OperatorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        ev = np.atleast_1d(np.asarray(self.eigenvalues, dtype=float)).copy()
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        if kind is OperatorKind.SYMMETRIC:
            if self.zero_modes:
                raise ValueError("zero modes are only allowed for the skew kind")
            if ev.size == 0 or not np.all(ev < 0):
                raise ValueError("symmetric kind needs strictly negative eigenvalues")
            damping = np.zeros(0)
        else:
            if self.zero_modes < 0:
                raise ValueError("zero_modes must be nonnegative")
            if np.any(ev == 0):
                raise ValueError("zero frequencies must be given as zero_modes")
            damping = np.zeros_like(ev) if self.damping is None else np.asarray(self.damping, float)
            if damping.shape != ev.shape or np.any(damping < 0):
                raise ValueError("damping must be nonnegative, one entry per frequency")
            if ev.size == 0 and self.zero_modes == 0:
                raise ValueError("operator has dimension zero")
        damping = damping.copy()
        damping.setflags(write=False)
        object.__setattr__(self, "damping", damping)
        if self.basis is not None:
            V = np.asarray(self.basis, dtype=float)
            n = self.dim
            if V.shape != (n, n) or not np.allclose(V.T @ V, np.eye(n), atol=1e-10):
                raise ValueError("basis must be an orthonormal n x n matrix")
            V = V.copy()
            V.setflags(write=False)
            object.__setattr__(self, "basis", V)

    # -- structure -----------------------------------------------------------------
    @property
    def dim(self) -> int:
        if self.kind is OperatorKind.SYMMETRIC:
            return int(self.eigenvalues.size)
        return 2 * int(self.eigenvalues.size) + int(self.zero_modes)

    @property
    def sigma0(self) -> float:
        if self.kind is OperatorKind.SYMMETRIC:
            return float(-self.eigenvalues.max())
        return 0.0

    @property
    def is_skew(self) -> bool:
        """True for an exactly skew-adjoint operator (no Yosida damping)."""
        return self.kind is OperatorKind.SKEW and not np.any(self.damping)

    @cached_property
    def rates(self) -> np.ndarray:
        """Complex modal exponents: mode ``j`` evolves as ``exp(rates[j] t)``."""
        if self.kind is OperatorKind.SYMMETRIC:
            return self.eigenvalues.astype(complex)
        blocks = -self.damping - 1j * self.eigenvalues
        return np.concatenate([blocks, np.zeros(self.zero_modes, dtype=complex)])

    def adjoint(self) -> "SpectralOperator":
        if self.kind is OperatorKind.SYMMETRIC:
            return self
        return SpectralOperator(
            self.kind, -self.eigenvalues, self.zero_modes, self.damping, self.basis
        )

    # -- modal coordinates -----------------------------------------------------------
    def to_modal(self, x: np.ndarray) -> np.ndarray:
        """Map states ``(..., n)`` to complex modal coordinates ``(..., modes)``."""
        u = np.asarray(x, dtype=float)
        if self.basis is not None:
            u = u @ self.basis
        if self.kind is OperatorKind.SYMMETRIC:
            return u.astype(complex)
        k = self.eigenvalues.size
        w = u[..., 0 : 2 * k : 2] + 1j * u[..., 1 : 2 * k : 2]
        return np.concatenate([w, u[..., 2 * k :].astype(complex)], axis=-1)

    def from_modal(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        if self.kind is OperatorKind.SYMMETRIC:
            u = z.real.copy()
        else:
            k = self.eigenvalues.size
            u = np.empty(z.shape[:-1] + (self.dim,))
            u[..., 0 : 2 * k : 2] = z[..., :k].real
            u[..., 1 : 2 * k : 2] = z[..., :k].imag
            u[..., 2 * k :] = z[..., k:].real
        if self.basis is not None:
            u = u @ self.basis.T
        return u

    # -- dense realizations ----------------------------------------------------------
    def _from_blocks(self, diag: np.ndarray) -> np.ndarray:
        """Assemble the real matrix whose modal action is multiplication by ``diag``."""
        n = self.dim
        if self.kind is OperatorKind.SYMMETRIC:
            M = np.diag(diag.real)
        else:
            M = np.zeros((n, n))
            k = self.eigenvalues.size
            for j in range(k):
                a, b = diag[j].real, diag[j].imag
                # multiplication of w = u1 + i u2 by (a + ib)
                M[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] = [[a, -b], [b, a]]
            for j in range(self.zero_modes):
                M[2 * k + j, 2 * k + j] = diag[k + j].real
        if self.basis is not None:
            M = self.basis @ M @ self.basis.T
        return M

    def dense(self) -> np.ndarray:
        return self._from_blocks(self.rates)

    def expm(self, t: float) -> np.ndarray:
        """Dense ``e^{At}`` assembled from blockwise exponentials."""
        _check_time(self, t)
        return self._from_blocks(np.exp(self.rates * t))

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"SpectralOperator(kind={self.kind.value}, dim={self.dim}, sigma0={self.sigma0:.4g})"


def _check_time(A: SpectralOperator, t: float) -> None:
    if A.kind is OperatorKind.SYMMETRIC and t < 0:
        raise ValueError("backward heat flow is undefined: negative t for a symmetric operator")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k T / N`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.T, self.N + 1)
        t.setflags(write=False)
        return t

    @property
    def midpoints(self) -> np.ndarray:
        return self.nodes[:-1] + 0.5 * self.dt

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.N * factor)


# -- operations --------------------------------------------------------------------


def semigroup_apply(A: SpectralOperator, t: float, x: np.ndarray) -> np.ndarray:
    """Return ``e^{At} x`` (works on stacked states ``(..., n)``)."""
    _check_time(A, t)
    return A.from_modal(A.to_modal(x) * np.exp(A.rates * t))


def yosida_apply(A: SpectralOperator, lam: float) -> SpectralOperator:
    """Yosida approximation ``A_lam = lam A (lam - A)^{-1}`` as a spectral operator.

    Each modal exponent ``z`` maps to ``lam z / (lam - z)``. Rotation blocks of a
    skew operator acquire damping ``lam omega^2 / (lam^2 + omega^2)``, so the result
    is dissipative rather than exactly skew.
    """
    if not lam > 0:
        raise ValueError("Yosida parameter lambda must be positive")
    z = A.rates
    zl = lam * z / (lam - z)
    if A.kind is OperatorKind.SYMMETRIC:
        return SpectralOperator(A.kind, zl.real, basis=A.basis)
    k = A.eigenvalues.size
    return SpectralOperator(
        A.kind, -zl[:k].imag, A.zero_modes, damping=-zl[:k].real, basis=A.basis
    )


def duhamel_step(
    A: SpectralOperator,
    grid: TimeGrid,
    k: int,
    f_k: np.ndarray,
    f_k1: np.ndarray,
    x: np.ndarray,
) -> np.ndarray:
    """One exponential-trapezoid step of ``x' = Ax + f`` from ``t_k`` to ``t_{k+1}``."""
    if not 0 <= k < grid.N:
        raise IndexError("step index out of range")
    dt = grid.dt
    return semigroup_apply(A, dt, np.asarray(x) + 0.5 * dt * np.asarray(f_k)) + 0.5 * dt * np.asarray(f_k1)


def duhamel_sweep(
    A: SpectralOperator, grid: TimeGrid, f: np.ndarray, x0: np.ndarray
) -> np.ndarray:
    """All exponential-trapezoid steps of ``y' = Ay + f``, ``y(0) = x0``.

    Parameters
    ----------
    f : ndarray, shape (N+1, n)
        Forcing sampled at the grid nodes.

    Returns
    -------
    ndarray, shape (N+1, n)
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.N + 1, A.dim):
        raise ValueError(f"forcing must have shape {(grid.N + 1, A.dim)}, got {f.shape}")
    dt = grid.dt
    E = np.exp(A.rates * dt)
    F = A.to_modal(f)
    src = np.empty_like(F)
    src[0] = A.to_modal(np.asarray(x0, dtype=float))
    src[1:] = 0.5 * dt * (E * F[:-1] + F[1:])
    Z = np.empty_like(F)
    for j, e in enumerate(E):
        # z_{k+1} = e z_k + c_k  as a first-order recursive filter
        Z[:, j] = lfilter([1.0], [1.0, -e], src[:, j])
    y = A.from_modal(Z)
    y[0] = x0
    return y


def duhamel_sweep_backward(
    A: SpectralOperator, grid: TimeGrid, f: np.ndarray, terminal: np.ndarray
) -> np.ndarray:
    """Backward sweep of ``psi' = -A^T psi - f``, ``psi(T) = terminal``.

    Mild form ``psi(t) = e^{A^T(T-t)} psi(T) + int_t^T e^{A^T(s-t)} f(s) ds``,
    discretized with the exponential trapezoid rule.
    """
    rev = duhamel_sweep(A.adjoint(), grid, np.asarray(f, dtype=float)[::-1], terminal)
    return rev[::-1].copy()


# -- constructors ------------------------------------------------------------------


def dirichlet_laplacian(n: int) -> SpectralOperator:
    """Second-difference Laplacian on ``n`` interior nodes of (0, 1), Dirichlet ends.

    Eigenvalues ``-(4/h^2) sin^2(k pi h / 2)`` with sine eigenvectors; the operator
    acts on nodal values.
    """
    if n < 1:
        raise ValueError("n must be positive")
    h = 1.0 / (n + 1)
    k = np.arange(1, n + 1)
    ev = -(4.0 / h**2) * np.sin(k * np.pi * h / 2.0) ** 2
    xi = np.arange(1, n + 1) * h
    V = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(xi, k))
    order = np.argsort(ev)[::-1]
    return SpectralOperator(OperatorKind.SYMMETRIC, ev[order], basis=V[:, order])


def operator_from_config(spec: Mapping[str, Any]) -> SpectralOperator:
    """Build an operator from its JSON description.

    Accepted forms: ``{"kind": "symmetric", "eigenvalues": [...]}``,
    ``{"kind": "skew", "frequencies": [...], "zero_modes": m}`` (``eigenvalues`` is
    accepted as an alias of ``frequencies``) and ``{"kind": "laplacian", "n": n}``.
    """
    try:
        kind = spec["kind"]
        if kind == "laplacian":
            return dirichlet_laplacian(int(spec["n"]))
        if kind == "symmetric":
            return SpectralOperator(OperatorKind.SYMMETRIC, spec["eigenvalues"])
        if kind == "skew":
            freqs = spec.get("frequencies", spec.get("eigenvalues", []))
            return SpectralOperator(OperatorKind.SKEW, freqs, int(spec.get("zero_modes", 0)))
    except KeyError as exc:
        raise ConfigError(f"operator: missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"operator: {exc}") from exc
    raise ConfigError(f"operator: unknown kind {kind!r}")

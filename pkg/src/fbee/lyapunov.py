"""Lyapunov operators and well-posedness certificates.

A Lyapunov operator is a symmetric-matrix path ``Pi(t) = [[P, Gamma^T], [Gamma, Pbar]]``
solving ``Pi' + Pi(AA - MM) + (AA - MM)^T Pi + QQ = 0`` with ``AA = diag(A, -A^T)``,
``MM = diag(M, -Mbar^T)`` and ``QQ = [[Q0, Theta^T], [Theta, Qbar0]]``. Blockwise:

* ``P' + P(A - M) + (A - M)^T P + Q0 = 0`` backward from ``P(T)``,
* ``Pbar' = (A - Mbar) Pbar + Pbar (A - Mbar)^T - Qbar0`` forward from ``Pbar(0)``,
* ``Gamma' + Gamma(A - M) - (A - Mbar) Gamma + Theta = 0`` backward from ``Gamma(T)``.

Universally quantified sign conditions are certified on a finite sample of the
box ``|y_i|, |psi_i| <= R``; every certificate records ``R``, the budget and the seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

import numpy as np
import scipy.linalg as sla
from scipy.integrate import simpson

from .errors import HypothesisError
from .generators import AffineGenerator, GeneratorTriple, ball_samples
from .linear import TrajectoryPair
from .spectral import OperatorKind, SpectralOperator, TimeGrid
from .tolerances import DEFAULT_TOLERANCES

__all__ = [
    "Verdict",
    "ClosedFormParams",
    "LyapunovData",
    "LyapunovTriple",
    "LyapunovCertificate",
    "MonotoneCertificate",
    "eta_kappa",
    "f_lemma74",
    "solve_lyapunov_triple",
    "lyapunov_representation_defect",
    "closed_form_pi",
    "closed_form_certificate",
    "energy_identity_residual",
    "check_theorem71",
    "check_definition53",
    "check_cor78_monotone",
    "check_thm75_cor76",
]

_ETA_SMALL = 1e-8


class Verdict(str, Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"
    BOTH = "Both"
    FAIL = "Fail"


# -- scalar helpers ----------------------------------------------------------------


def eta_kappa(kappa):
    """``eta(k) = (e^k - 1) / k`` with ``eta(0) = 1``; works elementwise on arrays."""
    k = np.asarray(kappa, dtype=float)
    small = np.abs(k) < _ETA_SMALL
    safe = np.where(small, 1.0, k)
    out = np.where(small, 1.0 + 0.5 * k, np.expm1(safe) / safe)
    return out if out.ndim else float(out)


def f_lemma74(alpha: float, beta: float, kappa):
    """``f(k) = alpha e^{-k} + beta (1 - e^{-k}) / k``, strictly decreasing on ``k > 0``."""
    k = np.asarray(kappa, dtype=float)
    out = alpha * np.exp(-k) + beta * eta_kappa(-k)
    return out if np.ndim(out) else float(out)


# -- data types --------------------------------------------------------------------


@dataclass(frozen=True)
class ClosedFormParams:
    """Parameters of the scalar-coefficient family ``M = mI``, ``Q0 = q0 I``, ...

    ``mbar`` defaults to ``m``.
    """

    p1: float
    pbar0: float
    q0: float
    qbar0: float
    gamma: float = 0.0
    theta: float = 0.0
    m: float = 0.0
    mbar: float | None = None

    def __post_init__(self) -> None:
        for name in ("p1", "pbar0", "q0", "qbar0"):
            if not getattr(self, name) > 0:
                raise HypothesisError(f"closed-form parameter {name} must be positive")
        if self.mbar is None:
            object.__setattr__(self, "mbar", float(self.m))

    def validate_for(self, A: SpectralOperator) -> None:
        s0 = A.sigma0
        for name in ("m", "mbar"):
            if getattr(self, name) < -s0 - 1e-14:
                raise HypothesisError(f"{name} = {getattr(self, name)} is below -sigma0 = {-s0}")

    def data(self, n: int) -> "LyapunovData":
        """The same operator posed as general Lyapunov data."""
        I = np.eye(n)
        return LyapunovData(
            M=self.m * I, Mbar=self.mbar * I, Q0=self.q0 * I, Qbar0=self.qbar0 * I,
            Theta=self.theta * I, P_T=self.p1 * I, Pbar_0=-self.pbar0 * I, Gamma_T=self.gamma * I,
        )

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in dataclasses.asdict(self).items()}


@dataclass(frozen=True, eq=False)
class LyapunovData:
    """General Lyapunov data.

    Coefficients are ``None`` (zero), scalars (multiples of ``I``), ``(n, n)`` arrays
    or grid samples of shape ``(N+1, n, n)``. ``Pbar_0`` is the (nonpositive)
    initial value of ``Pbar``.
    """

    M: Any = None
    Mbar: Any = None
    Q0: Any = None
    Qbar0: Any = None
    Theta: Any = None
    P_T: Any = None
    Pbar_0: Any = None
    Gamma_T: Any = None

    def sampled(self, name: str, grid: TimeGrid, n: int) -> np.ndarray:
        """Coefficient ``name`` as an ``(N+1, n, n)`` array (a broadcast view when constant)."""
        c = _as_matrix(getattr(self, name), n, allow_series=True)
        if c.ndim == 3:
            if c.shape[0] != grid.N + 1:
                raise ValueError(f"{name} is sampled on {c.shape[0]} nodes, grid has {grid.N + 1}")
            return c
        return np.broadcast_to(c, (grid.N + 1, n, n))

    def is_constant(self, name: str) -> bool:
        v = getattr(self, name)
        return v is None or np.ndim(v) < 3

    def terminal(self, name: str, n: int) -> np.ndarray:
        return _as_matrix(getattr(self, name), n)

    def blocks(self, grid: TimeGrid, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``MM`` and ``QQ`` sampled on the grid, each ``(N+1, 2n, 2n)``."""
        Z = np.zeros((grid.N + 1, n, n))
        M, Mb = self.sampled("M", grid, n), self.sampled("Mbar", grid, n)
        Q0, Qb, Th = (self.sampled(k, grid, n) for k in ("Q0", "Qbar0", "Theta"))
        MM = np.block([[M, Z], [Z, -np.swapaxes(Mb, -1, -2)]])
        QQ = np.block([[Q0, np.swapaxes(Th, -1, -2)], [Th, Qb]])
        return MM, QQ


def _as_matrix(v, n: int, allow_series: bool = False) -> np.ndarray:
    if v is None:
        return np.zeros((n, n))
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(n)
    if a.ndim == 2 and a.shape == (n, n):
        return a
    if allow_series and a.ndim == 3 and a.shape[1:] == (n, n):
        return a
    raise ValueError(f"expected a scalar or an {n}x{n} matrix, got shape {a.shape}")


@dataclass(frozen=True, eq=False)
class LyapunovTriple:
    grid: TimeGrid
    P: np.ndarray
    Pbar: np.ndarray
    Gamma: np.ndarray

    def pi(self) -> np.ndarray:
        return _assemble(self.P, self.Pbar, self.Gamma)


def _sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def _assemble(P: np.ndarray, Pbar: np.ndarray, Gamma: np.ndarray) -> np.ndarray:
    P, Pbar = _sym(P), _sym(Pbar)
    return np.block([[P, np.swapaxes(Gamma, -1, -2)], [Gamma, Pbar]])


@dataclass(frozen=True, eq=False)
class LyapunovCertificate:
    """A Lyapunov operator on a grid, plus the outcome of a certificate check.

    ``margins`` holds the achieved values ``delta_tT``, ``delta_T``,
    ``delta_interior``, ``epsilon``, ``mu``, ``K`` (``None`` when not evaluated).
    ``conditions`` maps display names to achieved margins (nonnegative means the
    condition holds at its required threshold).
    """

    spec: ClosedFormParams | LyapunovData
    grid: TimeGrid
    Pi: np.ndarray
    MM: np.ndarray
    QQ: np.ndarray
    margins: dict = field(default_factory=dict)
    conditions: dict = field(default_factory=dict)
    sample_ball_radius: float | None = None
    sample_budget: int | None = None
    seed: int | None = None
    verdict: Verdict | None = None
    worst: dict | None = None
    check: str | None = None

    def with_result(self, **kw) -> "LyapunovCertificate":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        spec = (self.spec.as_dict() if isinstance(self.spec, ClosedFormParams)
                else {"general": True})
        return {
            "check": self.check,
            "verdict": None if self.verdict is None else self.verdict.value,
            "spec": spec,
            "T": self.grid.T,
            "N": self.grid.N,
            "margins": _jsonable(self.margins),
            "conditions": _jsonable(self.conditions),
            "sample_ball_radius": self.sample_ball_radius,
            "sample_budget": self.sample_budget,
            "seed": self.seed,
            "worst": _jsonable(self.worst),
            "Pi_0": self.Pi[0].tolist(),
            "Pi_T": self.Pi[-1].tolist(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Enum):
        return v.value
    return v


# -- exact Sylvester flow steps ----------------------------------------------------


def _sylvester_step(G: np.ndarray, F: np.ndarray, C: np.ndarray, h: float):
    """Exact flow of ``X' = G X + X F + C`` over ``h``: ``X -> EG X EF + W``."""
    n = G.shape[0]
    scale = (np.linalg.norm(G, 1) + np.linalg.norm(F, 1)) * h
    if scale <= 8.0:
        return _van_loan(G, F, C, h)
    k = math.ceil(scale / 8.0)
    if k <= 64:
        eg, ef, w = _van_loan(G, F, C, h / k)
        EG, EF, W = np.eye(n), np.eye(n), np.zeros_like(C)
        for _ in range(k):
            W = eg @ W @ ef + w
            EG, EF = eg @ EG, EF @ ef
        return EG, EF, W
    # stiff: integral of e^{Gs} C e^{Fs} from the algebraic Sylvester equation
    EG, EF = sla.expm(G * h), sla.expm(F * h)
    W = sla.solve_sylvester(G, F, EG @ C @ EF - C)
    return EG, EF, W


def _van_loan(G, F, C, h):
    n = G.shape[0]
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n], blk[:n, n:], blk[n:, n:] = G, C, -F
    E = sla.expm(blk * h)
    EF = sla.expm(F * h)
    return E[:n, :n], EF, E[:n, n:] @ EF


def _flow(Gs, Fs, Cs, X0, h, constant: bool) -> np.ndarray:
    """March ``X' = G X + X F + C`` over ``len(Cs) - 1`` steps with midpoint-frozen data."""
    steps = len(Cs) - 1
    out = np.empty((steps + 1,) + X0.shape)
    out[0] = X0
    if constant:
        EG, EF, W = _sylvester_step(Gs[0], Fs[0], Cs[0], h)
    for k in range(steps):
        if not constant:
            EG, EF, W = _sylvester_step(
                0.5 * (Gs[k] + Gs[k + 1]), 0.5 * (Fs[k] + Fs[k + 1]), 0.5 * (Cs[k] + Cs[k + 1]), h
            )
        out[k + 1] = EG @ out[k] @ EF + W
    return out


def _commutes(A: np.ndarray, X: np.ndarray) -> bool:
    scale = 1.0 + np.linalg.norm(A, 2) * np.abs(X).max(initial=0.0)
    return bool(np.abs(X @ A - A @ X).max(initial=0.0) <= 1e-10 * scale)


def solve_lyapunov_triple(A: SpectralOperator, spec: LyapunovData, grid: TimeGrid) -> LyapunovTriple:
    """Solve the three Lyapunov flows ``(P, Pbar, Gamma)`` on a grid.

    Each step applies the exact flow of the coefficients frozen at the step
    midpoint, so constant data is integrated exactly. In the symmetric case the
    ``Gamma`` data must commute with ``A``; the ``A`` terms then cancel and the
    reduced equation ``Gamma' - Gamma M + Mbar Gamma + Theta = 0`` is solved, which
    avoids the ill-posed backward heat factor. The skew case uses the full equation.
    """
    n, h = A.dim, grid.dt
    Ad = A.dense()
    M, Mb = spec.sampled("M", grid, n), spec.sampled("Mbar", grid, n)
    Q0, Qb, Th = (spec.sampled(k, grid, n) for k in ("Q0", "Qbar0", "Theta"))
    const = all(spec.is_constant(k) for k in ("M", "Mbar", "Q0", "Qbar0", "Theta"))
    T = lambda X: np.swapaxes(X, -1, -2)  # noqa: E731
    rev = slice(None, None, -1)

    # P backward in tau = T - t: P_tau = (A-M)^T P + P (A-M) + Q0
    AM = Ad - M
    P = _flow(T(AM)[rev], AM[rev], Q0[rev], spec.terminal("P_T", n), h, const)[rev]
    # Pbar forward: Pbar' = (A-Mbar) Pbar + Pbar (A-Mbar)^T - Qbar0
    AMb = Ad - Mb
    Pbar = _flow(AMb, T(AMb), -Qb, spec.terminal("Pbar_0", n), h, const)
    # Gamma backward: Gamma_tau = Gamma (A-M) - (A-Mbar) Gamma + Theta
    G_T = spec.terminal("Gamma_T", n)
    if A.kind is OperatorKind.SYMMETRIC:
        for name, X in (("M", M), ("Mbar", Mb), ("Theta", Th), ("Gamma_T", G_T[None])):
            if not all(_commutes(Ad, Xk) for Xk in (X if not spec.is_constant(name) or name == "Gamma_T" else X[:1])):
                raise HypothesisError(
                    f"symmetric case: {name} must commute with A (Gamma(t) A = A Gamma(t))"
                )
        Gamma = _flow(Mb[rev], -M[rev], Th[rev], G_T, h, const)[rev]
    else:
        Gamma = _flow(-AMb[rev], AM[rev], Th[rev], G_T, h, const)[rev]
    return LyapunovTriple(grid, _sym(P), _sym(Pbar), Gamma)


def lyapunov_representation_defect(
    A: SpectralOperator, spec: LyapunovData, triple: LyapunovTriple, nodes: int = 9
) -> float:
    """Sup defect of ``P``/``Pbar`` in their semigroup representations.

    ``P(t) = e^{A^T(T-t)} P(T) e^{A(T-t)} + int_t^T e^{A^T(s-t)} [Q0 - P M - M^T P] e^{A(s-t)} ds``
    and the forward analogue for ``Pbar``; quadrature is the trapezoid rule on the
    grid, so the defect is ``O(dt^2)``. Evaluated at ``nodes`` evenly spread nodes.
    """
    grid = triple.grid
    n, N = A.dim, grid.N
    M, Mb = spec.sampled("M", grid, n), spec.sampled("Mbar", grid, n)
    Q0, Qb = spec.sampled("Q0", grid, n), spec.sampled("Qbar0", grid, n)
    P, Pbar = triple.P, triple.Pbar
    E = np.stack([A.expm(t) for t in grid.nodes])  # E[j] = e^{A t_j}
    ET = np.swapaxes(E, -1, -2)
    srcP = Q0 - P @ M - np.swapaxes(M, -1, -2) @ P
    srcB = Pbar @ np.swapaxes(Mb, -1, -2) + Mb @ Pbar + Qb
    w = np.full(N + 1, grid.dt)
    worst = 0.0
    for k in np.unique(np.linspace(0, N, min(nodes, N + 1)).round().astype(int)):
        m = N - k
        if m:
            wk = w[: m + 1].copy()
            wk[[0, -1]] *= 0.5
            # s = t_k + t_j, j = 0..m
            integ = np.einsum("j,jab,jbc,jcd->ad", wk, ET[: m + 1], srcP[k:], E[: m + 1])
        else:
            integ = 0.0
        rep = ET[m] @ P[-1] @ E[m] + integ
        worst = max(worst, np.abs(rep - P[k]).max())
        if k:
            wk = w[: k + 1].copy()
            wk[[0, -1]] *= 0.5
            # s = t_j, propagate by t_k - t_j
            integ = np.einsum("j,jab,jbc,jcd->ad", wk, E[k::-1], srcB[: k + 1], ET[k::-1])
        else:
            integ = 0.0
        rep = E[k] @ Pbar[0] @ ET[k] - integ
        worst = max(worst, np.abs(rep - Pbar[k]).max())
    return float(worst)


# -- closed forms ------------------------------------------------------------------


def _real_rates(A: SpectralOperator) -> np.ndarray:
    """Modal real parts: eigenvalues (symmetric) or minus the damping (skew)."""
    return A.rates.real


def _a_function(A: SpectralOperator, values: np.ndarray) -> np.ndarray:
    """Dense matrix acting as multiplication by real ``values`` in each mode."""
    return A._from_blocks(np.asarray(values, dtype=complex))


def _closed_form_modal(A: SpectralOperator, params: ClosedFormParams, T: float, t: np.ndarray):
    re = _real_rates(A)
    a = re - params.m
    ab = re - params.mbar
    tau = (T - t)[:, None]
    tt = t[:, None]
    P = params.p1 * np.exp(2 * a * tau) + params.q0 * tau * eta_kappa(2 * a * tau)
    Pb = -params.pbar0 * np.exp(2 * ab * tt) - params.qbar0 * tt * eta_kappa(2 * ab * tt)
    d = params.mbar - params.m
    tau1 = T - t
    G = params.gamma * np.exp(d * tau1) + params.theta * tau1 * eta_kappa(d * tau1)
    return P, Pb, G


def closed_form_pi(A: SpectralOperator, params: ClosedFormParams, grid: TimeGrid) -> np.ndarray:
    """Closed-form ``Pi`` on the grid for ``M = mI``, ``Mbar = mbar I`` and scalar data.

    Modal exponents are ``alpha = Re(lambda) - m``: the eigenvalue shift in the
    symmetric case and ``-m`` for a skew operator. ``eta`` carries the
    ``alpha -> 0`` limit, so ``m = -sigma0`` is admissible.
    """
    params.validate_for(A)
    n = A.dim
    P, Pb, G = _closed_form_modal(A, params, grid.T, grid.nodes)
    Pm = np.stack([_a_function(A, row) for row in P])
    Pbm = np.stack([_a_function(A, row) for row in Pb])
    Gm = G[:, None, None] * np.eye(n)
    return _assemble(Pm, Pbm, Gm)


def closed_form_certificate(A: SpectralOperator, params: ClosedFormParams, grid: TimeGrid) -> LyapunovCertificate:
    """Unchecked certificate draft carrying the closed-form ``Pi`` and its ``MM``, ``QQ``."""
    Pi = closed_form_pi(A, params, grid)
    MM, QQ = params.data(A.dim).blocks(grid, A.dim)
    return LyapunovCertificate(params, grid, Pi, MM, QQ)


def general_certificate(A: SpectralOperator, spec: LyapunovData, grid: TimeGrid) -> LyapunovCertificate:
    """Unchecked certificate draft from general data via :func:`solve_lyapunov_triple`."""
    Pi = solve_lyapunov_triple(A, spec, grid).pi()
    MM, QQ = spec.blocks(grid, A.dim)
    return LyapunovCertificate(spec, grid, Pi, MM, QQ)


# -- energy identity ---------------------------------------------------------------


def _affine_bb(aff: AffineGenerator, grid: TimeGrid) -> np.ndarray:
    B11, B12, B21, B22 = (aff.sample(k, grid) for k in ("B11", "B12", "B21", "B22"))
    return np.block([[B11, B12], [-B21, -B22]])


def energy_identity_residual(
    A: SpectralOperator, aff: AffineGenerator, traj: TrajectoryPair, cert: LyapunovCertificate
) -> float:
    """``|<Pi(T)z(T), z(T)> - <Pi(0)z(0), z(0)> - int (...) dt|`` along a trajectory.

    The integrand is ``z^T (Pi(BB+MM) + (BB+MM)^T Pi - QQ) z + 2 (Pi (b0, -g0)) . z``
    with ``z = (y, psi)``, integrated by Simpson's rule on the trajectory grid.
    """
    grid = traj.grid
    if cert.Pi.shape[0] != grid.N + 1:
        raise ValueError("certificate and trajectory live on different grids")
    z = np.concatenate([traj.y, traj.psi], axis=1)
    Pi = cert.Pi
    BM = _affine_bb(aff, grid) + cert.MM
    S = Pi @ BM
    S = S + np.swapaxes(S, -1, -2) - cert.QQ
    f = np.concatenate([aff.sample("b0", grid), -aff.sample("g0", grid)], axis=1)
    integrand = np.einsum("ki,kij,kj->k", z, S, z) + 2 * np.einsum("kij,kj,ki->k", Pi, f, z)
    lhs = z[-1] @ Pi[-1] @ z[-1] - z[0] @ Pi[0] @ z[0]
    rhs = simpson(integrand, x=grid.nodes)
    return float(abs(lhs - rhs))


# -- sampled condition evaluation --------------------------------------------------


def _node_subset(grid: TimeGrid, max_nodes: int) -> np.ndarray:
    return np.unique(np.linspace(0, grid.N, min(max_nodes, grid.N + 1)).round().astype(int))


def _jac(fun, t, ys, ps) -> np.ndarray:
    S, n = ys.shape
    return np.broadcast_to(fun(t, ys, ps), (S, n, n))


def _hy(gen: GeneratorTriple, ys: np.ndarray) -> np.ndarray:
    S, n = ys.shape
    return np.broadcast_to(gen.h_y(ys), (S, n, n))


def _lmin(X: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(_sym(X))[..., 0]


def _lmax(X: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(_sym(X))[..., -1]


class _Worst:
    """Tracks the most violated condition (achieved margin minus required)."""

    def __init__(self) -> None:
        self.best: dict | None = None

    def offer(self, name: str, values: np.ndarray, required: float, t=None, ys=None, ps=None):
        values = np.atleast_1d(values)
        i = int(np.argmin(values))
        gap = float(values[i] - required)
        if self.best is None or gap < self.best["gap"]:
            self.best = {"condition": name, "gap": gap, "value": float(values[i]),
                         "t": None if t is None else float(t)}
            if ys is not None and values.size == len(ys):
                self.best["y"] = ys[i].tolist()
                self.best["psi"] = ps[i].tolist()
        return float(values[i])


def _t_block(Pi_T: np.ndarray, hy: np.ndarray, rho: float = 1.0) -> np.ndarray:
    """``[I; rho h_y]^T Pi(T) [I; rho h_y]`` for a batch of ``h_y``."""
    n = hy.shape[-1]
    S = hy.shape[0]
    L = np.concatenate([np.broadcast_to(np.eye(n), (S, n, n)), rho * hy], axis=1)
    return np.swapaxes(L, -1, -2) @ Pi_T @ L


def check_theorem71(
    A: SpectralOperator,
    gen: GeneratorTriple,
    cert: LyapunovCertificate,
    ball_radius: float = 1.0,
    sample_budget: int = 256,
    *,
    delta: float = 1e-8,
    seed: int = 0,
    max_time_nodes: int = 33,
) -> LyapunovCertificate:
    """Sufficient conditions for a Lyapunov operator of both types.

    Achieved margins (the certificate holds iff each is ``>= delta``):

    ``delta_tT``
        ``min(lambda_min(-Pbar(t)), lambda_min(P(T)))``.
    ``delta_T``
        ``lambda_min`` of ``[I; h_y]^T Pi(T) [I; h_y]`` over sampled ``y``.
    ``delta_interior``
        ``-lambda_max`` of ``Pi MM + MM^T Pi - QQ`` and of
        ``Pi BB + BB^T Pi + Pi MM + MM^T Pi - QQ``, over nodes and samples.

    The split form (``Pi MM + MM^T Pi - QQ <= -delta - eps`` and
    ``Pi BB + BB^T Pi <= eps``) is reported as ``epsilon`` and ``delta_split``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = gen.dim
    ys, ps = ball_samples(n, ball_radius, sample_budget, seed)
    Pi, MM, QQ = cert.Pi, cert.MM, cert.QQ
    grid = cert.grid
    worst = _Worst()
    idx = _node_subset(grid, max_time_nodes)

    v_pbar = worst.offer("t,T: -Pbar(t) >= delta", _lmin(-Pi[idx, n:, n:]), delta)
    v_pT = worst.offer("t,T: P(T) >= delta", _lmin(Pi[-1, :n, :n]), delta)
    delta_tT = min(v_pbar, v_pT)

    hy = _hy(gen, ys)
    delta_T = worst.offer("T: [I; h_y]^T Pi(T) [I; h_y] >= delta", _lmin(_t_block(Pi[-1], hy)), delta,
                          grid.T, ys, ps)

    base_margin, full_margin, eps = np.inf, np.inf, -np.inf
    for k in idx:
        t = grid.nodes[k]
        base = Pi[k] @ MM[k]
        base = base + base.T - QQ[k]
        bm = -float(_lmax(base))
        base_margin = min(base_margin, bm)
        worst.offer("interior: Pi MM + MM^T Pi - QQ <= -delta", np.array([bm]), delta, t)
        BB = gen.bb(t, ys, ps)
        BB = np.broadcast_to(BB, (len(ys), 2 * n, 2 * n))
        PB = Pi[k] @ BB
        PB = PB + np.swapaxes(PB, -1, -2)
        eps = max(eps, float(_lmax(PB).max()))
        full = -_lmax(PB + base)
        full_margin = min(full_margin, worst.offer(
            "interior: Pi BB + BB^T Pi + Pi MM + MM^T Pi - QQ <= -delta", full, delta, t, ys, ps))
    delta_interior = min(base_margin, full_margin)
    eps = max(eps, 0.0)
    margins = {
        "delta": delta,
        "delta_tT": delta_tT,
        "delta_T": delta_T,
        "delta_interior": delta_interior,
        "epsilon": eps,
        "delta_split": base_margin - eps,
        "mu": None,
        "K": None,
    }
    conditions = {
        "t,T": delta_tT - delta,
        "T": delta_T - delta,
        "interior": delta_interior - delta,
        "cor72_split": base_margin - eps - delta,
    }
    ok = min(delta_tT, delta_T, delta_interior) >= delta
    return cert.with_result(
        margins=margins, conditions=conditions, sample_ball_radius=float(ball_radius),
        sample_budget=int(sample_budget), seed=int(seed),
        verdict=Verdict.BOTH if ok else Verdict.FAIL,
        worst=None if ok else worst.best, check="theorem71",
    )


def check_definition53(
    A: SpectralOperator,
    gen: GeneratorTriple,
    cert: LyapunovCertificate,
    mu: float,
    K: float,
    ball_radius: float = 1.0,
    sample_budget: int = 256,
    *,
    seed: int = 0,
    max_time_nodes: int = 17,
    tol=DEFAULT_TOLERANCES,
) -> LyapunovCertificate:
    """Raw type (I)/(II) conditions for user-supplied constants ``mu, K > 0``.

    The interior condition is affine in ``rho`` and is checked at ``rho in {0, 1}``.
    The terminal one is quadratic in ``rho`` with leading term ``h_y^T Pbar(T) h_y``;
    it is checked at ``rho in {0, 1}`` and, when ``Pbar(T)`` is not negative
    semidefinite, on 11 evenly spaced values.
    """
    if not (mu > 0 and K > 0):
        raise ValueError("mu and K must be positive")
    n = gen.dim
    slack = tol.psd_slack
    ys, ps = ball_samples(n, ball_radius, sample_budget, seed)
    Pi, MM, QQ, grid = cert.Pi, cert.MM, cert.QQ, cert.grid
    worst = {"I": _Worst(), "II": _Worst()}
    I2, Z = np.eye(n), np.zeros((n, n))

    init = -float(_lmax(Pi[0] + np.block([[-K * I2, Z], [Z, Z]])))
    for w in worst.values():
        w.offer("Pi(0) + diag(-K, 0) <= 0", np.array([init]), -slack, 0.0)

    hy = _hy(gen, ys)
    rhos = [0.0, 1.0] if _lmax(Pi[-1, n:, n:]) <= slack else list(np.linspace(0, 1, 11))
    hth = np.swapaxes(hy, -1, -2) @ hy
    term = {"I": np.inf, "II": np.inf}
    for rho in rhos:
        Lt = np.concatenate([np.concatenate([np.broadcast_to(I2, hy.shape), rho * np.swapaxes(hy, -1, -2)], -1),
                             np.concatenate([np.zeros_like(hy), np.broadcast_to(I2, hy.shape)], -1)], -2)
        core = Lt @ Pi[-1] @ np.swapaxes(Lt, -1, -2)
        addI = np.zeros_like(core)
        addI[:, :n, :n] = -mu * hth
        addI[:, n:, n:] = K * I2
        addII = np.zeros_like(core)
        addII[:, n:, n:] = K * I2
        for kind, add in (("I", addI), ("II", addII)):
            term[kind] = min(term[kind], worst[kind].offer(
                f"terminal block >= 0 (rho={rho:g})", _lmin(core + add), -slack, grid.T, ys, ps))

    inter = {"I": np.inf, "II": np.inf}
    for k in _node_subset(grid, max_time_nodes):
        t = grid.nodes[k]
        BB = np.broadcast_to(gen.bb(t, ys, ps), (len(ys), 2 * n, 2 * n))
        gy = _jac(gen.g_y, t, ys, ps)
        bp = _jac(gen.b_psi, t, ys, ps)
        base = Pi[k] @ MM[k]
        base = base + base.T - QQ[k]
        PB = Pi[k] @ BB
        PB = PB + np.swapaxes(PB, -1, -2)
        for rho in (0.0, 1.0):
            H = rho * PB + base
            for kind in ("I", "II"):
                X = H.copy()
                if kind == "I":
                    X[:, :n, :n] += mu * np.swapaxes(gy, -1, -2) @ gy
                else:
                    X[:, n:, n:] += mu * np.swapaxes(bp, -1, -2) @ bp
                big = np.block([[X, np.broadcast_to(Pi[k], X.shape)],
                                [np.broadcast_to(Pi[k], X.shape), np.broadcast_to(-K * np.eye(2 * n), X.shape)]])
                inter[kind] = min(inter[kind], worst[kind].offer(
                    f"interior block <= 0 (rho={rho:g})", -_lmax(big), -slack, t, ys, ps))

    ok = {k: min(init, term[k], inter[k]) >= -slack for k in ("I", "II")}
    verdict = (Verdict.BOTH if ok["I"] and ok["II"] else Verdict.TYPE_I if ok["I"]
               else Verdict.TYPE_II if ok["II"] else Verdict.FAIL)
    margins = {"delta_tT": None, "delta_T": None, "delta_interior": None, "epsilon": None,
               "mu": float(mu), "K": float(K)}
    conditions = {"initial": init, "terminal_I": term["I"], "terminal_II": term["II"],
                  "interior_I": inter["I"], "interior_II": inter["II"]}
    bad = None if verdict is Verdict.BOTH else (worst["I"].best if not ok["I"] else worst["II"].best)
    return cert.with_result(margins=margins, conditions=conditions,
                            sample_ball_radius=float(ball_radius), sample_budget=int(sample_budget),
                            seed=int(seed), verdict=verdict, worst=bad, check="definition53")


# -- corollary checks --------------------------------------------------------------


@dataclass(frozen=True)
class MonotoneCertificate:
    """Outcome of the uniform-monotonicity test.

    ``delta`` is ``-lambda_max`` of the monotonicity block over the samples (the
    largest certified constant); ``holds`` requires ``delta > 0`` and
    ``h_y + h_y^T >= 0``. ``semidefinite`` is the weaker statement ``delta >= -slack``.
    """

    holds: bool
    delta: float
    hy_margin: float
    semidefinite: bool
    radius: float
    budget: int
    seed: int
    worst: dict | None = None

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))


def _monotone_block(gen: GeneratorTriple, t, ys, ps) -> np.ndarray:
    by, bp = _jac(gen.b_y, t, ys, ps), _jac(gen.b_psi, t, ys, ps)
    gy, gp = _jac(gen.g_y, t, ys, ps), _jac(gen.g_psi, t, ys, ps)
    T = lambda X: np.swapaxes(X, -1, -2)  # noqa: E731
    return np.block([[-(gy + T(gy)), T(by) - gp], [by - T(gp), bp + T(bp)]])


def check_cor78_monotone(
    gen: GeneratorTriple,
    ball_radius: float = 1.0,
    sample_budget: int = 256,
    *,
    grid: TimeGrid | None = None,
    seed: int = 0,
    max_time_nodes: int = 17,
    tol=DEFAULT_TOLERANCES,
) -> MonotoneCertificate:
    """Uniform monotonicity of ``(y, psi) -> (g, -b)`` and ``h_y + h_y^T >= 0``.

    The block ``[[-(g_y + g_y^T), b_y^T - g_psi], [b_y - g_psi^T, b_psi + b_psi^T]]``
    must be ``<= -delta``. Time-dependent generators need ``grid``.
    """
    ys, ps = ball_samples(gen.dim, ball_radius, sample_budget, seed)
    if gen.time_dependent:
        if grid is None:
            raise ValueError("time-dependent generator: pass the grid")
        times = grid.nodes[_node_subset(grid, max_time_nodes)]
    else:
        times = [0.0]
    worst = _Worst()
    delta = np.inf
    for t in times:
        delta = min(delta, worst.offer("monotone block <= -delta", -_lmax(_monotone_block(gen, t, ys, ps)),
                                       0.0, t, ys, ps))
    hy = _hy(gen, ys)
    hym = worst.offer("h_y + h_y^T >= 0", _lmin(hy + np.swapaxes(hy, -1, -2)), -tol.psd_slack,
                      None, ys, ps)
    holds = delta > tol.psd_slack and hym >= -tol.psd_slack
    semidef = delta >= -tol.psd_slack and hym >= -tol.psd_slack
    return MonotoneCertificate(bool(holds), float(delta), float(hym), bool(semidef),
                               float(ball_radius), int(sample_budget), int(seed),
                               None if holds else worst.best)


_WHICH = ("thm75", "cor76", "cor77", "cor79i", "cor79ii", "cor79iii", "monotone_block")


def _exp_weight(A: SpectralOperator, shift: float, s: float) -> np.ndarray:
    """``e^{2(A + shift) s}`` in the real-part sense (identity factor for skew modes)."""
    return _a_function(A, np.exp(2 * (_real_rates(A) + shift) * s))


_THM75_LABELS = ("terminal", "interior_2x2", "PiB+BPi")


def _thm75_conditions(A, gen, params: ClosedFormParams, grid, ys, ps, idx, worst, delta, delta_bar, epsilon,
                      labels):
    """Shared core of the ``thm75``/``cor76`` checks with ``mbar = m``."""
    n = A.dim
    s0 = A.sigma0
    m = params.m
    s = s0 + m
    T = grid.T
    Pi = closed_form_pi(A, dataclasses.replace(params, mbar=m), grid)
    hy = _hy(gen, ys)
    hth = np.swapaxes(hy, -1, -2) @ hy
    cT = params.pbar0 * np.exp(-2 * s * T) + params.qbar0 * T * eta_kappa(-2 * s * T)
    lhs = params.p1 * np.eye(n) + params.gamma * (hy + np.swapaxes(hy, -1, -2)) - cT * hth
    c1 = worst.offer(labels[0], _lmin(lhs), delta, T, ys, ps)

    tau, t = T - grid.nodes[idx], grid.nodes[idx]
    a = (params.q0 * (1 - 2 * m * tau * eta_kappa(-2 * s * tau))
         - 2 * m * params.p1 * np.exp(-2 * s * tau))
    b = (params.qbar0 * (1 - 2 * m * t * eta_kappa(-2 * s * t))
         - 2 * m * params.pbar0 * np.exp(-2 * s * t))
    th = params.theta
    # smallest eigenvalue of [[a, th], [th, b]]
    lam2 = 0.5 * (a + b) - np.sqrt(0.25 * (a - b) ** 2 + th**2)
    c2 = float(lam2.min())

    pb = -np.inf
    for k in idx:
        BB = np.broadcast_to(gen.bb(grid.nodes[k], ys, ps), (len(ys), 2 * n, 2 * n))
        X = Pi[k] @ BB
        pb = max(pb, float(_lmax(X + np.swapaxes(X, -1, -2)).max()))
        worst.offer(labels[2], -_lmax(X + np.swapaxes(X, -1, -2)), -(epsilon if epsilon is not None else np.inf),
                    grid.nodes[k], ys, ps)
    eps = max(pb, 0.0) if epsilon is None else float(epsilon)
    worst.offer(labels[1], np.array([c2]), delta_bar + eps)
    conds = {labels[0]: c1 - delta, labels[1]: c2 - delta_bar - eps, labels[2]: eps - pb}
    margins = {"delta_tT": min(float(_lmin(-Pi[:, n:, n:]).min()), float(_lmin(Pi[-1, :n, :n]))),
               "delta_T": c1, "delta_interior": c2 - eps, "epsilon": eps, "mu": None, "K": None}
    return Pi, conds, margins


def check_thm75_cor76(
    A: SpectralOperator,
    gen: GeneratorTriple,
    params: ClosedFormParams | None,
    grid: TimeGrid,
    ball_radius: float = 1.0,
    *,
    which: str = "thm75",
    delta: float = 1e-8,
    delta_bar: float = 1e-8,
    epsilon: float | None = None,
    sample_budget: int = 256,
    seed: int = 0,
    max_time_nodes: int = 33,
    tol=DEFAULT_TOLERANCES,
) -> LyapunovCertificate:
    """Closed-form sufficient conditions for well-posedness.

    ``which`` selects the display set:

    ``thm75``
        Terminal bound, 2x2 interior bound ``>= delta_bar + eps`` and
        ``Pi BB + BB^T Pi <= eps`` with ``mbar = m``.
    ``cor76``
        The same with ``m = -sigma0``.
    ``cor77``
        Structural sign conditions on the Jacobian blocks and ``h_y + h_y^T >= 0``; then ``gamma``
        is chosen from the Schur-complement bound with ``theta = 0`` and ``cor76`` is
        run at the constructed parameters.
    ``cor79i`` / ``cor79ii`` / ``cor79iii``
        The three weighted sign conditions on ``BB``.
    ``monotone_block``
        The semidefinite monotonicity block (parabolic examples).

    ``epsilon=None`` uses the achieved ``max lambda_max(Pi BB + BB^T Pi)`` (floored at 0).
    Condition values in ``conditions`` are nonnegative iff satisfied.
    """
    if which not in _WHICH:
        raise ValueError(f"which must be one of {_WHICH}")
    n = gen.dim
    ys, ps = ball_samples(n, ball_radius, sample_budget, seed)
    idx = _node_subset(grid, max_time_nodes)
    worst = _Worst()
    slack = tol.psd_slack
    extra: dict = {}
    if params is None:
        params = ClosedFormParams(1.0, 1.0, 1.0, 1.0)

    if which in ("thm75", "cor76"):
        p = params if which == "thm75" else dataclasses.replace(params, m=-A.sigma0, mbar=-A.sigma0)
        labels = _THM75_LABELS
        Pi, conds, margins = _thm75_conditions(A, gen, p, grid, ys, ps, idx, worst, delta, delta_bar,
                                               epsilon, labels)
        params = p
    elif which == "cor77":
        Pi, conds, margins, params, extra = _cor77(A, gen, params, grid, ys, ps, idx, worst, delta,
                                                   delta_bar, slack)
    elif which == "monotone_block":
        mc = check_cor78_monotone(gen, ball_radius, sample_budget, grid=grid, seed=seed, tol=tol)
        conds = {"monotone_block<=0": mc.delta + slack, "h_y+h_y^T>=0": mc.hy_margin + slack}
        margins = {"delta_tT": None, "delta_T": None, "delta_interior": mc.delta, "epsilon": None,
                   "mu": None, "K": None}
        Pi = closed_form_pi(A, params, grid)
        if mc.worst:
            worst.best = dict(mc.worst, gap=min(conds.values()))
    else:
        Pi, conds, margins = _cor79(A, gen, params, grid, ys, ps, idx, worst, delta, which, slack)

    MM, QQ = params.data(n).blocks(grid, n)
    ok = all(v >= 0 for v in conds.values())
    cert = LyapunovCertificate(params, grid, Pi, MM, QQ)
    return cert.with_result(
        margins=dict(margins, **extra), conditions=conds, sample_ball_radius=float(ball_radius),
        sample_budget=int(sample_budget), seed=int(seed),
        verdict=Verdict.BOTH if ok else Verdict.FAIL, worst=None if ok else worst.best, check=which,
    )


def _cor79(A, gen, params, grid, ys, ps, idx, worst, delta, which, slack):
    n = A.dim
    s0 = A.sigma0
    T = grid.T
    I = np.eye(n)
    hy = _hy(gen, ys)
    hyT = np.swapaxes(hy, -1, -2)
    term = {"cor79i": I + hy + hyT, "cor79ii": I - hyT @ hy, "cor79iii": I + hy + hyT - hyT @ hy}[which]
    c_term = worst.offer(f"{which}: terminal >= delta", _lmin(term), delta, T, ys, ps)
    c_int = np.inf
    for k in idx:
        t = grid.nodes[k]
        E1, E2 = _exp_weight(A, s0, T - t), _exp_weight(A, s0, t)
        W = {"cor79i": np.block([[E1, I], [I, 0 * I]]),
             "cor79ii": np.block([[E1, 0 * I], [0 * I, E2]]),
             "cor79iii": np.block([[E1, I], [I, E2]])}[which]
        BB = np.broadcast_to(gen.bb(t, ys, ps), (len(ys), 2 * n, 2 * n))
        X = W @ BB
        c_int = min(c_int, worst.offer(f"{which}: W BB + BB^T W <= 0", -_lmax(X + np.swapaxes(X, -1, -2)),
                                       -slack, t, ys, ps))
    conds = {f"{which}_terminal": c_term - delta, f"{which}_interior": c_int + slack}
    margins = {"delta_tT": None, "delta_T": c_term, "delta_interior": c_int, "epsilon": None,
               "mu": None, "K": None}
    return closed_form_pi(A, params, grid), conds, margins


def _cor77(A, gen, params, grid, ys, ps, idx, worst, delta, delta_bar, slack):
    n = A.dim
    s0 = A.sigma0
    T = grid.T
    hy = _hy(gen, ys)
    c_hy = worst.offer("hy>0", _lmin(hy + np.swapaxes(hy, -1, -2)), -slack, T, ys, ps)
    c_sym = c_b12 = c_b21 = c_749 = np.inf
    inv_norm = 0.0
    # structural conditions and the data needed for the Schur-complement bound
    per_node = []
    for k in idx:
        t = grid.nodes[k]
        B11, B12 = _jac(gen.b_y, t, ys, ps), _jac(gen.b_psi, t, ys, ps)
        B21, B22 = _jac(gen.g_y, t, ys, ps), _jac(gen.g_psi, t, ys, ps)
        tr = lambda X: np.swapaxes(X, -1, -2)  # noqa: E731
        c_sym = min(c_sym, -float(np.abs(B11 - tr(B22)).max()))
        c_b12 = min(c_b12, worst.offer("B12 + B12^T <= 0", -_lmax(B12 + tr(B12)), -slack, t, ys, ps))
        c_b21 = min(c_b21, worst.offer("B21 + B21^T >= delta", _lmin(B21 + tr(B21)), delta, t, ys, ps))
        a_t = _real_rates(A) + s0
        pbar_t = _a_function(A, params.pbar0 * np.exp(2 * a_t * t) + params.qbar0 * t * eta_kappa(2 * a_t * t))
        p1_t = _a_function(A, params.p1 * np.exp(2 * a_t * (T - t))
                           + params.q0 * (T - t) * eta_kappa(2 * a_t * (T - t)))
        X = pbar_t @ B22
        c_749 = min(c_749, worst.offer("pbar0(t) B22 + B22^T pbar0(t) <= 0",
                                       -_lmax(X + tr(X)), -slack, t, ys, ps))
        per_node.append((p1_t, pbar_t, B11, B12, B21))
    conds = {"hy>0": c_hy + slack, "B11=B22^T": c_sym + 1e-10, "B12+B12^T<=0": c_b12 + slack,
             "B21+B21^T>=delta": c_b21 - delta, "pbar0_B22<=0": c_749 + slack}
    structural = all(v >= 0 for v in conds.values())
    # eps from the interior 2x2 bound with theta = 0, then gamma_min from the Schur chain
    p0 = dataclasses.replace(params, theta=0.0, m=-s0, mbar=-s0)
    tt = grid.nodes[idx]
    d42 = np.minimum(p0.q0 * (1 + 2 * s0 * (T - tt)) + 2 * s0 * p0.p1,
                     p0.qbar0 * (1 + 2 * s0 * tt) + 2 * s0 * p0.pbar0).min()
    eps = 0.5 * float(d42)
    gamma_min = np.inf
    if structural and c_b21 > 0:
        gamma_min = 0.0
        for p1_t, pbar_t, B11, B12, B21 in per_node:
            Sinv = np.linalg.inv(_sym(B21 + np.swapaxes(B21, -1, -2)))
            inv_norm = np.linalg.norm(Sinv, 2, axis=(-2, -1))
            D = p1_t @ B11
            D = D + np.swapaxes(D, -1, -2)
            shift = np.linalg.norm(Sinv @ D, 2, axis=(-2, -1))
            off = np.linalg.norm(np.swapaxes(B12, -1, -2) @ p1_t + pbar_t @ B21, 2, axis=(-2, -1))
            gamma_min = max(gamma_min, float((shift + off**2 * inv_norm / eps).max()))
    extra = {"gamma_min": gamma_min, "epsilon_cor77": eps}
    if np.isfinite(gamma_min):
        p_star = dataclasses.replace(p0, gamma=1.5 * gamma_min + 1.0)
        labels = _THM75_LABELS
        Pi, c76, margins = _thm75_conditions(A, gen, p_star, grid, ys, ps, idx, worst, delta, delta_bar,
                                             eps, labels)
        conds.update(c76)
        params = p_star
    else:
        Pi = closed_form_pi(A, p0, grid)
        margins = {"delta_tT": None, "delta_T": None, "delta_interior": None, "epsilon": eps,
                   "mu": None, "K": None}
        conds["gamma_min_finite"] = -1.0
        params = p0
    return Pi, conds, margins, params, extra

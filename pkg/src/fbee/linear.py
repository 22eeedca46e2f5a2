"""Linear FBEE solvers: Fredholm (Nystrom), shooting, Riccati decoupling.

All solvers return a :class:`TrajectoryPair` whose ``mild_residual`` is measured
the same way: the A-only exponential trapezoid rule applied to ``(b, g, h)``
evaluated along the computed trajectory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline

from .errors import (
    FredholmSingularError,
    HypothesisError,
    RiccatiAccuracyError,
    RiccatiBlowUpError,
    ShootingSingularError,
)
from .generators import AffineGenerator, GeneratorTriple
from .spectral import (
    OperatorKind,
    SpectralOperator,
    TimeGrid,
    duhamel_sweep,
    duhamel_sweep_backward,
)
from .tolerances import (
    DEFAULT_TOLERANCES,
    FREDHOLM_COND_MAX,
    FREDHOLM_MAX_UNKNOWNS,
    RICCATI_BLOWUP,
    RICCATI_HALVING_TOL,
    SHOOTING_SIGMA_MIN,
)

__all__ = [
    "Forcing",
    "TrajectoryPair",
    "RiccatiSolution",
    "MonotoneIterationResult",
    "DecouplingReport",
    "mild_residual",
    "evolution_operator",
    "solve_fredholm",
    "solve_shooting_skew",
    "integrate_riccati",
    "riccati_monotone_iteration",
    "solve_via_decoupling",
    "verify_decoupling_field",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Forcing:
    """Additive forcing ``(b0, g0, h0)``; ``b0``/``g0`` constant vectors or callables of t."""

    b0: Any = None
    g0: Any = None
    h0: Any = None

    def sample(self, grid: TimeGrid, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        def series(c):
            if c is None:
                return np.zeros((grid.N + 1, n))
            if callable(c):
                return np.array([np.asarray(c(t), float).reshape(n) for t in grid.nodes])
            c = np.asarray(c, float)
            return np.broadcast_to(c.reshape(-1, n) if c.ndim == 2 else c, (grid.N + 1, n)).copy()

        h0 = np.zeros(n) if self.h0 is None else np.asarray(self.h0, float).reshape(n)
        return series(self.b0), series(self.g0), h0


@dataclass(frozen=True, eq=False)
class TrajectoryPair:
    """Discretized mild solution on a grid."""

    grid: TimeGrid
    y: np.ndarray
    psi: np.ndarray
    mild_residual: float
    solver_tag: str
    info: dict = field(default_factory=dict)

    def distance(self, other: "TrajectoryPair") -> float:
        return float(max(np.abs(self.y - other.y).max(), np.abs(self.psi - other.psi).max()))


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Decoupling pair: ``psi(t) = P(t) y(t) + p(t)``."""

    grid: TimeGrid
    P: np.ndarray
    p: np.ndarray
    info: dict = field(default_factory=dict)

    def field_at(self, k: int, y: np.ndarray) -> np.ndarray:
        return np.asarray(y) @ self.P[k].T + self.p[k]


# -- residual ----------------------------------------------------------------------


def mild_residual(
    A: SpectralOperator,
    gen: GeneratorTriple,
    grid: TimeGrid,
    x: np.ndarray,
    y: np.ndarray,
    psi: np.ndarray,
    rho: float = 1.0,
    forcing: Forcing | None = None,
) -> float:
    """Sup-norm defect of a trajectory in the discretized mild equations.

    The homotopy family ``rho (b, g, h) + (b0, g0, h0)`` is used; ``rho = 1`` with no
    forcing is the original problem.
    """
    n = A.dim
    b0, g0, h0 = (forcing or Forcing()).sample(grid, n)
    b, g = gen.along(grid, y, psi)
    Y = duhamel_sweep(A, grid, rho * b + b0, x)
    Psi = duhamel_sweep_backward(A, grid, rho * g + g0, rho * gen.h(y[-1]) + h0)
    return float(max(np.abs(Y - y).max(), np.abs(Psi - psi).max()))


# -- propagators -------------------------------------------------------------------


def _midpoint_propagators(G0: np.ndarray, coef: Callable[[float], np.ndarray] | np.ndarray,
                          grid: TimeGrid) -> np.ndarray:
    """Per-step ``expm((G0 + C(t_{k+1/2})) dt)`` with shape (N, m, m)."""
    dt = grid.dt
    if not callable(coef):
        E = sla.expm((G0 + np.asarray(coef, float)) * dt)
        return np.broadcast_to(E, (grid.N,) + E.shape)
    return np.stack([sla.expm((G0 + coef(t)) * dt) for t in grid.midpoints])


def _coef_fn(aff: AffineGenerator, name: str):
    c = getattr(aff, name)
    return c if callable(c) else np.asarray(c, float)


def evolution_operator(
    A: SpectralOperator, Bdiag, grid: TimeGrid, s_index: int, t_index: int
) -> np.ndarray:
    """Evolution operator ``Phi(t_s, t_t)`` generated by ``A + B(.)``.

    Each step uses the exponential of the generator frozen at the step midpoint
    (second order; exact for constant ``B``).
    """
    if s_index < t_index:
        raise ValueError("s_index must be >= t_index")
    if not (0 <= t_index and s_index <= grid.N):
        raise IndexError("grid index out of range")
    steps = _midpoint_propagators(A.dense(), Bdiag, grid)
    Phi = np.eye(A.dim)
    for k in range(t_index, s_index):
        Phi = steps[k] @ Phi
    return Phi


# -- Fredholm ----------------------------------------------------------------------


def _nystrom_system(A: SpectralOperator, aff: AffineGenerator, x: np.ndarray, grid: TimeGrid):
    n, N, dt = A.dim, grid.N, grid.dt
    m = n * (N + 1)
    Ad = A.dense()
    E11 = _midpoint_propagators(Ad, _coef_fn(aff, "B11"), grid)
    E22 = _midpoint_propagators(Ad.T, _coef_fn(aff, "B22"), grid)
    B12 = aff.sample("B12", grid)
    B21 = aff.sample("B21", grid)
    b0 = aff.sample("b0", grid)
    g0 = aff.sample("g0", grid)

    # forward map y_k = Y[k] @ Psi + y0[k]
    Y = np.zeros((N + 1, n, m))
    y0 = np.zeros((N + 1, n))
    y0[0] = x
    for k in range(N):
        Y[k + 1] = E11[k] @ Y[k]
        Y[k + 1][:, k * n : (k + 1) * n] += 0.5 * dt * E11[k] @ B12[k]
        Y[k + 1][:, (k + 1) * n : (k + 2) * n] += 0.5 * dt * B12[k + 1]
        y0[k + 1] = E11[k] @ (y0[k] + 0.5 * dt * b0[k]) + 0.5 * dt * b0[k + 1]

    # backward map psi_k = K[k] @ Psi + c[k]
    K = np.empty((N + 1, n, m))
    c = np.empty((N + 1, n))
    K[N] = aff.H @ Y[N]
    c[N] = aff.H @ y0[N] + aff.h0
    for k in range(N - 1, -1, -1):
        K[k] = E22[k] @ (K[k + 1] + 0.5 * dt * B21[k + 1] @ Y[k + 1]) + 0.5 * dt * B21[k] @ Y[k]
        c[k] = (E22[k] @ (c[k + 1] + 0.5 * dt * (B21[k + 1] @ y0[k + 1] + g0[k + 1]))
                + 0.5 * dt * (B21[k] @ y0[k] + g0[k]))
    return np.eye(m) - K.reshape(m, m), c.reshape(m), Y, y0


def _lu_condition(M: np.ndarray):
    lu, piv = sla.lu_factor(M, check_finite=False)
    anorm = np.linalg.norm(M, 1)
    rcond, _ = sla.lapack.dgecon(lu, anorm, norm="1")
    return (lu, piv), (np.inf if rcond == 0 else 1.0 / rcond)


def solve_fredholm(
    A: SpectralOperator,
    aff: AffineGenerator,
    x: np.ndarray,
    grid: TimeGrid,
    divergence_check: bool = True,
) -> TrajectoryPair:
    """Solve the linear FBEE through the second-kind Fredholm equation for ``psi``.

    The Nystrom matrix is assembled by pushing identity columns through the
    discrete forward and backward propagators, then solved densely.

    Raises
    ------
    FredholmSingularError
        Condition number above 1e12, or above 1e6 and growing like N^2 under
        grid refinement (the discrete signature of a singular continuum operator).
    """
    n = A.dim
    x = np.asarray(x, float).reshape(n)
    m = n * (grid.N + 1)
    if m > FREDHOLM_MAX_UNKNOWNS:
        raise HypothesisError(f"Fredholm system too large: n(N+1) = {m} > {FREDHOLM_MAX_UNKNOWNS}")
    M, c, Y, y0 = _nystrom_system(A, aff, x, grid)
    lu, cond = _lu_condition(M)
    if cond > FREDHOLM_COND_MAX:
        raise FredholmSingularError(
            f"Fredholm operator numerically non-invertible (condition {cond:.3e})", cond)
    if divergence_check and cond > 1e6 and grid.N >= 8:
        coarse = TimeGrid(grid.T, grid.N // 2)
        _, cond_c = _lu_condition(_nystrom_system(A, aff, x, coarse)[0])
        if cond / cond_c > 3.0:
            raise FredholmSingularError(
                "Fredholm operator numerically non-invertible: condition "
                f"{cond:.3e} grows with N (was {cond_c:.3e} at N={coarse.N})", cond)
    Psi = sla.lu_solve(lu, c, check_finite=False)
    y = Y @ Psi + y0
    psi = Psi.reshape(grid.N + 1, n)
    res = mild_residual(A, aff.to_triple(grid=grid), grid, x, y, psi)
    return TrajectoryPair(grid, y, psi, res, "fredholm", {"condition": float(cond)})


# -- shooting ----------------------------------------------------------------------


def solve_shooting_skew(
    A: SpectralOperator, aff: AffineGenerator, x: np.ndarray, grid: TimeGrid
) -> TrajectoryPair:
    """Shooting on ``psi(0)`` through the group generated by ``AA + BB``.

    Only for skew generators, where the coupled generator is a group and the
    terminal map ``S = (-H, I) Phi(T, 0) (0; I)`` decides solvability.
    """
    if A.kind is not OperatorKind.SKEW:
        raise HypothesisError("shooting requires a skew generator; backward heat flow is not defined")
    n, N, dt = A.dim, grid.N, grid.dt
    x = np.asarray(x, float).reshape(n)
    Ad = A.dense()
    AA = np.block([[Ad, np.zeros((n, n))], [np.zeros((n, n)), -Ad.T]])
    names = ("B11", "B12", "B21", "B22")
    if aff.time_dependent and any(callable(getattr(aff, k)) for k in names):
        coef = lambda t: np.block([[aff.at("B11", t), aff.at("B12", t)],  # noqa: E731
                                   [-aff.at("B21", t), -aff.at("B22", t)]])
    else:
        coef = np.block([[aff.B11, aff.B12], [-aff.B21, -aff.B22]])
    E = _midpoint_propagators(AA, coef, grid)
    F = np.hstack([aff.sample("b0", grid), -aff.sample("g0", grid)])

    Z = np.empty((N + 1, 2 * n, n))
    Z[0] = np.vstack([np.zeros((n, n)), np.eye(n)])
    z = np.empty((N + 1, 2 * n))
    z[0] = np.concatenate([x, np.zeros(n)])
    for k in range(N):
        Z[k + 1] = E[k] @ Z[k]
        z[k + 1] = E[k] @ (z[k] + 0.5 * dt * F[k]) + 0.5 * dt * F[k + 1]
    proj = np.hstack([-aff.H, np.eye(n)])
    S = proj @ Z[N]
    smin = float(np.linalg.svd(S, compute_uv=False).min())
    if smin < SHOOTING_SIGMA_MIN:
        raise ShootingSingularError(
            f"shooting operator not invertible (min singular value {smin:.3e})", smin)
    psi0 = np.linalg.solve(S, aff.h0 - proj @ z[N])
    traj = z + Z @ psi0
    y, psi = traj[:, :n].copy(), traj[:, n:].copy()
    y[0] = x
    res = mild_residual(A, aff.to_triple(grid=grid), grid, x, y, psi)
    return TrajectoryPair(grid, y, psi, res, "shooting", {"psi0": psi0, "sigma_min": smin})


# -- Riccati -----------------------------------------------------------------------


def _lawson_rk4_backward(A: SpectralOperator, grid: TimeGrid, P_T: np.ndarray, p_T: np.ndarray,
                         rhs: Callable, blowup: float = RICCATI_BLOWUP):
    """Integrate ``dX/dtau = L X + rhs(t, X)`` backward from ``t = T``.

    ``L`` is the linear flow ``(P, p) -> (A^T P + P A, A^T p)``, applied exactly by
    the semigroup factors (Lawson/integrating-factor RK4).
    """
    N, h = grid.N, grid.dt
    n = A.dim
    E1, Eh = A.expm(h), A.expm(0.5 * h)

    def phi(E, P, p):
        return E.T @ P @ E, E.T @ p

    P = np.empty((N + 1, n, n))
    p = np.empty((N + 1, n))
    P[N], p[N] = P_T, p_T
    t = grid.nodes
    for k in range(N, 0, -1):
        X = (P[k], p[k])
        t0, tm, t1 = t[k], t[k] - 0.5 * h, t[k - 1]
        k1 = rhs(t0, *X)
        Xh = phi(Eh, X[0] + 0.5 * h * k1[0], X[1] + 0.5 * h * k1[1])
        k2 = rhs(tm, *Xh)
        PXh = phi(Eh, *X)
        k3 = rhs(tm, PXh[0] + 0.5 * h * k2[0], PXh[1] + 0.5 * h * k2[1])
        PX1 = phi(E1, *X)
        k3h = phi(Eh, *k3)
        k4 = rhs(t1, PX1[0] + h * k3h[0], PX1[1] + h * k3h[1])
        k1f = phi(E1, *k1)
        k23 = phi(Eh, k2[0] + k3[0], k2[1] + k3[1])
        P[k - 1] = PX1[0] + h / 6.0 * (k1f[0] + 2.0 * k23[0] + k4[0])
        p[k - 1] = PX1[1] + h / 6.0 * (k1f[1] + 2.0 * k23[1] + k4[1])
        norm = np.abs(P[k - 1]).max()
        if not np.isfinite(norm) or norm > blowup:
            raise RiccatiBlowUpError(f"Riccati blow-up at t = {t1:.6g}", float(t1))
    return P, p


def _getter(aff: AffineGenerator, name: str) -> Callable[[float], np.ndarray]:
    c = getattr(aff, name)
    if callable(c):
        return lambda t: aff.at(name, t)
    return lambda t: c


def _riccati_rhs(aff: AffineGenerator):
    B11, B12, B21, B22, b0, g0 = (_getter(aff, k) for k in ("B11", "B12", "B21", "B22", "b0", "g0"))

    def rhs(t, P, p):
        PB12 = P @ B12(t)
        dP = P @ B11(t) + B22(t) @ P + PB12 @ P + B21(t)
        dp = (PB12 + B22(t)) @ p + P @ b0(t) + g0(t)
        return dP, dp
    return rhs


def _riccati_picard_mild(A: SpectralOperator, aff: AffineGenerator, grid: TimeGrid,
                         max_iter: int = 200, tol: float = 1e-12):
    """Picard iteration on the mild Riccati equation (validation route)."""
    n, N, dt = A.dim, grid.N, grid.dt
    E = A.expm(dt)
    rhs = _riccati_rhs(aff)
    P = np.broadcast_to(aff.H, (N + 1, n, n)).copy()
    p = np.broadcast_to(aff.h0, (N + 1, n)).copy()
    for it in range(max_iter):
        R = [rhs(t, P[k], p[k]) for k, t in enumerate(grid.nodes)]
        Pn = np.empty_like(P)
        pn = np.empty_like(p)
        Pn[N], pn[N] = aff.H, aff.h0
        for k in range(N - 1, -1, -1):
            Pn[k] = E.T @ (Pn[k + 1] + 0.5 * dt * R[k + 1][0]) @ E + 0.5 * dt * R[k][0]
            pn[k] = E.T @ (pn[k + 1] + 0.5 * dt * R[k + 1][1]) + 0.5 * dt * R[k][1]
        inc = max(np.abs(Pn - P).max(), np.abs(pn - p).max())
        P, p = Pn, pn
        if not np.isfinite(inc) or np.abs(P).max() > RICCATI_BLOWUP:
            raise RiccatiBlowUpError("Picard iteration on the mild Riccati equation diverged", 0.0)
        if inc < tol:
            return P, p, it + 1
    raise RiccatiAccuracyError(f"mild-form Picard iteration did not converge (last increment {inc:.3e})")


def integrate_riccati(
    A: SpectralOperator,
    aff: AffineGenerator,
    grid: TimeGrid,
    check_halving: bool = True,
    route: str = "differential",
) -> RiccatiSolution:
    """Backward integration of the differential Riccati equation and of ``p``.

    Solves ``P' + P(A + B11) + (A^T + B22)P + P B12 P + B21 = 0``, ``P(T) = H`` and
    ``p' + (A^T + P B12 + B22) p + P b0 + g0 = 0``, ``p(T) = h0``. The truncated
    ``A`` is bounded, so the differential and mild forms coincide.

    Parameters
    ----------
    check_halving : bool
        Re-integrate with twice the step (even ``N`` only) and fail if the two
        disagree by more than 1e-6 at common nodes.
    route : {"differential", "picard_mild"}
        ``picard_mild`` iterates the mild (integral) form instead; validation only.
    """
    if route == "picard_mild":
        P, p, iters = _riccati_picard_mild(A, aff, grid)
        return RiccatiSolution(grid, P, p, {"route": route, "iterations": iters})
    if route != "differential":
        raise ValueError(f"unknown Riccati route {route!r}")
    rhs = _riccati_rhs(aff)
    P, p = _lawson_rk4_backward(A, grid, aff.H.copy(), aff.h0.copy(), rhs)
    info: dict[str, Any] = {"route": route}
    if check_halving and grid.N % 2 == 0:
        # the given grid is the step-halved version of the coarse one
        P2, p2 = _lawson_rk4_backward(A, TimeGrid(grid.T, grid.N // 2), aff.H.copy(),
                                      aff.h0.copy(), rhs)
        gap = float(max(np.abs(P[::2] - P2).max(), np.abs(p[::2] - p2).max()))
        info["halving_gap"] = gap
        if gap > RICCATI_HALVING_TOL:
            raise RiccatiAccuracyError(f"Riccati step-halving disagreement {gap:.3e} exceeds 1e-6")
    P[-1] = aff.H
    p[-1] = aff.h0
    return RiccatiSolution(grid, P, p, info)


# -- monotone iteration ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MonotoneIterationResult:
    iterates: list
    P: np.ndarray
    converged: bool
    iterations: int
    last_increment: float
    ordering_slack: float
    psd_slack: float


def _min_eig(S: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2))).min())


def _check_monotone_hypotheses(aff: AffineGenerator, grid: TimeGrid, slack: float) -> None:
    times = grid.nodes if aff.time_dependent else grid.nodes[:1]
    if len(times) > 129:
        times = times[np.linspace(0, len(times) - 1, 129).round().astype(int)]

    def psd(M, label):
        if np.abs(M - np.swapaxes(M, -1, -2)).max() > slack or _min_eig(M) < -slack:
            raise HypothesisError(f"monotone iteration hypothesis fails: {label} is not PSD")

    psd(aff.H, "H")
    for t in times:
        psd(-aff.at("B12", t), "-B12(t)")
        psd(aff.at("B21", t), "B21(t)")
        if np.abs(aff.at("B22", t) - aff.at("B11", t).T).max() > slack:
            raise HypothesisError("monotone iteration hypothesis fails: B22 != B11^T")


def riccati_monotone_iteration(
    A: SpectralOperator,
    aff: AffineGenerator,
    grid: TimeGrid,
    max_iter: int = 50,
    tol: float = 1e-12,
) -> MonotoneIterationResult:
    """Monotone (Kleinman-type) iteration for the Riccati equation.

    ``P_0 = 0``; ``P_{n+1}`` solves the linear Lyapunov equation
    ``P' + P F_n + F_n^T P + P_n(-B12)P_n + B21 = 0``, ``F_n = A + B11 + B12 P_n``,
    ``P(T) = H``. Under the sign hypotheses the iterates are PSD and decrease.
    """
    slack = DEFAULT_TOLERANCES.psd_slack
    _check_monotone_hypotheses(aff, grid, slack)
    n, N = A.dim, grid.N
    Pn = np.zeros((N + 1, n, n))
    iterates = [Pn]
    order_slack, psd_slack = np.inf, 0.0
    inc = np.inf
    zero_p = np.zeros(n)
    B11, B12, B21 = (_getter(aff, k) for k in ("B11", "B12", "B21"))
    for it in range(1, max_iter + 1):
        spline = CubicSpline(grid.nodes, Pn, axis=0) if N >= 3 else None

        def frozen(t, Pn=Pn, spline=spline):
            if spline is not None:
                return spline(t)
            return np.array([np.interp(t, grid.nodes, Pn[:, i, j]) for i in range(n)
                             for j in range(n)]).reshape(n, n)

        def rhs(t, P, p):
            Pf = frozen(t)
            B12f = B12(t) @ Pf
            G = B11(t) + B12f
            return P @ G + G.T @ P - Pf @ B12f + B21(t), zero_p

        Pnew, _ = _lawson_rk4_backward(A, grid, aff.H.copy(), zero_p, rhs)
        Pnew[-1] = aff.H
        diff = Pn - Pnew
        if it > 1:
            order_slack = min(order_slack, _min_eig(diff))
        psd_slack = min(psd_slack, _min_eig(Pnew))
        inc = float(np.abs(diff).max())
        iterates.append(Pnew)
        Pn = Pnew
        if inc < tol * max(1.0, np.abs(Pn).max()):
            break
    converged = inc < tol * max(1.0, np.abs(Pn).max())
    if not converged:
        log.warning("monotone Riccati iteration: no convergence in %d steps (increment %.3e)",
                    max_iter, inc)
    return MonotoneIterationResult(
        iterates, Pn, bool(converged), len(iterates) - 1, inc,
        float(order_slack if np.isfinite(order_slack) else 0.0), float(psd_slack),
    )


# -- decoupling --------------------------------------------------------------------


def solve_via_decoupling(
    A: SpectralOperator,
    aff: AffineGenerator,
    x: np.ndarray,
    grid: TimeGrid,
    riccati: RiccatiSolution | None = None,
) -> TrajectoryPair:
    """Closed-loop forward solve ``y' = (A + B11 + B12 P)y + B12 p + b0``, ``psi = P y + p``."""
    n, N, dt = A.dim, grid.N, grid.dt
    x = np.asarray(x, float).reshape(n)
    ric = riccati if riccati is not None else integrate_riccati(A, aff, grid)
    E = A.expm(dt)
    B11, B12, b0 = aff.sample("B11", grid), aff.sample("B12", grid), aff.sample("b0", grid)
    C = B11 + B12 @ ric.P
    d = np.einsum("kij,kj->ki", B12, ric.p) + b0
    y = np.empty((N + 1, n))
    y[0] = x
    I = np.eye(n)
    for k in range(N):
        rhs = E @ (y[k] + 0.5 * dt * (C[k] @ y[k] + d[k])) + 0.5 * dt * d[k + 1]
        y[k + 1] = np.linalg.solve(I - 0.5 * dt * C[k + 1], rhs)
    psi = np.einsum("kij,kj->ki", ric.P, y) + ric.p
    res = mild_residual(A, aff.to_triple(grid=grid), grid, x, y, psi)
    return TrajectoryPair(grid, y, psi, res, "riccati", {"riccati": ric})


@dataclass(frozen=True)
class DecouplingReport:
    pde_residual: float
    consistency: float
    terminal: float


def verify_decoupling_field(
    A: SpectralOperator,
    gen: GeneratorTriple,
    field: RiccatiSolution,
    traj: TrajectoryPair,
) -> DecouplingReport:
    """Residuals of an affine decoupling field ``K(t, y) = P(t) y + p(t)``.

    ``pde_residual`` is the sup over interior nodes of
    ``K_t + K_y[A y + b(t, y, K)] + A^T K + g(t, y, K)`` along the trajectory, with
    ``K_t`` by central differences; ``consistency`` is ``sup |psi - K(t, y)|``;
    ``terminal`` is ``sup |K(T, y) - h(y)|`` at the trajectory end point.
    """
    grid = traj.grid
    Ad = A.dense()
    y, t = traj.y, grid.nodes
    P, p = field.P, field.p
    K = np.einsum("kij,kj->ki", P, y) + p
    dP = (P[2:] - P[:-2]) / (2 * grid.dt)
    dp = (p[2:] - p[:-2]) / (2 * grid.dt)
    yi, Ki, Pi, ti = y[1:-1], K[1:-1], P[1:-1], t[1:-1, None]
    drift = yi @ Ad.T + gen.b(ti, yi, Ki)
    res = (np.einsum("kij,kj->ki", dP, yi) + dp + np.einsum("kij,kj->ki", Pi, drift)
           + Ki @ Ad + gen.g(ti, yi, Ki))
    pde = float(np.abs(res).max()) if len(res) else 0.0
    cons = float(np.abs(traj.psi - K).max())
    term = float(np.abs(K[-1] - gen.h(y[-1])).max())
    return DecouplingReport(pde, cons, term)

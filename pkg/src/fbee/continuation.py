"""Method of continuation for nonlinear FBEEs, plus a-priori and energy diagnostics.

The homotopy family at level ``rho`` is

    y' = A y + rho b(t, y, psi) + b0,   psi' = -A^T psi - rho g(t, y, psi) - g0,
    y(0) = x,                           psi(T) = rho h(y(T)) + h0.

At ``rho = 0`` it is decoupled and solved exactly; each later level is solved by a
warm-started Picard iteration and the step in ``rho`` is halved whenever that
iteration fails to contract.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import ContinuationStalledError, PicardDivergenceError
from .generators import GeneratorTriple, LipschitzProfile, ball_samples
from .linear import Forcing, TrajectoryPair, mild_residual
from .spectral import SpectralOperator, TimeGrid, duhamel_sweep, duhamel_sweep_backward

__all__ = [
    "ContinuationState",
    "AprioriReport",
    "EnergyBoundReport",
    "picard_solve_at_rho",
    "solve_continuation",
    "contraction_margin",
    "apriori_bound_check",
    "stability_constant",
    "fit_stability_constants",
    "energy_bound_check",
]

log = logging.getLogger(__name__)

INNER_TOL = 1e-8
MAX_INNER = 200
MAX_STEPS = 64
EPS_MIN = 1e-4
_DIVERGENCE_RUN = 5


@dataclass
class ContinuationState:
    """Homotopy bookkeeping. ``history`` holds one record per attempted level."""

    rho: float
    epsilon: float
    current: TrajectoryPair | None
    forcing: Forcing
    inner_tol: float = INNER_TOL
    max_inner: int = MAX_INNER
    max_outer: int = MAX_STEPS
    history: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "epsilon": self.epsilon,
            "inner_tol": self.inner_tol,
            "max_inner": self.max_inner,
            "max_outer": self.max_outer,
            "history": self.history,
            "info": {k: v for k, v in self.info.items() if isinstance(v, (int, float, bool, str, type(None)))},
        }


def _sup(a: np.ndarray) -> float:
    return float(np.abs(a).max()) if a.size else 0.0


def picard_solve_at_rho(
    A: SpectralOperator,
    gen: GeneratorTriple,
    rho: float,
    forcing: Forcing | None,
    x: np.ndarray,
    grid: TimeGrid,
    warm_start: TrajectoryPair | None = None,
    *,
    inner_tol: float = INNER_TOL,
    max_inner: int = MAX_INNER,
) -> TrajectoryPair:
    """Fixed-point iteration on the discretized mild equations at level ``rho``.

    Sweeps are Gauss-Seidel ordered: the forward Duhamel sweep uses the current
    ``psi``, the backward sweep the freshly updated ``y``. Stops once successive
    iterates differ by less than ``inner_tol`` and the mild residual is below it.

    Raises
    ------
    PicardDivergenceError
        Distance grew on 5 consecutive iterations, became non-finite, or
        ``max_inner`` was exhausted.
    """
    n = A.dim
    forcing = forcing or Forcing()
    b0, g0, h0 = forcing.sample(grid, n)
    x = np.asarray(x, float).reshape(n)
    if warm_start is None:
        y = np.zeros((grid.N + 1, n))
        psi = np.zeros((grid.N + 1, n))
    else:
        y, psi = warm_start.y.copy(), warm_start.psi.copy()
    t = grid.nodes[:, None]
    dists: list[float] = []
    growing = 0
    for it in range(1, max_inner + 1):
        b = np.broadcast_to(gen.b(t, y, psi), y.shape)
        y_new = duhamel_sweep(A, grid, rho * b + b0, x)
        g = np.broadcast_to(gen.g(t, y_new, psi), y.shape)
        psi_new = duhamel_sweep_backward(A, grid, rho * g + g0, rho * gen.h(y_new[-1]) + h0)
        d = max(_sup(y_new - y), _sup(psi_new - psi))
        y, psi = y_new, psi_new
        if not np.isfinite(d):
            raise PicardDivergenceError(f"Picard iterate became non-finite at rho={rho:.6g}")
        growing = growing + 1 if dists and d > dists[-1] else 0
        dists.append(d)
        if growing >= _DIVERGENCE_RUN:
            raise PicardDivergenceError(
                f"no contraction at rho={rho:.6g}: distance grew {growing} times in a row"
            )
        if d < inner_tol:
            res = mild_residual(A, gen, grid, x, y, psi, rho, forcing)
            if res <= inner_tol:
                return TrajectoryPair(grid, y, psi, res, "continuation",
                                      {"iterations": it, "distances": dists, "rho": rho})
    raise PicardDivergenceError(f"no convergence within {max_inner} Picard iterations at rho={rho:.6g}")


def _decoupled(A, grid, x, forcing: Forcing) -> tuple[np.ndarray, np.ndarray]:
    b0, g0, h0 = forcing.sample(grid, A.dim)
    return duhamel_sweep(A, grid, b0, x), duhamel_sweep_backward(A, grid, g0, h0)


def _null_data_norm(gen: GeneratorTriple, grid: TimeGrid, x: np.ndarray, forcing: Forcing) -> float:
    """``|x| + |h(0) + h0| + int |b(s,0,0) + b0| + |g(s,0,0) + g0| ds``."""
    n = gen.dim
    z = np.zeros((grid.N + 1, n))
    b0, g0, h0 = forcing.sample(grid, n)
    b, g = gen.along(grid, z, z)
    h = gen.h(np.zeros(n)) + h0
    integ = np.linalg.norm(b + b0, axis=1) + np.linalg.norm(g + g0, axis=1)
    return float(np.linalg.norm(x) + np.linalg.norm(h) + trapezoid(integ, grid.nodes))


def solve_continuation(
    A: SpectralOperator,
    gen: GeneratorTriple,
    x: np.ndarray,
    grid: TimeGrid,
    forcing: Forcing | None = None,
    *,
    rho_target: float = 1.0,
    epsilon: float = 0.25,
    eps_min: float = EPS_MIN,
    inner_tol: float = INNER_TOL,
    max_inner: int = MAX_INNER,
    max_steps: int = MAX_STEPS,
    certificate=None,
) -> tuple[TrajectoryPair, ContinuationState]:
    """Continue from the decoupled problem at ``rho = 0`` to ``rho_target``.

    Each accepted level grows the step by 1.5 (capped at the initial ``epsilon``);
    a failed level halves it. ``certificate`` (a checked Lyapunov certificate or
    monotonicity certificate with a sample radius) is only used for the a
    posteriori check that the trajectory stayed in the certified ball.

    Returns
    -------
    traj : TrajectoryPair
    state : ContinuationState
        ``info["K_empirical"]`` is ``(|y|_inf + |psi|_inf)`` over the null-data norm.

    Raises
    ------
    ContinuationStalledError
        The step fell below ``eps_min`` or ``max_steps`` levels were attempted.
    """
    if not 0.0 <= rho_target <= 1.0:
        raise ValueError("rho_target must lie in [0, 1]")
    if not (gen.flags.H2 and gen.flags.H3):
        log.warning("generator %s is not flagged H2 and H3; continuation runs without that guarantee",
                    gen.name)
    if certificate is None:
        log.info("no Lyapunov certificate attached")
    forcing = forcing or Forcing()
    n = A.dim
    x = np.asarray(x, float).reshape(n)
    t0 = time.perf_counter()
    y, psi = _decoupled(A, grid, x, forcing)
    res0 = mild_residual(A, gen, grid, x, y, psi, 0.0, forcing)
    current = TrajectoryPair(grid, y, psi, res0, "continuation", {"iterations": 0, "rho": 0.0})
    state = ContinuationState(0.0, float(epsilon), current, forcing, inner_tol, max_inner, max_steps)
    state.history.append({"rho": 0.0, "epsilon": 0.0, "iterations": 0, "residual": res0, "accepted": True})
    eps = float(epsilon)
    attempts = 0
    while state.rho < rho_target:
        if attempts >= max_steps:
            raise ContinuationStalledError(
                f"continuation used {max_steps} levels without reaching rho={rho_target}", state.rho)
        attempts += 1
        target = min(rho_target, state.rho + eps)
        try:
            traj = picard_solve_at_rho(A, gen, target, forcing, x, grid, state.current,
                                       inner_tol=inner_tol, max_inner=max_inner)
        except PicardDivergenceError as exc:
            state.history.append({"rho": target, "epsilon": eps, "iterations": None,
                                  "residual": None, "accepted": False})
            log.debug("level rho=%.6g rejected: %s", target, exc)
            eps *= 0.5
            if eps < eps_min:
                raise ContinuationStalledError(
                    f"continuation stalled at rho={state.rho:.6g} (step below {eps_min:g})", state.rho
                ) from exc
            continue
        state.history.append({"rho": target, "epsilon": eps, "iterations": traj.info["iterations"],
                              "residual": traj.mild_residual, "accepted": True})
        log.debug("level rho=%.6g accepted after %d iterations", target, traj.info["iterations"])
        state.rho, state.current, state.epsilon = target, traj, eps
        eps = min(1.5 * eps, float(epsilon))
    traj = state.current
    denom = _null_data_norm(gen, grid, x, forcing)
    size = _sup(traj.y) + _sup(traj.psi)
    state.info["K_empirical"] = size / denom if denom > 0 else (0.0 if size == 0 else float("inf"))
    state.info["levels"] = sum(1 for h in state.history[1:] if h["accepted"])
    state.info["seconds"] = time.perf_counter() - t0
    radius = getattr(certificate, "sample_ball_radius", None) or getattr(certificate, "radius", None)
    if radius is not None:
        inside = max(_sup(traj.y), _sup(traj.psi)) <= radius
        state.info["inside_certified_ball"] = bool(inside)
        if not inside:
            log.warning("trajectory left the certified ball of radius %g", radius)
    return traj, state


# -- contraction margin ------------------------------------------------------------


def contraction_margin(profile: LipschitzProfile, T: float, rho: float) -> float:
    """Left side of the small-coupling contraction condition (``< 1`` certifies).

    ``rho^2 [e^{rho int L_gpsi} |h_y| + int e^{rho int_0^s L_gpsi} |g_y| ds]
    [int e^{rho int_s^T L_by} |b_psi| ds]`` with the profile's sup surrogates.
    """
    grid = profile.grid
    if abs(grid.T - T) > 1e-12 * max(1.0, T):
        raise ValueError("profile was computed on a different horizon")
    t = grid.nodes
    Ig = cumulative_trapezoid(profile.L_gpsi, t, initial=0.0)
    Ib = cumulative_trapezoid(profile.L_by, t, initial=0.0)
    first = np.exp(rho * Ig[-1]) * profile.sup_h_y + trapezoid(np.exp(rho * Ig) * profile.sup_g_y, t)
    second = trapezoid(np.exp(rho * (Ib[-1] - Ib)) * profile.sup_b_psi, t)
    return float(rho**2 * first * second)


# -- a-priori estimates ------------------------------------------------------------


@dataclass(frozen=True)
class AprioriReport:
    """Both sides of the sup-norm a-priori bounds for one perturbed pair."""

    lhs_y: float
    rhs_y: float
    lhs_psi: float
    rhs_psi: float
    holds: bool
    K: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def _mean_value_jac(fun, t, y, yh, psi, psih, nodes: int = 5) -> np.ndarray:
    """``int_0^1 J(t, y + a yh, psi + a psih) da`` by Gauss-Legendre."""
    xs, ws = leggauss(nodes)
    a = 0.5 * (xs + 1.0)
    acc = 0.0
    for ak, wk in zip(a, ws):
        acc = acc + 0.5 * wk * np.asarray(fun(t, y + ak * yh, psi + ak * psih))
    return acc


def _mv_h(gen, yT, yhT, nodes: int = 5) -> np.ndarray:
    xs, ws = leggauss(nodes)
    return sum(0.5 * w * np.asarray(gen.h_y(yT + 0.5 * (x + 1) * yhT)) for x, w in zip(xs, ws))


def stability_constant(base: TrajectoryPair, pert: TrajectoryPair, x: np.ndarray, x_bar: np.ndarray,
                       forcing: Forcing, forcing_bar: Forcing) -> float:
    """Squared-form stability ratio ``(|dy|^2 + |dpsi|^2) / (|dx|^2 + |dh0|^2 + int |db0|^2 + |dg0|^2)``."""
    grid = base.grid
    n = base.y.shape[1]
    b0, g0, h0 = forcing.sample(grid, n)
    bb0, gb0, hb0 = forcing_bar.sample(grid, n)
    num = _sup(pert.y - base.y) ** 2 + _sup(pert.psi - base.psi) ** 2
    den = (np.sum((np.asarray(x_bar) - np.asarray(x)) ** 2) + np.sum((hb0 - h0) ** 2)
           + trapezoid(np.sum((bb0 - b0) ** 2, axis=1) + np.sum((gb0 - g0) ** 2, axis=1), grid.nodes))
    return float(num / den) if den > 0 else 0.0


def apriori_bound_check(
    gen: GeneratorTriple,
    base: TrajectoryPair,
    pert: TrajectoryPair,
    profile: LipschitzProfile,
    rho: float,
    x: np.ndarray,
    x_bar: np.ndarray,
    forcing: Forcing | None = None,
    forcing_bar: Forcing | None = None,
    slack: float = 0.05,
) -> AprioriReport:
    """Check the two sup-norm a-priori bounds on a computed perturbed pair.

    With ``yh = ybar - y`` and mean-value Jacobians along the segment,

    ``|yh|_inf <= rho int e^{rho int_s^T L_by} |b_psi~ psih| ds + e^{rho int L_by}(|xh| + int |db0|)``
    ``|psih|_inf <= rho [e^{rho int L_gpsi} |h_y~ yh(T)| + int e^{rho int_0^s L_gpsi} |g_y~ yh| ds]
    + e^{rho int L_gpsi}(|dh0| + int |dg0|)``

    hold for contractive semigroups; ``holds`` allows ``slack`` relative excess for
    discretization. Both solves must share the generator (``db = dg = dh = 0``).
    """
    grid = base.grid
    t = grid.nodes
    n = gen.dim
    forcing = forcing or Forcing()
    forcing_bar = forcing_bar or Forcing()
    b0, g0, h0 = forcing.sample(grid, n)
    bb0, gb0, hb0 = forcing_bar.sample(grid, n)
    yh, ph = pert.y - base.y, pert.psi - base.psi
    tc = t[:, None]
    bp = _mean_value_jac(gen.b_psi, tc, base.y, yh, base.psi, ph)
    gy = _mean_value_jac(gen.g_y, tc, base.y, yh, base.psi, ph)
    hy = _mv_h(gen, base.y[-1], yh[-1])
    bp = np.broadcast_to(bp, (grid.N + 1, n, n))
    gy = np.broadcast_to(gy, (grid.N + 1, n, n))
    Ib = cumulative_trapezoid(profile.L_by, profile.grid.nodes, initial=0.0)
    Ig = cumulative_trapezoid(profile.L_gpsi, profile.grid.nodes, initial=0.0)
    if profile.grid.N != grid.N:
        Ib = np.interp(t, profile.grid.nodes, Ib)
        Ig = np.interp(t, profile.grid.nodes, Ig)
    Kb, Kg = np.exp(rho * Ib[-1]), np.exp(rho * Ig[-1])
    db0 = np.linalg.norm(bb0 - b0, axis=1)
    dg0 = np.linalg.norm(gb0 - g0, axis=1)
    bpsi_ph = np.linalg.norm(np.einsum("kij,kj->ki", bp, ph), axis=1)
    gy_yh = np.linalg.norm(np.einsum("kij,kj->ki", gy, yh), axis=1)
    rhs_y = (rho * trapezoid(np.exp(rho * (Ib[-1] - Ib)) * bpsi_ph, t)
             + Kb * (np.linalg.norm(np.asarray(x_bar) - np.asarray(x)) + trapezoid(db0, t)))
    rhs_psi = (rho * (Kg * np.linalg.norm(hy @ yh[-1]) + trapezoid(np.exp(rho * Ig) * gy_yh, t))
               + Kg * (np.linalg.norm(hb0 - h0) + trapezoid(dg0, t)))
    lhs_y = float(np.linalg.norm(yh, axis=1).max())
    lhs_psi = float(np.linalg.norm(ph, axis=1).max())
    tiny = 1e-12
    holds = lhs_y <= (1 + slack) * rhs_y + tiny and lhs_psi <= (1 + slack) * rhs_psi + tiny
    K = stability_constant(base, pert, x, x_bar, forcing, forcing_bar)
    return AprioriReport(lhs_y, float(rhs_y), lhs_psi, float(rhs_psi), bool(holds), K)


def fit_stability_constants(
    A: SpectralOperator,
    gen: GeneratorTriple,
    x: np.ndarray,
    grid: TimeGrid,
    rho: float,
    perturbations: list[Forcing],
    forcing: Forcing | None = None,
    **kw,
) -> list[float]:
    """Fitted squared-form stability constants at level ``rho``, one per perturbation.

    Each entry of ``perturbations`` is the perturbed forcing ``(b0 + db0, g0 + dg0, h0 + dh0)``.
    """
    forcing = forcing or Forcing()
    base, _ = solve_continuation(A, gen, x, grid, forcing, rho_target=rho, **kw)
    out = []
    for fb in perturbations:
        pert, _ = solve_continuation(A, gen, x, grid, fb, rho_target=rho, **kw)
        out.append(stability_constant(base, pert, x, x, forcing, fb))
    return out


# -- energy bounds -----------------------------------------------------------------


@dataclass(frozen=True)
class EnergyBoundReport:
    """Sampled coercivity constant and the resulting sup-norm bounds.

    ``joint_form`` is set when ``b`` depends on ``psi``; ``L`` is then fitted in the
    joint form ``<b, y> <= L (1 + |y|^2 + |psi|^2)`` on bounded ``psi`` samples.
    ``psi_bound`` is ``None`` when the generator carries no cost gradients.
    """

    L: float
    joint_form: bool
    y_sup: float
    y_bound: float
    y_ok: bool
    psi_sup: float
    psi_bound: float | None
    psi_ok: bool | None
    K: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def energy_bound_check(
    gen: GeneratorTriple,
    traj: TrajectoryPair,
    x: np.ndarray,
    forcing: Forcing | None = None,
    *,
    ball_radius: float = 1.0,
    sample_budget: int = 256,
    seed: int = 0,
) -> EnergyBoundReport:
    """Sampled energy-type coercivity and the Gronwall surrogate bounds.

    ``|y|_inf <= e^{2LT} (sqrt(c) + |x| + int |b0|)`` with ``L`` the sampled maximum
    of ``<b(t,y,psi), y> / (1 + |y|^2)`` (positive part) and ``c = 1``; in the joint
    form ``c = 1 + |psi|_inf^2``. When the generator exposes
    cost gradients ``Q_grad``/``G_grad`` the backward bound
    ``|psi(t)| <= |G_y(y(T))| + T sup_t |Q_y(y(t))|`` is also checked.
    """
    grid = traj.grid
    n = gen.dim
    forcing = forcing or Forcing()
    b0, _, _ = forcing.sample(grid, n)
    ys, ps = ball_samples(n, ball_radius, sample_budget, seed)
    times = grid.nodes[np.unique(np.linspace(0, grid.N, min(grid.N + 1, 9)).round().astype(int))] \
        if gen.time_dependent else [0.0]
    joint = bool(np.abs(np.broadcast_to(gen.b_psi(0.0, ys, ps), (len(ys), n, n))).max() > 0)
    L = 0.0
    for t in times:
        by = np.einsum("si,si->s", np.broadcast_to(gen.b(t, ys, ps), ys.shape), ys)
        denom = 1.0 + np.sum(ys**2, axis=1) + (np.sum(ps**2, axis=1) if joint else 0.0)
        L = max(L, float((by / denom).max()))
    T = grid.T
    K = float(np.exp(2 * L * T))
    y_sup = float(np.linalg.norm(traj.y, axis=1).max())
    psi_sup = float(np.linalg.norm(traj.psi, axis=1).max())
    # joint form: the psi part is frozen at its sup along the trajectory
    c = 1.0 + (psi_sup**2 if joint else 0.0)
    y_bound = K * (np.sqrt(c) + float(np.linalg.norm(x)) + float(trapezoid(np.linalg.norm(b0, axis=1), grid.nodes)))
    psi_bound = psi_ok = None
    Qg, Gg = gen.extras.get("Q_grad"), gen.extras.get("G_grad")
    if Qg is not None and Gg is not None:
        psi_bound = float(np.linalg.norm(Gg(traj.y[-1])) + T * np.linalg.norm(Qg(traj.y), axis=1).max())
        psi_ok = psi_sup <= psi_bound * (1 + 1e-6) + 1e-12
    return EnergyBoundReport(L, joint, y_sup, float(y_bound), bool(y_sup <= y_bound), psi_sup,
                             psi_bound, psi_ok, K)

"""Generator triples ``(b, g, h)``, affine generators, built-ins and sampled profiles.

Generator callables follow a batched convention: ``y`` and ``psi`` may carry any
leading batch shape ``(..., n)`` and ``t`` is a scalar or broadcasts against the
batch shape. Jacobians return ``(..., n, n)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, HypothesisError
from .spectral import TimeGrid, dirichlet_laplacian
from .tolerances import GROWTH_FLAG

__all__ = [
    "ClassFlags",
    "GeneratorTriple",
    "AffineGenerator",
    "LipschitzProfile",
    "make_builtin",
    "generator_from_config",
    "ball_samples",
    "lipschitz_profile",
    "jacobian_fd_error",
    "BUILTINS",
]

Coefficient = "np.ndarray | Callable[[float], np.ndarray]"


@dataclass(frozen=True)
class ClassFlags:
    """Regularity classes (H1)-(H3) and the energy condition (H3)'."""

    H1: bool = True
    H2: bool = False
    H3: bool = True
    H3prime: bool = False

    def as_dict(self) -> dict[str, bool]:
        return dataclasses.asdict(self)


def _diag_embed(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v[..., :, None] * np.eye(v.shape[-1])


def _matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``M v`` for ``M`` of shape (n, n) or (..., n, n) and ``v`` of shape (..., n)."""
    if M.ndim == 2:
        return v @ M.T
    return np.einsum("...ij,...j->...i", M, v)


@dataclass(frozen=True, eq=False)
class GeneratorTriple:
    """The nonlinearity ``(b, g, h)`` of an FBEE together with its Jacobians.

    ``lipschitz`` is ``None`` when the (H2) constant is unknown.
    """

    dim: int
    b: Callable[..., np.ndarray]
    g: Callable[..., np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    b_y: Callable[..., np.ndarray]
    b_psi: Callable[..., np.ndarray]
    g_y: Callable[..., np.ndarray]
    g_psi: Callable[..., np.ndarray]
    h_y: Callable[[np.ndarray], np.ndarray]
    lipschitz: float | None = None
    flags: ClassFlags = field(default_factory=ClassFlags)
    time_dependent: bool = False
    name: str = "custom"
    affine: "AffineGenerator | None" = None
    extras: Mapping[str, Any] = field(default_factory=dict)

    def bb(self, t, y, psi) -> np.ndarray:
        """Linearization ``[[b_y, b_psi], [-g_y, -g_psi]]`` with shape (..., 2n, 2n)."""
        top = np.concatenate([self.b_y(t, y, psi), self.b_psi(t, y, psi)], axis=-1)
        bot = np.concatenate([-self.g_y(t, y, psi), -self.g_psi(t, y, psi)], axis=-1)
        return np.concatenate([top, bot], axis=-2)

    def along(self, grid: TimeGrid, y: np.ndarray, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate ``b`` and ``g`` at every grid node of a trajectory."""
        t = grid.nodes[:, None]
        return (
            np.broadcast_to(self.b(t, y, psi), y.shape).astype(float),
            np.broadcast_to(self.g(t, y, psi), y.shape).astype(float),
        )


@dataclass(frozen=True, eq=False)
class AffineGenerator:
    """Linear FBEE data ``b = B11 y + B12 psi + b0``, ``g = B21 y + B22 psi + g0``,
    ``h = H y + h0``.

    Coefficients are constant arrays or callables of ``t``.
    """

    B11: Any
    B12: Any
    B21: Any
    B22: Any
    b0: Any = None
    g0: Any = None
    H: Any = None
    h0: Any = None

    def __post_init__(self) -> None:
        n = None
        for name in ("B11", "B12", "B21", "B22"):
            c = getattr(self, name)
            if not callable(c):
                c = np.atleast_2d(np.asarray(c, dtype=float))
                object.__setattr__(self, name, c)
                n = c.shape[0] if n is None else n
                if c.shape != (n, n):
                    raise ValueError(f"{name} has shape {c.shape}, expected square {n}x{n}")
        if n is None:
            n = np.atleast_2d(self.B11(0.0)).shape[0]
        object.__setattr__(self, "_n", n)
        for name in ("b0", "g0"):
            c = getattr(self, name)
            if c is None:
                c = np.zeros(n)
            if not callable(c):
                c = np.asarray(c, dtype=float).reshape(n)
            object.__setattr__(self, name, c)
        H = np.zeros((n, n)) if self.H is None else np.atleast_2d(np.asarray(self.H, float))
        h0 = np.zeros(n) if self.h0 is None else np.asarray(self.h0, float).reshape(n)
        if H.shape != (n, n):
            raise ValueError("H must be n x n")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h0", h0)

    @property
    def dim(self) -> int:
        return self._n  # type: ignore[attr-defined]

    @property
    def time_dependent(self) -> bool:
        return any(callable(getattr(self, k)) for k in ("B11", "B12", "B21", "B22", "b0", "g0"))

    def at(self, name: str, t) -> np.ndarray:
        """Coefficient ``name`` at time(s) ``t``; array ``t`` gives a leading axis."""
        c = getattr(self, name)
        if not callable(c):
            return c if np.ndim(t) == 0 else np.broadcast_to(c, np.shape(t) + c.shape)
        if np.ndim(t) == 0:
            return np.asarray(c(float(t)), dtype=float)
        flat = np.ravel(t)
        vals = np.stack([np.asarray(c(float(s)), dtype=float) for s in flat])
        return vals.reshape(np.shape(t) + vals.shape[1:])

    def sample(self, name: str, grid: TimeGrid) -> np.ndarray:
        return np.array(self.at(name, grid.nodes))

    def with_forcing(self, b0=None, g0=None, h0=None) -> "AffineGenerator":
        return AffineGenerator(
            self.B11, self.B12, self.B21, self.B22,
            self.b0 if b0 is None else b0,
            self.g0 if g0 is None else g0,
            self.H,
            self.h0 if h0 is None else h0,
        )

    def _coef_at(self, name: str, t) -> np.ndarray:
        c = getattr(self, name)
        if not callable(c):
            return c
        t = np.asarray(t, dtype=float)
        if t.ndim and t.shape[-1] == 1:
            t = t[..., 0]
        return self.at(name, t)

    def lipschitz(self, grid: TimeGrid | None = None) -> float:
        times = np.linspace(0.0, grid.T if grid else 1.0, 65)
        norms = [
            np.linalg.norm(np.atleast_2d(self.at(k, s)), 2)
            for k in ("B11", "B12", "B21", "B22")
            for s in (times if callable(getattr(self, k)) else [0.0])
        ]
        return float(max(norms))

    def to_triple(self, name: str = "custom_affine", grid: TimeGrid | None = None) -> GeneratorTriple:
        n = self.dim

        def b(t, y, psi):
            return (_matvec(self._coef_at("B11", t), y) + _matvec(self._coef_at("B12", t), psi)
                    + self._coef_at("b0", t))

        def g(t, y, psi):
            return (_matvec(self._coef_at("B21", t), y) + _matvec(self._coef_at("B22", t), psi)
                    + self._coef_at("g0", t))

        def h(y):
            return _matvec(self.H, y) + self.h0

        def jac(key):
            def J(t, y, psi):
                shape = np.broadcast_shapes(np.shape(y)[:-1], np.shape(psi)[:-1])
                c = self._coef_at(key, t)
                return np.broadcast_to(c, shape + (n, n)) if c.ndim == 2 else c
            return J

        def h_y(y):
            return np.broadcast_to(self.H, np.shape(y)[:-1] + (n, n))

        return GeneratorTriple(
            n, b, g, h, jac("B11"), jac("B12"), jac("B21"), jac("B22"), h_y,
            lipschitz=self.lipschitz(grid),
            flags=ClassFlags(H1=True, H2=True, H3=True, H3prime=True),
            time_dependent=self.time_dependent,
            name=name,
            affine=self,
        )


# -- built-ins ---------------------------------------------------------------------


def _mat(params: Mapping[str, Any], key: str, shape=None, default=None) -> np.ndarray:
    if key not in params or params[key] is None:
        if default is None:
            raise ConfigError(f"generator: missing parameter {key!r}")
        return default
    a = np.atleast_2d(np.asarray(params[key], dtype=float))
    if shape is not None and a.shape != shape:
        raise ConfigError(f"generator: {key} has shape {a.shape}, expected {shape}")
    return a


def _control_gain(params: Mapping[str, Any]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(B, R^{-1}, B R^{-1} B^T)`` after checking invertibility of ``R``."""
    B = _mat(params, "B")
    n, k = B.shape
    R = _mat(params, "R", (k, k))
    if np.linalg.eigvalsh(0.5 * (R + R.T)).min() < 1e-10:
        raise HypothesisError("R is not invertible (minimum eigenvalue below 1e-10)")
    Rinv = np.linalg.inv(R)
    return B, Rinv, B @ Rinv @ B.T


def _lq(params: Mapping[str, Any]) -> GeneratorTriple:
    B, Rinv, BRB = _control_gain(params)
    n, k = B.shape
    Q = _mat(params, "Q", (n, n))
    S = _mat(params, "S", (k, n), np.zeros((k, n)))
    G = _mat(params, "G", (n, n), np.zeros((n, n)))
    aff = AffineGenerator(
        B11=-B @ Rinv @ S,
        B12=-BRB,
        B21=Q - S.T @ Rinv @ S,
        B22=-S.T @ Rinv @ B.T,
        H=G,
    )
    return aff.to_triple("lq")


def _convex_parts(params: Mapping[str, Any], n: int):
    """Gradient/Hessian callables of the running and terminal costs."""
    if callable(params.get("Q_grad")):
        Qg, Qh = params["Q_grad"], params["Q_hess"]
    else:
        Q = _mat(params, "Q", (n, n))
        Qg = lambda y: _matvec(Q, y)  # noqa: E731
        Qh = lambda y: np.broadcast_to(Q, np.shape(y)[:-1] + (n, n))  # noqa: E731
    if callable(params.get("G_grad")):
        Gg, Gh = params["G_grad"], params["G_hess"]
    else:
        G = _mat(params, "G", (n, n), np.zeros((n, n)))
        Gg = lambda y: _matvec(G, y)  # noqa: E731
        Gh = lambda y: np.broadcast_to(G, np.shape(y)[:-1] + (n, n))  # noqa: E731
    return Qg, Qh, Gg, Gh


def _linear_convex(params: Mapping[str, Any]) -> GeneratorTriple:
    B, _, BRB = _control_gain(params)
    n = B.shape[0]
    if not callable(params.get("Q_grad")) and not callable(params.get("G_grad")):
        Q = _mat(params, "Q", (n, n))
        G = _mat(params, "G", (n, n), np.zeros((n, n)))
        aff = AffineGenerator(np.zeros((n, n)), -BRB, Q, np.zeros((n, n)), H=G)
        tri = aff.to_triple("linear_convex")
        return dataclasses.replace(tri, extras={"Q_grad": lambda y: _matvec(Q, y),
                                                "G_grad": lambda y: _matvec(G, y)})
    Qg, Qh, Gg, Gh = _convex_parts(params, n)
    zero = lambda t, y, psi: np.zeros(np.broadcast_shapes(np.shape(y), np.shape(psi)) + (n,))  # noqa: E731

    def b(t, y, psi):
        return -_matvec(BRB, psi) + 0.0 * y

    def g(t, y, psi):
        return Qg(y) + 0.0 * psi

    return GeneratorTriple(
        n, b, g, Gg,
        b_y=zero,
        b_psi=lambda t, y, psi: np.broadcast_to(-BRB, np.broadcast_shapes(np.shape(y), np.shape(psi))[:-1] + (n, n)),
        g_y=lambda t, y, psi: Qh(y + 0.0 * psi),
        g_psi=zero,
        h_y=Gh,
        flags=ClassFlags(H1=True, H2=False, H3=True, H3prime=True),
        name="linear_convex",
        extras={"Q_grad": Qg, "G_grad": Gg},
    )


def _componentwise(spec: Any):
    """Named componentwise drift ``F(y)_i = phi(y_i)``: returns (phi, phi', phi'')."""
    if isinstance(spec, Mapping) and spec.get("kind") == "tanh":
        s = float(spec.get("scale", 1.0))
        return (
            lambda y: s * np.tanh(y),
            lambda y: s / np.cosh(y) ** 2,
            lambda y: -2.0 * s * np.tanh(y) / np.cosh(y) ** 2,
        )
    raise ConfigError(f"generator: unsupported drift F specification {spec!r}")


def _aq(params: Mapping[str, Any]) -> GeneratorTriple:
    F = params.get("F")
    if F is None or (isinstance(F, Mapping) and float(F.get("scale", 1.0)) == 0.0):
        # F = 0: the AQ system is literally the linear-convex one.
        return dataclasses.replace(_linear_convex(params), name="aq")
    B, _, BRB = _control_gain(params)
    n = B.shape[0]
    Qg, Qh, Gg, Gh = _convex_parts(params, n)
    if callable(F):
        Fy, Fyy_psi = params["F_y"], params["F_yy_psi"]
        Ff = F
    else:
        phi, dphi, ddphi = _componentwise(F)
        Ff = phi
        Fy = lambda y: _diag_embed(dphi(y))  # noqa: E731
        Fyy_psi = lambda y, psi: _diag_embed(ddphi(y) * psi)  # noqa: E731

    def b(t, y, psi):
        return Ff(y) - _matvec(BRB, psi)

    def g(t, y, psi):
        return Qg(y) + np.einsum("...ji,...j->...i", Fy(y), psi)

    def shape(y, psi):
        return np.broadcast_shapes(np.shape(y), np.shape(psi))[:-1]

    return GeneratorTriple(
        n, b, g, Gg,
        b_y=lambda t, y, psi: np.broadcast_to(Fy(y), shape(y, psi) + (n, n)),
        b_psi=lambda t, y, psi: np.broadcast_to(-BRB, shape(y, psi) + (n, n)),
        g_y=lambda t, y, psi: Qh(y) + Fyy_psi(y, psi),
        g_psi=lambda t, y, psi: np.broadcast_to(np.swapaxes(Fy(y), -1, -2), shape(y, psi) + (n, n)),
        h_y=Gh,
        flags=ClassFlags(H1=True, H2=False, H3=True, H3prime=True),
        name="aq",
        extras={"Q_grad": Qg, "G_grad": Gg, "F_y": Fy},
    )


def _parabolic_logistic(params: Mapping[str, Any]) -> GeneratorTriple:
    n = int(params["n"])
    lam = float(params.get("lam", 1.0))
    W = float(params.get("N", 100.0))
    L = float(params.get("L", 1.0))
    M = float(params.get("M", 1.0))
    f = np.broadcast_to(np.asarray(params.get("f", 0.0), float), (n,)).copy()
    y_d = np.broadcast_to(np.asarray(params.get("y_d", 0.0), float), (n,)).copy()
    z = np.broadcast_to(np.asarray(params.get("z", 0.0), float), (n,)).copy()

    def b(t, y, psi):
        return -lam * y - psi * y**2 / W + f

    def g(t, y, psi):
        return -lam * psi - y * psi**2 / W + L * (y - y_d)

    def b_y(t, y, psi):
        return _diag_embed(-lam - 2.0 * y * psi / W)

    return GeneratorTriple(
        n, b, g, lambda y: M * (y - z),
        b_y=b_y,
        b_psi=lambda t, y, psi: _diag_embed(-(y**2) / W + 0.0 * psi),
        g_y=lambda t, y, psi: _diag_embed(L - psi**2 / W + 0.0 * y),
        g_psi=b_y,
        h_y=lambda y: _diag_embed(M + 0.0 * y),
        flags=ClassFlags(H1=True, H2=False, H3=True, H3prime=False),
        name="parabolic_logistic",
        extras={"operator": dirichlet_laplacian(n), "weight": W, "L": L, "lam": lam},
    )


def _monotone_toy(params: Mapping[str, Any]) -> GeneratorTriple:
    n = int(params.get("n", 1))
    s = float(params.get("sign", 1.0))
    I = np.eye(n)
    aff = AffineGenerator(np.zeros((n, n)), -s * I, s * I, np.zeros((n, n)))
    return aff.to_triple("monotone_toy")


def _custom_affine(params: Mapping[str, Any]) -> GeneratorTriple:
    keys = ("B11", "B12", "B21", "B22")
    present = [np.atleast_2d(np.asarray(params[k], float)) for k in keys if params.get(k) is not None]
    if "n" in params:
        n = int(params["n"])
    elif present:
        n = present[0].shape[0]
    else:
        raise ConfigError("generator: custom_affine needs n or at least one B matrix")
    Z = np.zeros((n, n))
    try:
        aff = AffineGenerator(
            *(Z if params.get(k) is None else params[k] for k in keys),
            b0=params.get("b0"), g0=params.get("g0"), H=params.get("H"), h0=params.get("h0"),
        )
    except ValueError as exc:
        raise ConfigError(f"generator: {exc}") from exc
    return aff.to_triple("custom_affine")


BUILTINS: dict[str, Callable[[Mapping[str, Any]], GeneratorTriple]] = {
    "lq": _lq,
    "linear_convex": _linear_convex,
    "aq": _aq,
    "parabolic_logistic": _parabolic_logistic,
    "custom_affine": _custom_affine,
    "monotone_toy": _monotone_toy,
}


def make_builtin(name: str, params: Mapping[str, Any] | None = None) -> GeneratorTriple:
    """Construct a built-in optimality-system generator.

    Parameters
    ----------
    name : {"lq", "linear_convex", "aq", "parabolic_logistic", "custom_affine", "monotone_toy"}
    params : mapping
        ``lq``: B, R, Q and optional S, G. ``linear_convex``: B, R and either
        matrices Q, G (quadratic costs) or callables Q_grad/Q_hess, G_grad/G_hess.
        ``aq``: as linear_convex plus F (``{"kind": "tanh", "scale": s}`` or a
        callable with F_y and F_yy_psi). ``parabolic_logistic``: n, lam, N, L, M,
        f, y_d, z. ``monotone_toy``: n, sign. ``custom_affine``: B11..B22, b0, g0, H, h0.
    """
    if name not in BUILTINS:
        raise ConfigError(f"generator: unknown builtin {name!r}")
    return BUILTINS[name](dict(params or {}))


def generator_from_config(spec: Mapping[str, Any]) -> GeneratorTriple:
    spec = dict(spec)
    name = spec.pop("builtin", None)
    if name is None:
        raise ConfigError("generator: missing field 'builtin'")
    try:
        return make_builtin(name, spec)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"generator {name}: bad parameters ({exc})") from exc


# -- sampling and profiles ---------------------------------------------------------


def ball_samples(n: int, radius: float, budget: int = 2048, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Scrambled Sobol points in the box ``|y_i|, |psi_i| <= radius`` plus the origin."""
    if budget < 1:
        raise ValueError("sample budget must be positive")
    m = max(int(np.ceil(np.log2(max(budget - 1, 1)))), 0)
    pts = qmc.Sobol(2 * n, scramble=True, seed=np.random.default_rng(seed)).random_base2(m)
    pts = radius * (2.0 * pts[: budget - 1] - 1.0)
    pts = np.vstack([np.zeros(2 * n), pts])
    return pts[:, :n].copy(), pts[:, n:].copy()


@dataclass(frozen=True)
class LipschitzProfile:
    """Sampled one-sided Lipschitz data along the grid.

    All values are lower bounds of the suprema over the whole space: they are
    maxima over a finite sample of the declared ball.
    """

    grid: TimeGrid
    L_by: np.ndarray
    L_gpsi: np.ndarray
    sup_b_psi: float
    sup_g_y: float
    sup_h_y: float
    radius: float
    budget: int
    seed: int
    unbounded_growth: bool


def _opnorm(J: np.ndarray) -> np.ndarray:
    return np.linalg.norm(J, ord=2, axis=(-2, -1))


def _sym_max_eig(J: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(0.5 * (J + np.swapaxes(J, -1, -2)))[..., -1]


def lipschitz_profile(
    gen: GeneratorTriple,
    grid: TimeGrid,
    sample_budget: int = 2048,
    radius: float = 1.0,
    seed: int = 0,
) -> LipschitzProfile:
    """Positive parts of the largest eigenvalues of sym(b_y), sym(g_psi) and sup norms.

    Time-dependent generators are sampled on at most 129 nodes; each node takes
    the larger of its two nearest sampled values.
    """
    ys, ps = ball_samples(gen.dim, radius, sample_budget, seed)
    if gen.time_dependent:
        idx = np.unique(np.linspace(0, grid.N, min(grid.N + 1, 129)).round().astype(int))
        times = grid.nodes[idx]
    else:
        idx = np.array([0])
        times = np.array([0.0])
    Lb, Lg, sbp, sgy = [], [], 0.0, 0.0
    for t in times:
        Lb.append(max(_sym_max_eig(gen.b_y(t, ys, ps)).max(), 0.0))
        Lg.append(max(_sym_max_eig(gen.g_psi(t, ys, ps)).max(), 0.0))
        sbp = max(sbp, _opnorm(gen.b_psi(t, ys, ps)).max())
        sgy = max(sgy, _opnorm(gen.g_y(t, ys, ps)).max())
    shy = float(_opnorm(gen.h_y(ys)).max())
    if len(times) == 1:
        L_by = np.full(grid.N + 1, Lb[0])
        L_gpsi = np.full(grid.N + 1, Lg[0])
    else:
        pos = np.searchsorted(idx, np.arange(grid.N + 1))
        lo = np.clip(pos - 1, 0, len(idx) - 1)
        hi = np.clip(pos, 0, len(idx) - 1)
        Lb, Lg = np.array(Lb), np.array(Lg)
        L_by = np.maximum(Lb[lo], Lb[hi])
        L_gpsi = np.maximum(Lg[lo], Lg[hi])
    growth = max(L_by.max(), L_gpsi.max(), sbp, sgy, shy) > GROWTH_FLAG
    return LipschitzProfile(grid, L_by, L_gpsi, float(sbp), float(sgy), shy,
                            float(radius), int(sample_budget), int(seed), bool(growth))


def jacobian_fd_error(gen: GeneratorTriple, t: float, y: np.ndarray, psi: np.ndarray,
                      step: float = 1e-5) -> float:
    """Largest scaled central-difference mismatch over the five Jacobians at one point."""
    n = gen.dim
    y = np.asarray(y, float)
    psi = np.asarray(psi, float)
    E = np.eye(n) * step
    fd = {
        "b_y": (gen.b(t, y + E, psi) - gen.b(t, y - E, psi)).T / (2 * step),
        "b_psi": (gen.b(t, y, psi + E) - gen.b(t, y, psi - E)).T / (2 * step),
        "g_y": (gen.g(t, y + E, psi) - gen.g(t, y - E, psi)).T / (2 * step),
        "g_psi": (gen.g(t, y, psi + E) - gen.g(t, y, psi - E)).T / (2 * step),
        "h_y": (gen.h(y + E) - gen.h(y - E)).T / (2 * step),
    }
    err = 0.0
    for key, J_fd in fd.items():
        J = gen.h_y(y) if key == "h_y" else getattr(gen, key)(t, y, psi)
        J = np.asarray(J, float)
        err = max(err, np.abs(J_fd - J).max() / max(np.abs(J).max(), 1.0))
    return float(err)

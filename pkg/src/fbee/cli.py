"""Command-line front end.

Subcommands: ``solve-linear``, ``solve-continuation``, ``check-lyapunov``,
``run-example`` and ``convergence``. Exit codes follow the error taxonomy: 0 ok,
2 singular operator, 3 non-convergence, 4 certificate failure, 5 invalid config.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .continuation import energy_bound_check, solve_continuation
from .errors import CertificateFailure, ConfigError, FBEEError, NonConvergenceError
from .generators import GeneratorTriple, ball_samples, generator_from_config, make_builtin
from .linear import Forcing, TrajectoryPair, solve_fredholm, solve_shooting_skew, solve_via_decoupling
from .lyapunov import (
    ClosedFormParams,
    LyapunovCertificate,
    Verdict,
    check_cor78_monotone,
    check_theorem71,
    check_thm75_cor76,
    closed_form_certificate,
    energy_identity_residual,
)
from .spectral import SpectralOperator, TimeGrid, dirichlet_laplacian, operator_from_config

__all__ = ["ProblemConfig", "main", "run_problem", "run_example", "convergence_study", "load_config"]

log = logging.getLogger("fbee")

SOLVERS = ("fredholm", "shooting", "riccati", "continuation")
CHECKS = ("theorem71", "thm75", "cor76", "cor77", "cor78", "cor79i", "cor79ii", "cor79iii", "monotone_block")


# -- configuration -----------------------------------------------------------------


class ForcingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    b0: Optional[list[float] | float] = None
    g0: Optional[list[float] | float] = None
    h0: Optional[list[float] | float] = None
    profile: Literal["const", "sin", "kink"] = "const"


class CertificateConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    check: Literal[CHECKS] = "theorem71"  # type: ignore[valid-type]
    p1: float = 1.0
    pbar0: float = 1.0
    q0: float = 1.0
    qbar0: float = 1.0
    gamma: float = 0.0
    theta: float = 0.0
    m: float = 0.0
    mbar: Optional[float] = None
    ball: float = Field(1.0, gt=0)
    budget: int = Field(256, ge=1)
    delta: float = Field(1e-8, gt=0)

    def params(self) -> ClosedFormParams:
        return ClosedFormParams(self.p1, self.pbar0, self.q0, self.qbar0, self.gamma, self.theta,
                                self.m, self.mbar)


class ToleranceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    inner_tol: float = Field(1e-8, gt=0)
    max_inner: int = Field(200, ge=1)
    epsilon: float = Field(0.25, gt=0, le=1)


class ProblemConfig(BaseModel):
    """Validated problem description (one problem per invocation)."""

    model_config = ConfigDict(extra="forbid")

    operator: dict[str, Any]
    generator: dict[str, Any]
    T: float = Field(gt=0)
    N: int = Field(ge=2)
    x: list[float]
    solver: Literal[SOLVERS] = "continuation"  # type: ignore[valid-type]
    forcing: ForcingConfig = Field(default_factory=ForcingConfig)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)
    certificate: Optional[CertificateConfig] = None
    out: Optional[str] = None
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("x")
    @classmethod
    def _nonempty(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("x must be nonempty")
        return v

    def build(self) -> tuple[SpectralOperator, GeneratorTriple, TimeGrid, np.ndarray, Forcing]:
        try:
            A = operator_from_config(self.operator)
        except ValueError as exc:
            raise ConfigError(f"operator: {exc}") from exc
        gen = generator_from_config(self.generator)
        n = len(self.x)
        if not (A.dim == gen.dim == n):
            raise ConfigError(
                f"dimension mismatch: operator {A.dim}, generator {gen.dim}, x {n}"
            )
        return A, gen, TimeGrid(self.T, self.N), np.asarray(self.x, float), forcing_from_config(self.forcing, n, self.T)


def _profile(kind: str, T: float):
    if kind == "const":
        return lambda t: 1.0
    if kind == "sin":
        return lambda t: np.sin(2 * np.pi * t / T)
    return lambda t: abs(t - 0.5 * T)


def forcing_from_config(fc: ForcingConfig, n: int, T: float) -> Forcing:
    shape = _profile(fc.profile, T)

    def vec(v):
        if v is None:
            return None
        a = np.broadcast_to(np.asarray(v, float), (n,)).copy() if np.ndim(v) == 0 or len(v) == n else None
        if a is None:
            raise ConfigError(f"forcing vector has length {len(v)}, expected {n}")
        return a

    b0, g0, h0 = vec(fc.b0), vec(fc.g0), vec(fc.h0)
    if fc.profile != "const":
        b0 = None if b0 is None else (lambda t, v=b0: v * shape(t))
        g0 = None if g0 is None else (lambda t, v=g0: v * shape(t))
    return Forcing(b0, g0, h0)


def load_config(path: str | os.PathLike) -> ProblemConfig:
    """Read and validate a JSON config; every failure is a :class:`ConfigError`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw)


def parse_config(raw: Any) -> ProblemConfig:
    try:
        return ProblemConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = "; ".join(f"{'.'.join(map(str, e['loc'])) or '<root>'}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"invalid config: {msgs}") from exc


# -- artifacts ---------------------------------------------------------------------


def write_trajectory_csv(path: Path, traj: TrajectoryPair) -> None:
    n = traj.y.shape[1]
    header = ",".join(["t"] + [f"y_{i}" for i in range(n)] + [f"psi_{i}" for i in range(n)])
    data = np.column_stack([traj.grid.nodes, traj.y, traj.psi])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.16e")


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _out_dir(out: str | None) -> Path:
    p = Path(out or "fbee_out")
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- dispatch ----------------------------------------------------------------------


def solve(A, gen, grid, x, forcing: Forcing, solver: str, tol: ToleranceConfig, certificate=None):
    """Run one solver; returns ``(trajectory, extra report fields)``."""
    if solver == "continuation":
        traj, state = solve_continuation(A, gen, x, grid, forcing, epsilon=tol.epsilon,
                                         inner_tol=tol.inner_tol, max_inner=tol.max_inner,
                                         certificate=certificate)
        return traj, {"continuation": state.to_dict()}
    if gen.affine is None:
        raise ConfigError(f"solver {solver!r} needs an affine generator; {gen.name} is nonlinear")
    aff = gen.affine.with_forcing(forcing.b0, forcing.g0, forcing.h0)
    if solver == "fredholm":
        traj = solve_fredholm(A, aff, x, grid)
        return traj, {"condition": traj.info.get("condition")}
    if solver == "shooting":
        traj = solve_shooting_skew(A, aff, x, grid)
        return traj, {"sigma_min": traj.info.get("sigma_min")}
    traj = solve_via_decoupling(A, aff, x, grid)
    return traj, {"halving_gap": traj.info["riccati"].info.get("halving_gap")}


def run_certificate(A, gen, grid, cc: CertificateConfig, seed: int):
    """Evaluate the requested certificate; returns a JSON-ready dict and a pass flag."""
    if cc.check == "cor78":
        mc = check_cor78_monotone(gen, cc.ball, cc.budget, grid=grid, seed=seed)
        return dict(mc.to_dict(), check="cor78", verdict="Both" if mc.holds else "Fail"), mc.holds
    if cc.check == "theorem71":
        cert = check_theorem71(A, gen, closed_form_certificate(A, cc.params(), grid), cc.ball, cc.budget,
                               delta=cc.delta, seed=seed)
    else:
        cert = check_thm75_cor76(A, gen, cc.params(), grid, cc.ball, which=cc.check, delta=cc.delta,
                                 delta_bar=cc.delta, sample_budget=cc.budget, seed=seed)
    return cert.to_dict(), cert.verdict is Verdict.BOTH


def _summary(traj: TrajectoryPair) -> dict:
    return {
        "solver": traj.solver_tag,
        "mild_residual": traj.mild_residual,
        "psi_0": traj.psi[0].tolist(),
        "y_T": traj.y[-1].tolist(),
        "sup_y": float(np.abs(traj.y).max()),
        "sup_psi": float(np.abs(traj.psi).max()),
    }


def run_problem(config: ProblemConfig, out: str | None = None, solver: str | None = None,
                certificate_path: str | None = None, seed: int | None = None) -> int:
    """Solve one configured problem and write its artifacts.

    Writes ``trajectory.csv``, ``report.json`` (deterministic), ``timings.json`` and,
    when a certificate is requested, ``certificate.json``. Returns the exit code;
    library errors propagate to :func:`main`.
    """
    seed = config.seed if seed is None else seed
    solver = solver or config.solver
    outdir = _out_dir(out or config.out)
    A, gen, grid, x, forcing = config.build()
    report: dict[str, Any] = {"version": __version__, "seed": seed, "T": grid.T, "N": grid.N,
                              "n": A.dim, "solver": solver, "generator": gen.name}
    timings: dict[str, float] = {}
    attached = None
    if config.certificate is not None:
        t0 = time.perf_counter()
        cert_dict, ok = run_certificate(A, gen, grid, config.certificate, seed)
        timings["certificate"] = time.perf_counter() - t0
        _write_json(outdir / "certificate.json", cert_dict)
        report["certificate"] = {"check": cert_dict.get("check"), "verdict": cert_dict.get("verdict")}
        if not ok:
            _write_json(outdir / "report.json", report)
            _write_json(outdir / "timings.json", timings)
            raise CertificateFailure(f"certificate {config.certificate.check} failed")
        attached = _RadiusOnly(config.certificate.ball)
    if certificate_path:
        attached = _load_attached_certificate(certificate_path)
        report["attached_certificate"] = {"path": str(certificate_path), "verdict": attached.verdict}
    t0 = time.perf_counter()
    traj, extra = solve(A, gen, grid, x, forcing, solver, config.tolerances, attached)
    timings["solve"] = time.perf_counter() - t0
    if "continuation" in extra:
        timings["continuation_seconds"] = extra["continuation"]["info"].pop("seconds", None)
    report.update(_summary(traj), **extra)
    write_trajectory_csv(outdir / "trajectory.csv", traj)
    _write_json(outdir / "report.json", report)
    _write_json(outdir / "timings.json", timings)
    return 0


class _RadiusOnly:
    def __init__(self, radius: float, verdict: str | None = None):
        self.sample_ball_radius = radius
        self.verdict = verdict


def _load_attached_certificate(path: str) -> _RadiusOnly:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read certificate {path}: {exc}") from exc
    radius = data.get("sample_ball_radius", data.get("radius"))
    if radius is None:
        raise ConfigError(f"certificate {path} records no sample ball radius")
    if data.get("verdict") not in ("Both", "TypeI", "TypeII"):
        log.warning("attached certificate has verdict %s", data.get("verdict"))
    return _RadiusOnly(float(radius), data.get("verdict"))


def check_lyapunov(config: ProblemConfig, params: str | None, ball: float | None, budget: int | None,
                   check: str | None, out: str | None, seed: int | None) -> int:
    cc = config.certificate or CertificateConfig()
    upd: dict[str, Any] = {}
    if params:
        try:
            vals = [float(v) for v in params.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--params: {exc}") from exc
        if len(vals) != 7:
            raise ConfigError("--params expects p1,pbar0,q0,qbar0,gamma,theta,m")
        upd.update(dict(zip(("p1", "pbar0", "q0", "qbar0", "gamma", "theta", "m"), vals)))
    if ball is not None:
        upd["ball"] = ball
    if budget is not None:
        upd["budget"] = budget
    if check is not None:
        upd["check"] = check
    try:
        cc = CertificateConfig.model_validate(dict(cc.model_dump(), **upd))
    except ValidationError as exc:
        raise ConfigError(f"certificate options: {exc.errors()[0]['msg']}") from exc
    seed = config.seed if seed is None else seed
    A, gen, grid, _, _ = config.build()
    cert, ok = run_certificate(A, gen, grid, cc, seed)
    outdir = _out_dir(out or config.out)
    _write_json(outdir / "certificate.json", cert)
    if not ok:
        raise CertificateFailure(f"certificate {cc.check} failed")
    return 0


# -- examples ----------------------------------------------------------------------

EXAMPLE_91 = {
    "A": [-1.0, -2.0, -3.0, -4.0],
    "B": np.eye(4), "R": np.eye(4), "Q": np.diag([1.0, 0.8, 0.6, 0.5]), "G": 0.5 * np.eye(4),
    "T": 1.0, "N": 1000, "x": np.ones(4),
}


def _example_linear(F_scale: float):
    d = EXAMPLE_91
    A = SpectralOperator("symmetric", d["A"])
    params = {"B": d["B"], "R": d["R"], "Q": d["Q"], "G": d["G"]}
    if F_scale:
        params["F"] = {"kind": "tanh", "scale": F_scale}
    gen = make_builtin("aq" if F_scale else "linear_convex", params)
    return A, gen, TimeGrid(d["T"], d["N"]), d["x"].copy()


def _psd_min(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def run_example(name: str, out: str | None = None, seed: int = 0, F_scale: float | None = None) -> dict:
    """Build, certify and solve one of the desk-scale examples; returns the report.

    ``9.1`` linear-convex LQ (n=4), ``9.2`` the same with the drift
    ``F = F_scale * tanh`` (default 0.1; 0 reproduces 9.1), ``9.3`` the parabolic
    logistic control system on 32 interior nodes.
    """
    outdir = _out_dir(out)
    report: dict[str, Any] = {"example": name, "seed": seed}
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    if name in ("9.1", "9.2"):
        scale = 0.0 if name == "9.1" else (0.1 if F_scale is None else float(F_scale))
        A, gen, grid, x = _example_linear(scale)
        d = EXAMPLE_91
        BRB = d["B"] @ np.linalg.inv(d["R"]) @ d["B"].T
        checks = {"R>=delta": _psd_min(d["R"]), "G>=0": _psd_min(d["G"]), "Q>=delta": _psd_min(d["Q"])}
        if scale:
            # Q_yy >= |F_y| (|G_y|_inf + |Q_y|_inf T) + delta on the sampled unit box
            ys, _ = ball_samples(4, 1.0, 256, seed)
            Gy = np.linalg.norm(ys @ d["G"].T, axis=1).max()
            Qy = np.linalg.norm(ys @ d["Q"].T, axis=1).max()
            Fy = scale  # sup |d tanh| = 1
            checks = {"G_yy>=0": _psd_min(d["G"]), "BR^-1B^T>=delta": _psd_min(BRB),
                      "Q_yy-bound": _psd_min(d["Q"]) - Fy * (Gy + Qy * grid.T)}
        report["conditions"] = checks
        report["conditions_hold"] = bool(min(checks.values()) > 0)
        mono = check_cor78_monotone(gen, 1.0, 256, seed=seed)
        report["cor78"] = mono.to_dict()
        traj, state = solve_continuation(A, gen, x, grid)
        report["continuation"] = state.to_dict()
        report["continuation"]["info"].pop("seconds", None)
        if gen.affine is not None:
            ref = solve_via_decoupling(A, gen.affine, x, grid)
            report["riccati_distance"] = traj.distance(ref)
            report["riccati_agrees"] = bool(traj.distance(ref) <= 1e-5)
        eb = energy_bound_check(gen, traj, x, ball_radius=1.0, seed=seed)
        report["energy_bounds"] = eb.to_dict()
    elif name == "9.3":
        n = 32
        gen = make_builtin("parabolic_logistic", {"n": n, "lam": 1.0, "N": 100.0, "L": 1.0, "M": 1.0,
                                                  "f": 1.0, "y_d": 0.0, "z": 0.0})
        A = gen.extras["operator"]
        grid = TimeGrid(0.5, 200)
        xi = np.arange(1, n + 1) / (n + 1)
        x = np.sin(np.pi * xi)
        traj, state = solve_continuation(A, gen, x, grid)
        report["continuation"] = state.to_dict()
        report["continuation"]["info"].pop("seconds", None)
        sup_psi = float(np.abs(traj.psi).max())
        radius = max(1.05 * max(sup_psi, float(np.abs(traj.y).max())), 1e-3)
        cert = check_thm75_cor76(A, gen, None, grid, radius, which="monotone_block", sample_budget=512, seed=seed)
        report["certificate"] = cert.to_dict()
        report["psi_bounded"] = bool(np.isfinite(sup_psi) and sup_psi <= np.sqrt(100.0 * 1.0))
        report["certificate_passes"] = cert.verdict is Verdict.BOTH
        _write_json(outdir / "certificate.json", cert.to_dict())
    else:
        raise ConfigError(f"unknown example {name!r}; choose 9.1, 9.2 or 9.3")
    timings["total"] = time.perf_counter() - t0
    report.update(_summary(traj))
    write_trajectory_csv(outdir / "trajectory.csv", traj)
    _write_json(outdir / "report.json", report)
    _write_json(outdir / "timings.json", timings)
    return report


# -- convergence -------------------------------------------------------------------


def _fit_order(Ns, errs) -> float | None:
    Ns, errs = np.asarray(Ns, float), np.asarray(errs, float)
    ok = np.isfinite(errs) & (errs > 0)
    if ok.sum() < 2:
        return None
    slope = np.polyfit(np.log(Ns[ok]), np.log(errs[ok]), 1)[0]
    return float(-slope)


def convergence_study(config: ProblemConfig, N_list: list[int], out: str | None = None,
                      solver: str | None = None) -> dict:
    """Residuals and self-convergence error over a list of grid sizes.

    The error of the ``N`` run is its sup distance, at its own nodes, from a run on
    ``2 max(N)`` nodes; the observed order is the negated log-log slope of that
    error. Order fits on ``mild_residual`` and the energy-identity residual are
    reported alongside when those are above roundoff.
    """
    solver = solver or config.solver
    N_list = sorted(set(int(N) for N in N_list))
    A, gen, _, x, forcing = config.build()
    T = config.T
    cc = config.certificate or CertificateConfig()
    rows = []

    def run(N):
        grid = TimeGrid(T, N)
        t0 = time.perf_counter()
        traj, _ = solve(A, gen, grid, x, forcing, solver, config.tolerances)
        return traj, time.perf_counter() - t0

    try:
        ref, _ = run(2 * N_list[-1])
        for N in N_list:
            traj, secs = run(N)
            err = max(
                max(np.abs(np.interp(traj.grid.nodes, ref.grid.nodes, ref.y[:, i]) - traj.y[:, i]).max(),
                    np.abs(np.interp(traj.grid.nodes, ref.grid.nodes, ref.psi[:, i]) - traj.psi[:, i]).max())
                for i in range(A.dim)
            )
            energy = float("nan")
            if gen.affine is not None:
                aff = gen.affine.with_forcing(forcing.b0, forcing.g0, forcing.h0)
                try:
                    energy = energy_identity_residual(A, aff, traj, closed_form_certificate(A, cc.params(), traj.grid))
                except FBEEError:
                    energy = float("nan")
            rows.append({"N": N, "mild_residual": traj.mild_residual, "energy_identity_residual": energy,
                         "self_convergence_error": float(err), "runtime": secs})
    except FBEEError as exc:
        raise NonConvergenceError(f"convergence study failed: {exc}") from exc
    Ns = [r["N"] for r in rows]
    order = _fit_order(Ns, [r["self_convergence_error"] for r in rows])
    floor = 1e-12
    mild = [r["mild_residual"] for r in rows]
    en = [r["energy_identity_residual"] for r in rows]
    result = {
        "solver": solver,
        "rows": rows,
        "order": order,
        "order_mild_residual": _fit_order(Ns, mild) if min(mild) > floor else None,
        "order_energy_identity": _fit_order(Ns, en) if np.all(np.isfinite(en)) and min(en) > floor else None,
        "order_ok": None if order is None else bool(order >= 1.8),
        "profile": config.forcing.profile,
    }
    if order is None:
        log.warning("convergence study with fewer than two grid sizes: no order fit")
    outdir = _out_dir(out or config.out)
    with open(outdir / "convergence.csv", "w") as fh:
        fh.write("N,mild_residual,energy_identity_residual,self_convergence_error,runtime\n")
        for r in rows:
            fh.write(f"{r['N']},{r['mild_residual']:.16e},{r['energy_identity_residual']:.16e},"
                     f"{r['self_convergence_error']:.16e},{r['runtime']:.6e}\n")
    _write_json(outdir / "convergence.json", {k: v for k, v in result.items() if k != "rows"})
    return result


# -- entry point -------------------------------------------------------------------


def _configure_logging() -> None:
    level = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("FBEE_LOG", "").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("fbee").setLevel(level)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fbee", description="Solve and certify forward-backward evolution equations.")
    p.add_argument("--version", action="version", version=f"fbee {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="problem config (JSON)")
        sp.add_argument("--out", help="output directory (default: config 'out' or ./fbee_out)")
        sp.add_argument("--seed", type=int, help="sampling seed (overrides config)")

    sp = sub.add_parser("solve-linear", help="solve an affine FBEE with a linear solver")
    common(sp)
    sp.add_argument("--solver", choices=("fredholm", "shooting", "riccati"), default="riccati")
    sp.add_argument("--certificate", help="attach a certificate JSON")

    sp = sub.add_parser("solve-continuation", help="solve by the method of continuation")
    common(sp)
    sp.add_argument("--certificate", help="attach a certificate JSON (ball radius is checked)")

    sp = sub.add_parser("check-lyapunov", help="evaluate a closed-form Lyapunov certificate")
    common(sp)
    sp.add_argument("--params", help="p1,pbar0,q0,qbar0,gamma,theta,m")
    sp.add_argument("--ball", type=float, help="sample box radius")
    sp.add_argument("--budget", type=int, help="number of samples")
    sp.add_argument("--check", choices=CHECKS)

    sp = sub.add_parser("run-example", help="run a desk-scale example")
    sp.add_argument("name", choices=("9.1", "9.2", "9.3"))
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--F-scale", type=float, dest="F_scale", help="drift scale for 9.2")

    sp = sub.add_parser("convergence", help="grid-refinement study")
    common(sp)
    sp.add_argument("--N-list", dest="N_list", default="250,500,1000,2000")
    sp.add_argument("--solver", choices=SOLVERS)
    return p


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = _parser().parse_args(argv)
    try:
        if args.command == "run-example":
            rep = run_example(args.name, args.out, args.seed, args.F_scale)
            ok = rep.get("certificate_passes", True) and rep.get("riccati_agrees", True)
            return 0 if ok else 4
        config = load_config(args.config)
        if args.command == "solve-linear":
            return run_problem(config, args.out, args.solver, args.certificate, args.seed)
        if args.command == "solve-continuation":
            return run_problem(config, args.out, "continuation", args.certificate, args.seed)
        if args.command == "check-lyapunov":
            return check_lyapunov(config, args.params, args.ball, args.budget, args.check, args.out, args.seed)
        try:
            N_list = [int(v) for v in args.N_list.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"--N-list: {exc}") from exc
        if not N_list:
            raise ConfigError("--N-list is empty")
        convergence_study(config, N_list, args.out, args.solver)
        return 0
    except FBEEError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

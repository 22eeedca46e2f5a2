from __future__ import annotations

import numpy as np
import pytest
from helpers import lq_psi0_oracle, random_monotone_affine, random_spd, rotation, scalar_lq
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from fbee.errors import FredholmSingularError, HypothesisError, RiccatiBlowUpError, ShootingSingularError
from fbee.generators import AffineGenerator, make_builtin
from fbee.linear import (
    Forcing,
    evolution_operator,
    integrate_riccati,
    mild_residual,
    riccati_monotone_iteration,
    solve_fredholm,
    solve_shooting_skew,
    solve_via_decoupling,
    verify_decoupling_field,
)
from fbee.spectral import SpectralOperator, TimeGrid, duhamel_sweep, duhamel_sweep_backward, yosida_apply

ZERO = np.zeros((1, 1))


def test_evolution_operator_examples():
    A = SpectralOperator("symmetric", [-1.0, -2.5])
    g = TimeGrid(1.0, 100)
    np.testing.assert_allclose(evolution_operator(A, np.zeros((2, 2)), g, 70, 20), expm(A.dense() * 0.5),
                               atol=1e-13)
    Z = SpectralOperator("skew", [], zero_modes=1)
    g2 = TimeGrid(1.0, 1000)
    assert evolution_operator(Z, np.array([[0.7]]), g2, 1000, 0)[0, 0] == pytest.approx(np.exp(0.7), abs=1e-8)
    np.testing.assert_array_equal(evolution_operator(A, np.zeros((2, 2)), g, 5, 5), np.eye(2))


def test_evolution_operator_cocycle():
    rng = np.random.default_rng(2)
    A = SpectralOperator("symmetric", -rng.uniform(0.5, 3, 4))
    M0, M1 = rng.standard_normal((2, 4, 4))
    B = lambda t: M0 + np.sin(3 * t) * M1  # noqa: E731
    g = TimeGrid(1.0, 1000)
    full = evolution_operator(A, B, g, 1000, 0)
    split = evolution_operator(A, B, g, 1000, 500) @ evolution_operator(A, B, g, 500, 0)
    assert np.abs(full - split).max() <= 1e-6


def test_scalar_lq_riccati_closed_form():
    A, aff = scalar_lq()
    g = TimeGrid(1.0, 2000)
    ric = integrate_riccati(A, aff, g)
    r = np.sqrt(2.0)
    c = -r - np.arctanh(1 / r)
    exact = -1 - r * np.tanh(r * g.nodes + c)
    assert np.abs(ric.P[:, 0, 0] - exact).max() < 1e-10
    assert ric.P[0, 0, 0] == pytest.approx(lq_psi0_oracle(), abs=1e-10)
    assert np.all(ric.P[:, 0, 0] >= 0) and np.all(ric.P[:, 0, 0] <= r - 1)
    assert ric.P[-1, 0, 0] == 0.0 and ric.p[-1, 0] == 0.0


def test_riccati_picard_route_agrees():
    A, aff = scalar_lq()
    g = TimeGrid(1.0, 400)
    a = integrate_riccati(A, aff, g)
    b = integrate_riccati(A, aff, g, route="picard_mild")
    assert np.abs(a.P - b.P).max() < 1e-5


def test_riccati_linear_case_matches_lyapunov_integral():
    # B12 = 0: P(t) = e^{A(T-t)} H e^{A(T-t)} + int_t^T e^{2A(s-t)} B21 ds for scalar A
    A = SpectralOperator("symmetric", [-2.0])
    aff = AffineGenerator(ZERO, ZERO, np.array([[3.0]]), ZERO, H=np.array([[0.5]]))
    g = TimeGrid(1.0, 200)
    P0 = integrate_riccati(A, aff, g).P[0, 0, 0]
    exact = 0.5 * np.exp(-4.0) + 3.0 * (1 - np.exp(-4.0)) / 4.0
    assert P0 == pytest.approx(exact, abs=1e-9)


def test_riccati_blowup_detected():
    # P' = -P^2 - 1 backward from P(T)=0 is tan(T - t): blows up before T - t = pi/2
    A = SpectralOperator("skew", [], zero_modes=1)
    aff = AffineGenerator(ZERO, np.eye(1), np.eye(1), ZERO)
    with pytest.raises(RiccatiBlowUpError):
        integrate_riccati(A, aff, TimeGrid(2.0, 4000), check_halving=False)


def test_fredholm_scalar_lq():
    A, aff = scalar_lq()
    tr = solve_fredholm(A, aff, np.ones(1), TimeGrid(1.0, 2000))
    assert tr.psi[0, 0] == pytest.approx(lq_psi0_oracle(), abs=1e-3)
    assert tr.y[0, 0] == 1.0
    assert tr.mild_residual < 1e-8


def test_fredholm_decoupled_case():
    A = SpectralOperator("symmetric", [-1.0, -2.0])
    aff = AffineGenerator(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)),
                          g0=[1.0, 0.0], H=np.eye(2), h0=[0.0, 1.0])
    g = TimeGrid(1.0, 200)
    x = np.array([1.0, -1.0])
    tr = solve_fredholm(A, aff, x, g)
    y = duhamel_sweep(A, g, np.zeros((201, 2)), x)
    psi = duhamel_sweep_backward(A, g, y + [1.0, 0.0], y[-1] + [0.0, 1.0])
    np.testing.assert_allclose(tr.y, y, atol=1e-12)
    np.testing.assert_allclose(tr.psi, psi, atol=1e-12)


def test_fredholm_rotation_singular():
    A, aff = rotation()
    with pytest.raises(FredholmSingularError):
        solve_fredholm(A, aff, np.ones(1), TimeGrid(np.pi / 2, 400))


def test_shooting_rotation():
    A, aff = rotation()
    tr = solve_shooting_skew(A, aff, np.ones(1), TimeGrid(np.pi / 4, 1000))
    assert tr.psi[0, 0] == pytest.approx(1.0, abs=1e-6)
    t = tr.grid.nodes
    np.testing.assert_allclose(tr.y[:, 0], np.cos(t) + np.sin(t), atol=1e-6)
    with pytest.raises(ShootingSingularError):
        solve_shooting_skew(A, aff, np.ones(1), TimeGrid(np.pi / 2, 1000))


def test_shooting_decoupled_returns_h0():
    A = SpectralOperator("skew", [1.0])
    aff = AffineGenerator(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), h0=[0.3, -0.2])
    tr = solve_shooting_skew(A, aff, np.ones(2), TimeGrid(1.0, 100))
    np.testing.assert_allclose(tr.psi[-1], [0.3, -0.2], atol=1e-14)


def test_shooting_refuses_symmetric():
    A, aff = scalar_lq()
    with pytest.raises(HypothesisError):
        solve_shooting_skew(A, aff, np.ones(1), TimeGrid(1.0, 10))


def test_shooting_and_fredholm_agree_on_skew():
    A = SpectralOperator("skew", [1.3], zero_modes=1)
    rng = np.random.default_rng(4)
    aff = random_monotone_affine(rng, 3, forcing=True)
    g = TimeGrid(1.0, 2000)
    x = rng.standard_normal(3)
    a = solve_shooting_skew(A, aff, x, g)
    b = solve_fredholm(A, aff, x, g)
    assert a.distance(b) <= 1e-5


def test_monotone_iteration_scalar():
    A, aff = scalar_lq()
    g = TimeGrid(1.0, 1000)
    res = riccati_monotone_iteration(A, aff, g)
    assert res.converged
    P1 = res.iterates[1][0, 0, 0]
    assert P1 == pytest.approx((1 - np.exp(-2.0)) / 2, abs=1e-9)
    assert res.iterates[2][0, 0, 0] < P1
    assert res.P[0, 0, 0] == pytest.approx(lq_psi0_oracle(), abs=1e-8)


def test_monotone_iteration_zero_data():
    A = SpectralOperator("symmetric", [-1.0, -2.0])
    aff = AffineGenerator(np.zeros((2, 2)), -np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
    res = riccati_monotone_iteration(A, aff, TimeGrid(1.0, 50))
    assert all(np.abs(P).max() == 0 for P in res.iterates)


def test_monotone_iteration_rejects_bad_signs():
    A, _ = scalar_lq()
    aff = AffineGenerator(ZERO, np.eye(1), np.eye(1), ZERO)
    with pytest.raises(HypothesisError):
        riccati_monotone_iteration(A, aff, TimeGrid(1.0, 10))


def test_decoupling_scalar_and_lq_cross_check():
    A, aff = scalar_lq()
    tr = solve_via_decoupling(A, aff, np.ones(1), TimeGrid(1.0, 2000))
    assert tr.psi[0, 0] == pytest.approx(lq_psi0_oracle(), abs=1e-8)
    assert tr.mild_residual < 1e-6

    rng = np.random.default_rng(11)
    A4 = SpectralOperator("symmetric", [-0.5, -1.0, -2.0, -3.0])
    gen = make_builtin("lq", {"B": np.eye(4), "R": np.eye(4), "Q": random_spd(rng, 4), "G": random_spd(rng, 4)})
    g = TimeGrid(1.0, 1000)
    x = rng.standard_normal(4)
    a = solve_via_decoupling(A4, gen.affine, x, g)
    b = solve_fredholm(A4, gen.affine, x, g)
    assert a.distance(b) <= 1e-5
    assert a.distance(b) <= 10 * (a.mild_residual + b.mild_residual) + 1e-12


def test_decoupling_trivial_case():
    A = SpectralOperator("symmetric", [-1.0])
    aff = AffineGenerator(ZERO, -np.eye(1), ZERO, ZERO, b0=[2.0])
    g = TimeGrid(1.0, 100)
    tr = solve_via_decoupling(A, aff, np.ones(1), g)
    np.testing.assert_array_equal(tr.psi, 0.0)
    np.testing.assert_allclose(tr.y, duhamel_sweep(A, g, np.full((101, 1), 2.0), np.ones(1)), atol=1e-12)


def test_decoupling_field_residual_order():
    A, aff = scalar_lq()
    gen = aff.to_triple()
    res = []
    for N in (100, 200):
        g = TimeGrid(1.0, N)
        ric = integrate_riccati(A, aff, g)
        tr = solve_via_decoupling(A, aff, np.ones(1), g, ric)
        rep = verify_decoupling_field(A, gen, ric, tr)
        assert rep.consistency < 1e-14 and rep.terminal < 1e-14
        res.append(rep.pde_residual)
    assert 3.2 < res[0] / res[1] < 4.8


def test_decoupling_field_zero():
    A = SpectralOperator("symmetric", [-1.0])
    aff = AffineGenerator(ZERO, -np.eye(1), ZERO, ZERO, b0=[1.0])
    g = TimeGrid(1.0, 50)
    ric = integrate_riccati(A, aff, g)
    tr = solve_via_decoupling(A, aff, np.ones(1), g, ric)
    rep = verify_decoupling_field(A, aff.to_triple(), ric, tr)
    assert max(rep.pde_residual, rep.consistency, rep.terminal) <= 1e-12


def test_forced_problem_against_ivp():
    # time-dependent forcing: compare the decoupled solve with a fine BVP-free reference
    A, aff = scalar_lq()
    aff = aff.with_forcing(b0=lambda t: np.array([np.sin(t)]), h0=[0.2])
    g = TimeGrid(1.0, 2000)
    tr = solve_via_decoupling(A, aff, np.ones(1), g)
    ric = tr.info["riccati"]
    # closed loop y' = (-1 - P) y - p + sin t integrated by solve_ivp from the computed P, p
    P = lambda t: np.interp(t, g.nodes, ric.P[:, 0, 0])  # noqa: E731
    p = lambda t: np.interp(t, g.nodes, ric.p[:, 0])  # noqa: E731
    sol = solve_ivp(lambda t, y: (-1 - P(t)) * y - p(t) + np.sin(t), (0, 1), [1.0], rtol=1e-10, atol=1e-12,
                    dense_output=True)
    assert np.abs(sol.sol(g.nodes)[0] - tr.y[:, 0]).max() < 1e-5
    assert tr.psi[-1, 0] == pytest.approx(0.2, abs=1e-14)
    assert mild_residual(A, aff.to_triple(), g, np.ones(1), tr.y, tr.psi) < 1e-6


def test_yosida_regularized_solution_converges():
    A = SpectralOperator("symmetric", [-1.0, -4.0])
    rng = np.random.default_rng(8)
    aff = random_monotone_affine(rng, 2, forcing=True)
    g = TimeGrid(1.0, 1000)
    x = np.ones(2)
    exact = solve_via_decoupling(A, aff, x, g)
    gaps = [solve_via_decoupling(yosida_apply(A, lam), aff, x, g).distance(exact) for lam in (10.0, 100.0, 1000.0)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-2


def test_forcing_sampling():
    g = TimeGrid(1.0, 4)
    b0, g0, h0 = Forcing(b0=lambda t: np.array([t, 2 * t]), h0=[1.0, 2.0]).sample(g, 2)
    np.testing.assert_allclose(b0[:, 1], 2 * g.nodes)
    np.testing.assert_array_equal(g0, 0.0)
    np.testing.assert_array_equal(h0, [1.0, 2.0])

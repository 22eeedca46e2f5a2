from __future__ import annotations

import json

import numpy as np
import pytest
from helpers import random_monotone_affine
from hypothesis import given, settings
from hypothesis import strategies as st

from fbee.errors import HypothesisError
from fbee.generators import AffineGenerator, make_builtin
from fbee.linear import solve_via_decoupling
from fbee.lyapunov import (
    ClosedFormParams,
    LyapunovData,
    Verdict,
    check_cor78_monotone,
    check_definition53,
    check_theorem71,
    check_thm75_cor76,
    closed_form_certificate,
    closed_form_pi,
    energy_identity_residual,
    eta_kappa,
    f_lemma74,
    general_certificate,
    lyapunov_representation_defect,
    solve_lyapunov_triple,
)
from fbee.spectral import SpectralOperator, TimeGrid, dirichlet_laplacian

ZERO_MODE = SpectralOperator("skew", [], zero_modes=1)
TOY = make_builtin("monotone_toy", {})
FLIP = make_builtin("monotone_toy", {"sign": -1})
GRID = TimeGrid(1.0, 100)


def test_eta_and_f_values():
    assert eta_kappa(0.0) == 1.0
    assert eta_kappa(1e-9) == pytest.approx(1.0, abs=1e-9)
    assert eta_kappa(1.0) == pytest.approx(np.e - 1)
    assert f_lemma74(1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert f_lemma74(1.0, 1.0, 1e-9) == pytest.approx(2.0, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(1e-4, 20), st.floats(1e-3, 20))
def test_lemma74_decreasing(alpha, beta, k1, dk):
    assert f_lemma74(alpha, beta, k1) > f_lemma74(alpha, beta, k1 + dk)


def test_closed_form_examples():
    Pi = closed_form_pi(SpectralOperator("skew", [1.0]), ClosedFormParams(1, 1, 1, 1), GRID)
    np.testing.assert_allclose(Pi[0], np.diag([2.0, 2.0, -1.0, -1.0]), atol=1e-14)
    Pi1 = closed_form_pi(SpectralOperator("symmetric", [-1.0]), ClosedFormParams(1, 1, 2, 1), GRID)
    assert Pi1[0, 0, 0] == pytest.approx(1.0, abs=1e-14)
    assert np.all([np.allclose(P, P.T, atol=0) for P in Pi])


def test_closed_form_skew_gamma():
    A = SpectralOperator("skew", [2.0])
    Pi = closed_form_pi(A, ClosedFormParams(1, 1, 1, 1, gamma=0.5, theta=0.3), GRID)
    gam = Pi[:, 2:, :2]
    expected = 0.5 + 0.3 * (1.0 - GRID.nodes)
    np.testing.assert_allclose(gam[:, 0, 0], expected, atol=1e-13)
    np.testing.assert_allclose(gam[:, 0, 1], 0.0, atol=1e-13)


def test_closed_form_rejects_bad_params():
    with pytest.raises(HypothesisError):
        ClosedFormParams(0.0, 1, 1, 1)
    A = SpectralOperator("symmetric", [-1.0])
    with pytest.raises(HypothesisError):
        closed_form_pi(A, ClosedFormParams(1, 1, 1, 1, m=-1.5), GRID)
    # m = -sigma0 is the eta-limit case and is admitted
    closed_form_pi(A, ClosedFormParams(1, 1, 1, 1, m=-1.0), GRID)


@pytest.mark.parametrize("A", [SpectralOperator("skew", [1.0, 3.0], zero_modes=1),
                               SpectralOperator("symmetric", [-1.0, -2.0, -3.0]),
                               dirichlet_laplacian(6)], ids=["skew", "symmetric", "laplacian"])
def test_general_route_matches_closed_form(A):
    p = ClosedFormParams(1.3, 0.7, 2.0, 0.5, gamma=0.4, theta=0.3, m=0.2, mbar=0.5)
    tri = solve_lyapunov_triple(A, p.data(A.dim), GRID)
    assert np.abs(closed_form_pi(A, p, GRID) - tri.pi()).max() <= 1e-8
    d1 = lyapunov_representation_defect(A, p.data(A.dim), tri)
    d2 = lyapunov_representation_defect(A, p.data(A.dim), solve_lyapunov_triple(A, p.data(A.dim), TimeGrid(1.0, 200)))
    assert d2 < d1 and d1 / d2 > 3.0


def test_sign_implication():
    A = SpectralOperator("symmetric", [-0.5, -2.0])
    rng = np.random.default_rng(0)
    S = rng.standard_normal((2, 2))
    data = LyapunovData(M=0.3 * np.eye(2), Mbar=0.1 * np.eye(2), Q0=S @ S.T, Qbar0=np.eye(2),
                        P_T=np.diag([1.0, 2.0]), Pbar_0=-np.eye(2))
    tri = solve_lyapunov_triple(A, data, GRID)
    assert min(np.linalg.eigvalsh(P).min() for P in tri.P) >= -1e-10
    assert max(np.linalg.eigvalsh(P).max() for P in tri.Pbar) <= 1e-10


def test_symmetric_gamma_commutation_enforced():
    A = SpectralOperator("symmetric", [-1.0, -2.0])
    data = LyapunovData(Gamma_T=np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(HypothesisError):
        solve_lyapunov_triple(A, data, GRID)


def test_energy_identity_decoupled_closed_form():
    A = SpectralOperator("symmetric", [-1.0])
    aff = AffineGenerator(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), h0=[0.7])
    grid = TimeGrid(1.0, 4000)
    traj = solve_via_decoupling(A, aff, np.ones(1), grid)
    # Pi = diag(1, -1), M = 0, Q = diag(2, 2)
    data = LyapunovData(Q0=2.0, Qbar0=2.0, P_T=1.0, Pbar_0=-1.0)
    cert = general_certificate(A, data, grid)
    np.testing.assert_allclose(cert.Pi[:, 0, 0], 1.0, atol=1e-12)
    assert energy_identity_residual(A, aff, traj, cert) < 1e-10


def test_energy_identity_with_forcing_is_second_order():
    rng = np.random.default_rng(5)
    A = SpectralOperator("symmetric", [-0.5, -1.0, -2.0, -3.0])
    aff = random_monotone_affine(rng, 4, forcing=True)
    x = rng.standard_normal(4)
    res = []
    for N in (250, 500):
        grid = TimeGrid(1.0, N)
        cert = closed_form_certificate(A, ClosedFormParams(1, 1, 1, 1, gamma=0.5, theta=0.2), grid)
        res.append(energy_identity_residual(A, aff, solve_via_decoupling(A, aff, x, grid), cert))
    assert 3.2 <= res[0] / res[1] <= 4.8


def _toy_cert(gamma=2.0):
    return closed_form_certificate(ZERO_MODE, ClosedFormParams(1, 1, 1, 1, gamma=gamma), GRID)


def test_theorem71_toy_and_flip():
    ok = check_theorem71(ZERO_MODE, TOY, _toy_cert(), delta=0.1)
    assert ok.verdict is Verdict.BOTH and ok.worst is None
    bad = check_theorem71(ZERO_MODE, FLIP, _toy_cert(), delta=0.1)
    assert bad.verdict is Verdict.FAIL
    assert bad.conditions["interior"] < 0 and bad.worst is not None


def test_theorem71_zero_pi_fails():
    cert = _toy_cert()
    zero = cert.with_result(Pi=np.zeros_like(cert.Pi))
    assert check_theorem71(ZERO_MODE, TOY, zero).verdict is Verdict.FAIL


def test_theorem71_monotone_in_delta():
    verdicts = [check_theorem71(ZERO_MODE, TOY, _toy_cert(), delta=d).verdict for d in (0.01, 0.1, 0.5, 2.0, 10.0)]
    seen_fail = False
    for v in verdicts:
        seen_fail = seen_fail or v is Verdict.FAIL
        if seen_fail:
            assert v is Verdict.FAIL


def test_certificate_deterministic_and_serializable():
    a = check_theorem71(ZERO_MODE, TOY, _toy_cert(), seed=3).to_json()
    b = check_theorem71(ZERO_MODE, TOY, _toy_cert(), seed=3).to_json()
    assert a == b
    d = json.loads(a)
    assert d["seed"] == 3 and d["verdict"] == "Both" and d["sample_ball_radius"] == 1.0


def test_cor78_examples():
    toy = check_cor78_monotone(TOY)
    assert toy.holds and toy.delta == pytest.approx(2.0)
    assert not check_cor78_monotone(FLIP).holds
    lq = make_builtin("lq", {"B": np.eye(2), "R": 2 * np.eye(2), "Q": np.diag([1.0, 3.0])})
    # 2 min(lambda_min(Q), lambda_min(B R^-1 B^T)) = 2 min(1, 0.5)
    assert check_cor78_monotone(lq).delta == pytest.approx(1.0)


@pytest.mark.parametrize("which,expected", [
    ("thm75", Verdict.BOTH), ("cor76", Verdict.BOTH), ("cor77", Verdict.BOTH), ("cor79i", Verdict.BOTH),
    ("cor79ii", Verdict.FAIL), ("cor79iii", Verdict.BOTH), ("monotone_block", Verdict.BOTH),
])
def test_thm75_family_on_toy(which, expected):
    cert = check_thm75_cor76(ZERO_MODE, TOY, ClosedFormParams(1, 1, 1, 1, gamma=2), GRID, which=which)
    assert cert.verdict is expected
    assert cert.check == which


def test_thm75_family_rejects_flip():
    for which in ("thm75", "cor76", "cor79i", "monotone_block"):
        cert = check_thm75_cor76(ZERO_MODE, FLIP, ClosedFormParams(1, 1, 1, 1, gamma=2), GRID, which=which)
        assert cert.verdict is Verdict.FAIL


def test_cor76_interior_diagonal():
    # sigma0 = 0, theta = 0, q0 = qbar0 = 1: the 2x2 interior block is I, so delta_bar + eps = 0.8 passes
    cert = check_thm75_cor76(ZERO_MODE, TOY, ClosedFormParams(1, 1, 1, 1, gamma=2), GRID, which="cor76",
                             delta_bar=0.4, epsilon=0.4)
    assert cert.margins["delta_interior"] == pytest.approx(1.0 - 0.4)
    assert cert.conditions["interior_2x2"] == pytest.approx(0.2)


def test_cor79i_matrix_oracle():
    W = np.block([[np.eye(1), np.eye(1)], [np.eye(1), np.zeros((1, 1))]])
    BB = TOY.bb(0.0, np.zeros(1), np.zeros(1))
    X = W @ BB + BB.T @ W
    np.testing.assert_allclose(X, [[-2, -1], [-1, -2]])


def test_example93_block():
    gen = make_builtin("parabolic_logistic", {"n": 8, "N": 100.0})
    A = gen.extras["operator"]
    ok = check_thm75_cor76(A, gen, None, TimeGrid(0.5, 50), ball_radius=5.0, which="monotone_block")
    assert ok.verdict is Verdict.BOTH
    # with a small weight N the block loses definiteness on the same ball
    weak = make_builtin("parabolic_logistic", {"n": 8, "N": 1.0})
    assert check_thm75_cor76(A, weak, None, TimeGrid(0.5, 50), ball_radius=5.0,
                             which="monotone_block").verdict is Verdict.FAIL


def test_definition53_raw_check():
    r = check_definition53(ZERO_MODE, TOY, _toy_cert(), mu=0.1, K=10.0)
    assert r.verdict is Verdict.BOTH
    r2 = check_definition53(ZERO_MODE, FLIP, _toy_cert(), mu=0.1, K=10.0)
    assert r2.verdict is Verdict.FAIL

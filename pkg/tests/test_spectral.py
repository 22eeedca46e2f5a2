from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from fbee.errors import ConfigError
from fbee.spectral import (
    SpectralOperator,
    TimeGrid,
    dirichlet_laplacian,
    duhamel_step,
    duhamel_sweep,
    duhamel_sweep_backward,
    operator_from_config,
    semigroup_apply,
    yosida_apply,
)


def test_semigroup_diagonal():
    A = SpectralOperator("symmetric", [-1.0, -2.0])
    np.testing.assert_allclose(semigroup_apply(A, np.log(2), np.ones(2)), [0.5, 0.25], atol=1e-14)


def test_semigroup_rotation_and_inverse():
    A = SpectralOperator("skew", [1.0])
    y = semigroup_apply(A, np.pi / 2, np.array([1.0, 0.0]))
    np.testing.assert_allclose(y, [0.0, -1.0], atol=1e-14)
    np.testing.assert_allclose(semigroup_apply(A, -np.pi / 2, y), [1.0, 0.0], atol=1e-14)


def test_semigroup_identity_at_zero():
    A = SpectralOperator("skew", [2.0, 3.0], zero_modes=1)
    x = np.arange(5.0)
    np.testing.assert_array_equal(semigroup_apply(A, 0.0, x), x)


def test_negative_time_rejected_for_symmetric():
    with pytest.raises(ValueError):
        semigroup_apply(SpectralOperator("symmetric", [-1.0]), -0.1, np.ones(1))


def test_dense_matches_blockwise():
    rng = np.random.default_rng(1)
    V, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    for A in (SpectralOperator("symmetric", [-0.5, -1, -2, -3, -4], basis=V),
              SpectralOperator("skew", [1.5, -0.7], zero_modes=1, basis=V)):
        x = rng.standard_normal(5)
        np.testing.assert_allclose(expm(A.dense() * 0.7) @ x, semigroup_apply(A, 0.7, x), atol=1e-12)


def test_structural_invariants():
    S = SpectralOperator("symmetric", [-0.3, -2.0])
    assert S.sigma0 == pytest.approx(0.3)
    np.testing.assert_array_equal(S.dense(), S.dense().T)
    K = SpectralOperator("skew", [1.0, 4.0], zero_modes=2)
    assert K.dim == 6 and K.sigma0 == 0.0
    np.testing.assert_array_equal(K.dense() + K.dense().T, 0.0)


@pytest.mark.parametrize("bad", [
    {"kind": "symmetric", "eigenvalues": [-1.0, 0.5]},
    {"kind": "skew", "frequencies": [0.0]},
    {"kind": "nonsense"},
    {"eigenvalues": [-1.0]},
])
def test_operator_config_rejects(bad):
    with pytest.raises(ConfigError):
        operator_from_config(bad)


def test_operator_config_forms():
    assert operator_from_config({"kind": "symmetric", "eigenvalues": [-1, -2]}).dim == 2
    assert operator_from_config({"kind": "skew", "frequencies": [1], "zero_modes": 1}).dim == 3
    assert operator_from_config({"kind": "laplacian", "n": 7}).dim == 7


def test_semigroup_law_random():
    rng = np.random.default_rng(7)
    ops = [SpectralOperator("symmetric", -rng.uniform(0.1, 5, 4)),
           SpectralOperator("skew", rng.uniform(0.5, 5, 2), zero_modes=1)]
    for _ in range(100):
        A = ops[rng.integers(2)]
        t, s = rng.uniform(0, 2, 2)
        x = rng.standard_normal(A.dim)
        lhs = semigroup_apply(A, t + s, x)
        rhs = semigroup_apply(A, t, semigroup_apply(A, s, x))
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(x)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.05, 6.0), min_size=1, max_size=4), st.floats(0.0, 3.0))
def test_contraction(rates, t):
    x = np.linspace(1.0, 2.0, len(rates))
    A = SpectralOperator("symmetric", [-r for r in rates])
    nrm = np.linalg.norm(semigroup_apply(A, t, x))
    assert nrm <= np.exp(-A.sigma0 * t) * np.linalg.norm(x) * (1 + 1e-12)
    K = SpectralOperator("skew", rates)
    x2 = np.linspace(1.0, 2.0, K.dim)
    assert np.linalg.norm(semigroup_apply(K, t, x2)) <= np.linalg.norm(x2) * (1 + 1e-12)


def test_yosida_scalar_examples():
    A = SpectralOperator("symmetric", [-1.0])
    Al = yosida_apply(A, 2.0)
    assert Al.dense()[0, 0] == pytest.approx(-2 / 3, abs=1e-15)
    assert abs(yosida_apply(A, 100.0).dense()[0, 0] + 1.0) == pytest.approx(1 / 101, abs=1e-15)


def test_yosida_skew_block_matches_resolvent():
    A = SpectralOperator("skew", [1.0])
    Ad = A.dense()
    dense = 1.0 * Ad @ np.linalg.inv(np.eye(2) - Ad)
    np.testing.assert_allclose(yosida_apply(A, 1.0).dense(), dense, atol=1e-14)
    np.testing.assert_allclose(yosida_apply(A, 1.0).dense(), 0.5 * np.array([[-1, 1], [-1, -1]]), atol=1e-14)
    Y = yosida_apply(A, 1.0).dense()
    np.testing.assert_allclose(Y + Y.T, -np.eye(2), atol=1e-14)


def test_yosida_rejects_nonpositive():
    with pytest.raises(ValueError):
        yosida_apply(SpectralOperator("symmetric", [-1.0]), 0.0)


def test_yosida_deviation_nonincreasing():
    A = SpectralOperator("symmetric", [-0.5, -2.0, -5.0])
    x = np.ones(3) / np.sqrt(3)
    ts = np.linspace(0, 1, 101)
    devs = []
    for lam in (10.0, 100.0, 1000.0):
        Al = yosida_apply(A, lam)
        devs.append(max(np.linalg.norm(semigroup_apply(Al, t, x) - semigroup_apply(A, t, x)) for t in ts))
    assert devs[0] >= devs[1] >= devs[2]
    assert devs[2] < 1e-2


def test_duhamel_step_examples():
    g = TimeGrid(1.0, 10)
    Z = SpectralOperator("skew", [], zero_modes=1)
    c = np.array([3.0])
    np.testing.assert_allclose(duhamel_step(Z, g, 0, c, c, np.array([1.0])), 1.0 + 0.3, atol=1e-15)
    A = SpectralOperator("symmetric", [-1.0])
    one = np.ones(1)
    assert duhamel_step(A, g, 0, one, one, np.zeros(1))[0] == pytest.approx(1 - np.exp(-0.1), abs=1e-4)
    np.testing.assert_allclose(duhamel_step(A, g, 3, 0 * one, 0 * one, one), np.exp(-0.1), atol=1e-15)


def test_duhamel_sweep_second_order():
    A = SpectralOperator("symmetric", [-1.0, -3.0])
    x0 = np.array([1.0, -1.0])
    f = lambda t: np.stack([np.sin(3 * t), np.cos(t)], axis=-1)  # noqa: E731
    ref = None
    errs = []
    for N in (50, 100, 200, 400):
        g = TimeGrid(1.0, N)
        y = duhamel_sweep(A, g, f(g.nodes), x0)
        if ref is None:
            gr = TimeGrid(1.0, 6400)
            ref = duhamel_sweep(A, gr, f(gr.nodes), x0)[-1]
        errs.append(np.abs(y[-1] - ref).max())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.8)


def test_duhamel_sweep_matches_steps_and_backward():
    A = SpectralOperator("skew", [2.0], zero_modes=1)
    g = TimeGrid(1.0, 20)
    rng = np.random.default_rng(0)
    f = rng.standard_normal((21, 3))
    y = duhamel_sweep(A, g, f, np.ones(3))
    z = np.ones(3)
    for k in range(20):
        z = duhamel_step(A, g, k, f[k], f[k + 1], z)
    np.testing.assert_allclose(y[-1], z, atol=1e-13)
    psi = duhamel_sweep_backward(A, g, f, np.ones(3))
    np.testing.assert_allclose(psi[-1], np.ones(3))
    # one backward step by hand: psi_k = e^{A^T dt}(psi_{k+1} + dt/2 f_{k+1}) + dt/2 f_k
    E = expm(A.dense().T * g.dt)
    np.testing.assert_allclose(psi[-2], E @ (psi[-1] + 0.5 * g.dt * f[-1]) + 0.5 * g.dt * f[-2], atol=1e-13)


def test_dirichlet_laplacian():
    A = dirichlet_laplacian(16)
    h = 1 / 17
    D = (np.diag(-2 * np.ones(16)) + np.diag(np.ones(15), 1) + np.diag(np.ones(15), -1)) / h**2
    np.testing.assert_allclose(A.dense(), D, atol=1e-9)
    assert A.sigma0 == pytest.approx(np.pi**2, rel=1e-2)


def test_timegrid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    g = TimeGrid(2.0, 4)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0 and g.refined().N == 8

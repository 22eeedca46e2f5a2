from __future__ import annotations

import numpy as np
import pytest

from fbee.errors import ConfigError
from fbee.generators import (
    AffineGenerator,
    ball_samples,
    generator_from_config,
    jacobian_fd_error,
    lipschitz_profile,
    make_builtin,
)
from fbee.spectral import TimeGrid

LQ = {"B": np.eye(2), "R": 2 * np.eye(2), "Q": np.diag([1.0, 3.0]), "G": 0.5 * np.eye(2)}


def _builtins():
    return {
        "lq": make_builtin("lq", dict(LQ, S=0.1 * np.ones((2, 2)))),
        "linear_convex": make_builtin("linear_convex", LQ),
        "linear_convex_callable": make_builtin("linear_convex", {
            "B": np.eye(2), "R": np.eye(2),
            "Q_grad": lambda y: y + y**3, "Q_hess": lambda y: np.eye(2) * (1 + 3 * y[..., None] ** 2),
            "G_grad": lambda y: 0.5 * y, "G_hess": lambda y: np.broadcast_to(0.5 * np.eye(2), y.shape + (2,)),
        }),
        "aq": make_builtin("aq", dict(LQ, F={"kind": "tanh", "scale": 0.3})),
        "parabolic_logistic": make_builtin("parabolic_logistic", {"n": 3, "N": 10.0, "f": 0.5, "y_d": 0.2,
                                                                  "z": 0.1, "M": 2.0}),
        "monotone_toy": make_builtin("monotone_toy", {"n": 2}),
        "custom_affine": make_builtin("custom_affine", {"B11": [[0.1, 0.2], [0.0, -0.3]], "B12": -np.eye(2),
                                                        "B21": np.eye(2), "b0": [1.0, 0.0], "H": np.eye(2)}),
    }


@pytest.mark.parametrize("name", list(_builtins()))
def test_jacobians_match_finite_differences(name):
    gen = _builtins()[name]
    rng = np.random.default_rng(3)
    for _ in range(5):
        y, psi = rng.uniform(-1, 1, (2, gen.dim))
        assert jacobian_fd_error(gen, 0.3, y, psi) < 1e-5


def test_lq_sign_convention():
    gen = make_builtin("lq", LQ)
    y, psi = np.array([1.0, 2.0]), np.array([0.5, -1.0])
    np.testing.assert_allclose(gen.b(0.0, y, psi), -0.5 * psi)
    np.testing.assert_allclose(gen.g(0.0, y, psi), LQ["Q"] @ y)
    np.testing.assert_allclose(gen.h(y), 0.5 * y)


def test_parabolic_logistic_formulas():
    gen = _builtins()["parabolic_logistic"]
    y, psi = np.array([1.0, -1.0, 0.5]), np.array([2.0, 0.0, 1.0])
    np.testing.assert_allclose(gen.b(0.0, y, psi), -y - psi * y**2 / 10 + 0.5)
    np.testing.assert_allclose(gen.g(0.0, y, psi), -psi - y * psi**2 / 10 + (y - 0.2))
    np.testing.assert_allclose(gen.h(y), 2.0 * (y - 0.1))
    assert gen.extras["operator"].dim == 3


def test_aq_with_zero_drift_is_linear_convex():
    lc = make_builtin("linear_convex", LQ)
    aq = make_builtin("aq", dict(LQ, F={"kind": "tanh", "scale": 0.0}))
    y, psi = np.array([0.3, -0.2]), np.array([1.0, 2.0])
    assert aq.affine is not None
    np.testing.assert_array_equal(aq.b(0, y, psi), lc.b(0, y, psi))
    np.testing.assert_array_equal(aq.g(0, y, psi), lc.g(0, y, psi))


def test_lipschitz_bound_for_affine():
    gen = _builtins()["custom_affine"]
    rng = np.random.default_rng(0)
    L = gen.lipschitz
    for _ in range(200):
        y1, p1, y2, p2 = rng.uniform(-3, 3, (4, 2))
        db = np.linalg.norm(gen.b(0, y1, p1) - gen.b(0, y2, p2))
        dg = np.linalg.norm(gen.g(0, y1, p1) - gen.g(0, y2, p2))
        bound = L * (np.linalg.norm(y1 - y2) + np.linalg.norm(p1 - p2)) * (1 + 1e-6)
        assert db <= bound and dg <= bound


def test_affine_time_dependent_sampling():
    aff = AffineGenerator(lambda t: np.array([[t]]), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)),
                          b0=lambda t: np.array([2 * t]))
    grid = TimeGrid(1.0, 4)
    np.testing.assert_allclose(aff.sample("B11", grid)[:, 0, 0], grid.nodes)
    assert aff.time_dependent
    tri = aff.to_triple()
    np.testing.assert_allclose(tri.b(0.5, np.ones(1), np.zeros(1)), [1.5])


def test_affine_shape_validation():
    with pytest.raises(ValueError):
        AffineGenerator(np.eye(2), np.eye(3), np.eye(2), np.eye(2))


def test_with_forcing_keeps_coefficients():
    aff = _builtins()["monotone_toy"].affine
    f = aff.with_forcing(b0=[1.0, 2.0], h0=[0.5, 0.5])
    np.testing.assert_array_equal(f.B12, aff.B12)
    np.testing.assert_array_equal(f.b0, [1.0, 2.0])
    np.testing.assert_array_equal(f.g0, 0.0)


def test_config_errors():
    with pytest.raises(ConfigError):
        make_builtin("nope", {})
    with pytest.raises(ConfigError):
        generator_from_config({"B": [[1.0]]})
    with pytest.raises(ConfigError):
        generator_from_config({"builtin": "lq", "B": [[1.0]]})


def test_ball_samples_deterministic_and_bounded():
    y1, p1 = ball_samples(3, 2.0, 100, seed=5)
    y2, p2 = ball_samples(3, 2.0, 100, seed=5)
    np.testing.assert_array_equal(y1, y2)
    assert y1.shape == (100, 3) and np.abs(np.r_[y1, p1]).max() <= 2.0
    np.testing.assert_array_equal(y1[0], 0.0)


def test_lipschitz_profile_toy():
    prof = lipschitz_profile(make_builtin("monotone_toy", {}), TimeGrid(1.0, 10))
    assert prof.L_by.max() == 0.0 and prof.sup_b_psi == pytest.approx(1.0)
    assert not prof.unbounded_growth

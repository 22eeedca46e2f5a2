"""Shared problem instances for the test suite."""

from __future__ import annotations

import numpy as np

from fbee.generators import AffineGenerator
from fbee.spectral import SpectralOperator


def scalar_lq():
    """A = -1, B12 = -1, B21 = 1, H = 0: the scalar cross-solver instance."""
    A = SpectralOperator("symmetric", [-1.0])
    aff = AffineGenerator(np.zeros((1, 1)), -np.eye(1), np.eye(1), np.zeros((1, 1)))
    return A, aff


def lq_psi0_oracle(T: float = 1.0) -> float:
    """psi(0) = P(0) x for the scalar instance, from the tanh solution of P' = P^2 + 2P - 1."""
    r = np.sqrt(2.0)
    c = -r * T - np.arctanh(1.0 / r)
    return float(-1.0 - r * np.tanh(r * 0.0 + c))


def rotation(zero_mode: bool = True):
    """A = 0 (one skew zero mode), B12 = B21 = 1: psi(0) = tan(T) x."""
    A = SpectralOperator("skew", [], zero_modes=1)
    aff = AffineGenerator(np.zeros((1, 1)), np.eye(1), np.eye(1), np.zeros((1, 1)))
    return A, aff


def random_spd(rng, n, lo=0.1, hi=1.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(rng.uniform(lo, hi, n)) @ Q.T


def random_monotone_affine(rng, n, forcing: bool = False):
    """Random instance with -B12, B21, H PSD and B22 = B11^T."""
    B11 = 0.3 * rng.standard_normal((n, n))
    kw = {}
    if forcing:
        kw = dict(b0=rng.standard_normal(n), g0=rng.standard_normal(n), h0=rng.standard_normal(n))
    return AffineGenerator(B11, -random_spd(rng, n), random_spd(rng, n), B11.T.copy(),
                           H=random_spd(rng, n, 0.0, 0.5), **kw)


def random_symmetric_operator(rng, n, lo=-4.0, hi=-0.5):
    return SpectralOperator("symmetric", np.sort(rng.uniform(lo, hi, n))[::-1])

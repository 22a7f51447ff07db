import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gfcap.spectra import RationalSpectrum, theta_grid, toeplitz_covariance
from gfcap.waterfill import (eigen_waterfill, nblock_nonfeedback, spectral_waterfill,
                             verify_waterfill_conditions, waterfill_integrals)


def two_level(th):
    th = np.asarray(th, dtype=float)
    return np.where(np.abs(th) < np.pi / 2, 1.0, 3.0)


@pytest.mark.parametrize("N,P", [(1.0, 0.1), (1.0, 3.0), (2.0, 5.0)])
def test_white(N, P):
    r = spectral_waterfill(RationalSpectrum.white(N), P)
    assert r.capacity == pytest.approx(0.5 * math.log1p(P / N), abs=1e-12)
    assert r.water_level == pytest.approx(N + P, abs=1e-10)


def test_two_level_analytic():
    r = spectral_waterfill(two_level, 1.0)
    assert r.water_level == pytest.approx(3.0, abs=1e-9)
    assert r.capacity == pytest.approx(0.25 * math.log(3.0), abs=1e-9)


def test_zero_power():
    s = RationalSpectrum.arma1(0, 0.5)
    r = spectral_waterfill(s, 0.0)
    assert r.capacity == 0.0 and r.water_level == pytest.approx(1 / 2.25, rel=1e-12)
    with pytest.raises(ValueError):
        spectral_waterfill(s, -1.0)


def test_ar1_frozen_and_finite_block_oracle():
    s = RationalSpectrum.arma1(0, 0.5)
    r = spectral_waterfill(s, 1.0)
    # frozen from this implementation; the n-block eigen solution is the independent route
    assert r.capacity == pytest.approx(0.41342715244735, abs=1e-11)
    _, c256 = nblock_nonfeedback(toeplitz_covariance(s, 256), 1.0)
    assert abs(c256 - r.capacity) < 0.02
    # dense midpoint rule with its own root solve
    from scipy.optimize import brentq
    sz = s(theta_grid(1 << 20) + np.pi / (1 << 20))
    lam = brentq(lambda L: np.mean(np.maximum(L - sz, 0)) - 1.0, sz.min(), sz.max() + 2, xtol=1e-15)
    assert r.capacity == pytest.approx(float(np.mean(0.5 * np.log(np.maximum(sz, lam) / sz))), abs=1e-9)


def test_power_used_matches():
    s = RationalSpectrum((0.5, -0.2), (0.3, 0.1))
    for P in (0.05, 0.5, 5.0):
        assert abs(spectral_waterfill(s, P).power_used - P) < 1e-10


def test_parametric_consistency_against_dense_quadrature():
    s = RationalSpectrum.arma1(0.3, -0.6)
    th = theta_grid(1 << 20)
    sz = s(th)
    for lam in np.linspace(float(np.min(sz)) + 0.05, float(np.max(sz)) - 0.05, 7):
        p, c = waterfill_integrals(s, lam)
        assert p == pytest.approx(float(np.mean(np.maximum(lam - sz, 0))), abs=1e-9)
        assert c == pytest.approx(float(np.mean(0.5 * np.log(np.maximum(sz, lam) / sz))), abs=1e-9)


def test_capacity_monotone_concave():
    s = RationalSpectrum.arma1(0.5, -0.3)
    Ps = np.linspace(0.1, 5, 12)
    C = np.array([spectral_waterfill(s, P).capacity for P in Ps])
    assert np.all(np.diff(C) > 0)
    assert np.all(C[1:-1] >= 0.5 * (C[:-2] + C[2:]) - 1e-12)


def test_eigen_examples():
    K_X, c = nblock_nonfeedback(2.0 * np.eye(5), 1.5)
    assert np.allclose(K_X, 1.5 * np.eye(5)) and c == pytest.approx(0.5 * math.log(1 + 0.75))
    Q = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    K_Z = Q @ np.diag([1.0, 3.0]) @ Q.T
    K_X, c = nblock_nonfeedback(K_Z, 1.0)
    level, alloc = eigen_waterfill(np.array([1.0, 3.0]), 2.0)
    assert level == 3.0 and np.allclose(alloc, [2, 0])
    assert c == pytest.approx(0.25 * math.log(3.0), abs=1e-14)
    assert np.allclose(K_X, Q @ np.diag([2.0, 0.0]) @ Q.T)


def test_eigen_ties_filled_equally():
    level, alloc = eigen_waterfill(np.array([1.0, 1.0, 5.0]), 2.0)
    assert level == 2.0 and np.allclose(alloc, [1, 1, 0])


def test_nonspd_rejected():
    with pytest.raises(ValueError):
        nblock_nonfeedback(np.array([[1.0, 2.0], [2.0, 1.0]]), 1.0)


def test_verifier_examples():
    s = RationalSpectrum.arma1(0, 0.5)
    K_Z = toeplitz_covariance(s, 16)
    K_X, _ = nblock_nonfeedback(K_Z, 1.0)
    assert verify_waterfill_conditions(K_X, K_Z, 1.0).ok
    bad = verify_waterfill_conditions(np.eye(16), K_Z, 1.0)
    assert bad.power_ok and not bad.trace_ok
    half = verify_waterfill_conditions(0.5 * K_X, K_Z, 1.0)
    assert not half.power_ok


def test_finite_block_gap_shrinks():
    s = RationalSpectrum.arma1(0.4, -0.5)
    C = spectral_waterfill(s, 1.0).capacity
    gaps = [abs(nblock_nonfeedback(toeplitz_covariance(s, n), 1.0)[1] - C) for n in (32, 64, 128, 256)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.floats(0.1, 5.0), st.floats(-0.7, 0.7), st.floats(-0.7, 0.7))
def test_superadditive(m, n, P, a, b):
    s = RationalSpectrum.arma1(a, b)
    c = lambda k: nblock_nonfeedback(toeplitz_covariance(s, k), P)[1]
    assert m * c(m) + n * c(n) <= (m + n) * c(m + n) + 1e-9

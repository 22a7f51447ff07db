import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from gfcap.fbcap import arma1_capacity
from gfcap.nblock import (_Barrier, dual_value, feedback_gain, nblock_feedback, nblock_rank_check,
                          verify_nblock_conditions)
from gfcap.spectra import RationalSpectrum, toeplitz_covariance
from gfcap.waterfill import nblock_nonfeedback


def ar1(n, beta=0.5):
    return toeplitz_covariance(RationalSpectrum.arma1(0.0, beta), n)


def ma(n, coeffs):
    return toeplitz_covariance(RationalSpectrum(tuple(coeffs), ()), n)


def direct_search(K_Z, P, seeds=6):
    """Oracle: unconstrained parameterization K_V = L L', B strictly lower, rescaled onto the power budget."""
    n = K_Z.shape[0]
    li = np.tril_indices(n)
    bi = np.tril_indices(n, -1)
    logdet_z = np.linalg.slogdet(K_Z)[1]

    def unpack(x):
        L = np.zeros((n, n))
        B = np.zeros((n, n))
        L[li] = x[:li[0].size]
        B[bi] = x[li[0].size:]
        return L, B

    def neg(x):
        L, B = unpack(x)
        p = float(np.sum(L * L) + np.trace(B @ K_Z @ B.T))
        s = math.sqrt(n * P / p)
        L, B = s * L, s * B
        IB = np.eye(n) + B
        K_Y = IB @ K_Z @ IB.T + L @ L.T
        return -0.5 * (np.linalg.slogdet(K_Y)[1] - logdet_z) / n

    rng = np.random.default_rng(0)
    best = -np.inf
    for _ in range(seeds):
        x0 = rng.standard_normal(li[0].size + bi[0].size)
        r = minimize(neg, x0, method="BFGS", options={"gtol": 1e-10, "maxiter": 5000})
        best = max(best, -r.fun)
    return best


@pytest.mark.parametrize("P", [0.1, 1.0, 3.0])
def test_white_closed_form(P):
    sol = nblock_feedback(np.eye(8), P)
    assert sol.value == pytest.approx(0.5 * math.log1p(P), abs=1e-6)


def test_single_symbol():
    sol = nblock_feedback(np.array([[2.0]]), 1.0)
    assert sol.value == pytest.approx(0.5 * math.log(1.5), abs=1e-8)


def test_ar1_nondecreasing_below_limit():
    cap = arma1_capacity(0.0, 0.5, 1.0)[1]
    vals = [nblock_feedback(ar1(n), 1.0).value for n in (2, 4, 8, 16)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= cap + 1e-6


def test_direct_parameterization_oracle():
    K_Z = ar1(4)
    sol = nblock_feedback(K_Z, 1.0)
    ref = direct_search(K_Z, 1.0)
    assert sol.value >= ref - 1e-8
    assert sol.value - ref < 1e-5


@pytest.mark.parametrize("n", [4, 8])
def test_dual_gap(n):
    K_Z = ar1(n)
    sol = nblock_feedback(K_Z, 1.0)
    d = dual_value(sol, K_Z, 1.0)
    assert d >= sol.value - 1e-9
    assert d - sol.value < 1e-6


def test_solution_invariants():
    K_Z = ma(8, [0.6])
    sol = nblock_feedback(K_Z, 2.0)
    n = 8
    assert np.all(np.triu(sol.b_lower) == 0)
    assert np.linalg.eigvalsh(sol.k_v)[0] >= -1e-8
    power = float(np.trace(sol.k_v + sol.b_lower @ K_Z @ sol.b_lower.T))
    assert power <= n * 2.0 * (1 + 1e-6)
    IB = np.eye(n) + sol.b_lower
    assert np.allclose(sol.k_y, sol.k_v + IB @ K_Z @ IB.T, atol=1e-8)
    assert verify_nblock_conditions(sol, K_Z, 2.0).ok


def test_verifier_examples():
    K_Z = ar1(8)
    # B = 0 with K_V = P I: Cov(X, Y) = K_V is diagonal, so only water-filling can fail
    from gfcap.nblock import NBlockSolution
    K_V = np.eye(8)
    bad = NBlockSolution(K_Z + K_V, np.zeros((8, 8)), K_V, 0.0, math.nan)
    rep = verify_nblock_conditions(bad, K_Z, 1.0)
    assert rep.power_ok and rep.orthogonality_ok and not rep.water_filling_ok
    # a nonzero B with the same K_V breaks orthogonality
    B = np.tril(0.3 * np.ones((8, 8)), -1)
    IB = np.eye(8) + B
    skew = NBlockSolution(IB @ K_Z @ IB.T + K_V, B, K_V, 0.0, math.nan)
    assert not verify_nblock_conditions(skew, K_Z, 1.0).orthogonality_ok
    white = NBlockSolution(2 * np.eye(8), np.zeros((8, 8)), np.eye(8), 0.0, math.nan)
    assert verify_nblock_conditions(white, np.eye(8), 1.0).ok


@pytest.mark.parametrize("coeffs,k", [([0.7], 1), ([0.5, 0.3], 2)])
def test_rank_and_band(coeffs, k):
    sol = nblock_feedback(ma(16, coeffs), 1.0)
    rep = nblock_rank_check(sol, k)
    assert rep.rank <= k and rep.band_residual < 1e-6 and rep.bandwidth == 2 * k + 1


def test_white_diagonal_kv():
    sol = nblock_feedback(np.eye(6), 1.0)
    assert nblock_rank_check(sol, 0).ok


def test_feedback_gain_dichotomy():
    w = feedback_gain(np.eye(8), 1.0)
    assert abs(w.gain) < 1e-7 and w.kx_diagonal
    g = feedback_gain(ar1(8), 1.0)
    assert g.gain > 1e-3 and not g.kx_diagonal
    assert g.gain <= min(g.c_n, 0.5 * math.log(2)) + 1e-9


def test_concave_in_power():
    K_Z = ar1(6)
    Ps = [0.5, 1.0, 1.5]
    v = [nblock_feedback(K_Z, P).value for P in Ps]
    assert v[1] >= 0.5 * (v[0] + v[2]) - 1e-8


@settings(max_examples=8, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.floats(-0.7, 0.7), st.floats(-0.7, 0.7), st.floats(0.2, 3.0))
def test_superadditive_direct_sum(m, n, a, b, P):
    Km = toeplitz_covariance(RationalSpectrum.arma1(a, 0.0), m)
    Kn = toeplitz_covariance(RationalSpectrum.arma1(0.0, b), n)
    K = np.zeros((m + n, m + n))
    K[:m, :m] = Km
    K[m:, m:] = Kn
    c = lambda Q: Q.shape[0] * nblock_feedback(Q, P).value
    assert c(Km) + c(Kn) <= c(K) + 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 6), st.floats(-0.7, 0.7), st.floats(-0.7, 0.7), st.floats(0.2, 3.0))
def test_feedback_bounds(n, a, b, P):
    K_Z = toeplitz_covariance(RationalSpectrum.arma1(a, b), n)
    g = feedback_gain(K_Z, P)
    assert g.c_fb_n >= g.c_n - 1e-7
    assert g.gain <= min(g.c_n, 0.5 * math.log(2)) + 1e-7


def test_gradient_hessian_against_reference_and_differences():
    K_Z = ar1(4)
    bar = _Barrier(K_Z, 1.0)
    idx = bar.idx
    rng = np.random.default_rng(3)
    B = np.tril(0.05 * rng.standard_normal((4, 4)), -1)
    K = K_Z + 0.8 * np.eye(4) + B @ K_Z + K_Z @ B.T + B @ K_Z @ B.T
    assert bar.feasible(K, B)
    g, H = bar.grad_hess(K, B, 0.1)
    assert np.allclose(H, bar.grad_hess_reference(K, B, 0.1), atol=1e-9)
    x = idx.pack(K, B)
    f = lambda y: bar.value(*idx.unpack(y), 0.1)
    h = 1e-6
    fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.size)])
    assert np.allclose(g, fd, atol=1e-6)
    gf = lambda y: bar.grad_hess(*idx.unpack(y), 0.1)[0]
    Hfd = np.array([(gf(x + h * e) - gf(x - h * e)) / (2 * h) for e in np.eye(x.size)])
    assert np.allclose(H, Hfd, atol=1e-4)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        nblock_feedback(np.array([[1.0, 2.0], [2.0, 1.0]]), 1.0)
    with pytest.raises(ValueError):
        nblock_feedback(np.eye(3), 0.0)


def test_nonfeedback_never_exceeds_feedback():
    for n in (3, 6):
        K_Z = ma(n, [0.4])
        assert nblock_feedback(K_Z, 1.0).value >= nblock_nonfeedback(K_Z, 1.0)[1] - 1e-8

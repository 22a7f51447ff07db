import math

import numpy as np
import numpy.polynomial.polynomial as npoly
import pytest
from hypothesis import given, settings, strategies as st

from gfcap.fbcap import (RationalFilter, SearchOptions, arma1_capacity, arma1_filter, armak_capacity,
                         build_filter, cancel_common_factors, design_from_direction, feedback_capacity,
                         verify_armak_sufficiency, verify_necessary, verify_sufficiency,
                         white_blaschke_filter)
from gfcap.nblock import nblock_feedback
from gfcap.riccati import dare_stabilizing
from gfcap.spectra import BlaschkeProduct, RationalSpectrum, det_poly, theta_grid, to_state_space, toeplitz_covariance
from gfcap.waterfill import spectral_waterfill

from arma1_oracles import closed_form_filter, quartic_root

K2 = RationalSpectrum((0.3, 0.1), (-0.2, 0.05))


# closed form


@pytest.mark.parametrize("alpha,beta,P", [(0, 0.5, 1), (-0.8, 0.7, 10), (0.5, -0.5, 0.1), (0.9, 0.2, 2), (1.0, 0.3, 1)])
def test_arma1_matches_quartic_oracle(alpha, beta, P):
    x0, c = arma1_capacity(alpha, beta, P)
    assert x0 == pytest.approx(quartic_root(alpha, beta, P), abs=1e-13)
    assert c == pytest.approx(-math.log(x0))


def test_arma1_frozen_values():
    assert arma1_capacity(0, 0.5, 1)[1] == pytest.approx(0.4968152762755, abs=1e-12)
    x0, c = arma1_capacity(0.3, 0.3, 3)
    assert x0 == pytest.approx(0.5, abs=1e-14) and c == pytest.approx(math.log(2), abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.95), st.floats(0.05, 20))
def test_ar1_special_case(b, P):
    for beta in (b, -b):
        x0, _ = arma1_capacity(0, beta, P)
        assert P * x0 ** 2 == pytest.approx((1 - x0 ** 2) / (1 + abs(beta) * x0) ** 2, rel=1e-11)


def test_arma1_filter_invariants():
    d = arma1_filter(0, 0.5, 1)
    x0 = d.x0
    xi = x0
    y = (xi * xi - 1) / xi / (1 + 0.5 * xi)
    assert y * y / (1 - x0 * x0) == pytest.approx(1.0, abs=1e-10)
    s = RationalSpectrum.arma1(0, 0.5)
    inv = d.check_invariants(s)
    assert max(inv.values()) < 1e-8
    assert float(np.mean(0.5 * np.log(d.output_spectrum(theta_grid(4096))))) == pytest.approx(-math.log(x0), abs=1e-10)
    ref, _, _ = closed_form_filter(0, 0.5, 1)
    num, den = cancel_common_factors(ref.num, ref.den)
    z = np.exp(1j * theta_grid(64))
    assert np.allclose(d.filter.one_plus_b(z), RationalFilter(num, den).one_plus_b(z), atol=1e-12)


@pytest.mark.parametrize("alpha,beta,P", [(0, 0.5, 1), (-0.8, 0.7, 10), (0.5, -0.5, 0.1), (0.5, 0.0, 1.0)])
def test_build_filter_matches_closed_form(alpha, beta, P):
    d = arma1_filter(alpha, beta, P)
    s = RationalSpectrum.arma1(alpha, beta)
    ss = to_state_space(s)
    dare = dare_stabilizing(ss.F, ss.G, d.x_direction + ss.H)
    f, S_Y = build_filter(s, d.x_direction, dare)
    n1, d1 = f.num, f.den
    n2, d2 = d.filter.num, d.filter.den
    assert len(n1) == len(n2) and len(d1) == len(d2)
    assert np.allclose(n1, n2, atol=1e-8) and np.allclose(d1, d2, atol=1e-8)
    assert np.allclose(S_Y.Q, s.Q, atol=1e-10)
    assert S_Y.innovation_variance == pytest.approx(d.output_spectrum.innovation_variance, rel=1e-9)


def test_normalized_blaschke_and_determinant_identity():
    d = armak_capacity(K2, 1.0, SearchOptions(starts=8))
    ss = to_state_space(K2)
    h = d.x_direction + ss.H
    A = det_poly(ss.F - ss.G @ h)
    As = det_poly(ss.F - d.dare.gamma @ h)
    z = np.exp(1j * theta_grid(512))
    mod = np.abs(npoly.polyval(z, A) / npoly.polyval(z, As))
    assert np.max(np.abs(mod - math.sqrt(d.dare.innovation_variance))) < 1e-9
    ratio = np.linalg.det(ss.F - ss.G @ h) / np.linalg.det(ss.F - d.dare.gamma @ h)
    assert ratio == pytest.approx(d.dare.innovation_variance, abs=1e-9)
    assert np.allclose(d.output_spectrum.Q, K2.Q, atol=1e-10)
    assert d.output_spectrum.order <= 2


# search


@pytest.mark.parametrize("alpha,beta,P", [(0, 0.5, 1), (-0.8, 0.7, 10), (0.5, -0.5, 0.1)])
def test_armak_k1_matches_closed_form(alpha, beta, P):
    d = armak_capacity(RationalSpectrum.arma1(alpha, beta), P, SearchOptions(starts=8))
    assert d.rate == pytest.approx(arma1_capacity(alpha, beta, P)[1], abs=1e-6)
    assert abs(d.power - P) < 1e-8 * P


def test_armak_white_routing():
    d = armak_capacity(RationalSpectrum.arma1(0.3, 0.3), 3.0)
    assert d.kind == "white" and d.rate == pytest.approx(math.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        armak_capacity(RationalSpectrum.white(), 3.0, route_white=False)


def test_k2_frozen_with_dual_oracles():
    d = armak_capacity(K2, 1.0, SearchOptions(starts=16))
    # frozen from a 64-start run
    assert d.rate == pytest.approx(0.5092250161, abs=1e-8)
    assert abs(d.power - 1.0) < 1e-8
    C = spectral_waterfill(K2, 1.0).capacity
    assert C <= d.rate <= 2 * C and d.rate - C <= 0.5 * math.log(2)
    # oracle 1: sweep of directions on the power boundary using the iterative solver
    ss = to_state_space(K2)
    best = -np.inf
    for phi in np.linspace(0, 2 * np.pi, 721)[:-1]:
        u = np.array([[np.cos(phi), np.sin(phi)]])
        lo, hi, ok = 0.0, 50.0, None
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            try:
                sol = dare_stabilizing(ss.F, ss.G, mid * u + ss.H, max_iter=20000)
            except Exception:
                hi = mid
                continue
            if (mid * u @ sol.sigma_plus @ (mid * u).T).item() > 1.0:
                hi = mid
            else:
                lo, ok = mid, sol
        if ok is not None:
            best = max(best, 0.5 * math.log(ok.innovation_variance))
    assert best <= d.rate + 1e-9
    assert best >= d.rate - 1e-4
    # oracle 2: finite-block feedback capacity is a lower bound
    assert nblock_feedback(toeplitz_covariance(K2, 16), 1.0).value <= d.rate + 1e-6


def test_monotone_concave_in_power():
    s = RationalSpectrum.arma1(0.4, -0.6)
    Ps = np.linspace(0.2, 6, 9)
    C = np.array([feedback_capacity(s, P).rate for P in Ps])
    assert np.all(np.diff(C) > 0)
    assert np.all(C[1:-1] >= 0.5 * (C[:-2] + C[2:]) - 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(0.05, 20))
def test_feedback_bounds(alpha, beta, P):
    s = RationalSpectrum.arma1(alpha, beta)
    cfb = feedback_capacity(s, P).rate
    c = spectral_waterfill(s, P).capacity
    assert c - 1e-9 <= cfb <= 2 * c + 1e-9
    assert cfb - c <= 0.5 * math.log(2) + 1e-12


def test_white_equals_nonfeedback():
    s = RationalSpectrum.white(2.0)
    assert feedback_capacity(s, 3.0).rate == pytest.approx(spectral_waterfill(s, 3.0).capacity, abs=1e-12)


# white filters


def test_white_blaschke_examples():
    d = white_blaschke_filter(1.0, 3.0, BlaschkeProduct((0.5,), (1,)))
    assert d.rate == pytest.approx(math.log(2)) and d.power == pytest.approx(3.0, abs=1e-12)
    assert np.allclose(d.output_spectrum(theta_grid(64)), 4.0)
    a = 0.25 ** 0.25
    d2 = white_blaschke_filter(1.0, 3.0, BlaschkeProduct((a, a), (1, 2)))
    z = np.exp(1j * theta_grid(4096))
    assert d2.rate == pytest.approx(math.log(2), abs=1e-10)
    assert float(np.mean(np.abs(d2.filter.b(z)) ** 2)) == pytest.approx(3.0, abs=1e-10)
    assert float(np.mean(np.log(np.abs(d2.filter.one_plus_b(z)) ** 2))) / 2 == pytest.approx(math.log(2), abs=1e-10)
    d0 = white_blaschke_filter(1.0, 0.0, BlaschkeProduct(()))
    assert d0.rate == 0.0 and d0.power == 0.0
    with pytest.raises(ValueError):
        white_blaschke_filter(1.0, 3.0, BlaschkeProduct((0.6,), (1,)))


# verifiers


def test_sufficiency_pass_and_failures():
    s = RationalSpectrum.arma1(0, 0.5)
    d = arma1_filter(0, 0.5, 1)
    rep = verify_sufficiency(d.filter, s, 1.0)
    assert rep.ok and rep.values["power_residual"] < 1e-8 and rep.values["anticausal_residual"] < 1e-9
    assert not verify_sufficiency(RationalFilter.zero(), s, 1.0).ok
    bad, _, _ = closed_form_filter(0, 0.5, 1, y_scale=1.01)
    rb = verify_sufficiency(bad, s, 1.0)
    assert not rb.checks["anticausal"] and rb.values["anticausal_residual"] >= 1e-6


def test_sufficiency_rejects_circle_pole():
    with pytest.raises(ValueError):
        verify_sufficiency(RationalFilter(np.array([1.0, 0.5]), np.array([1.0, -1.0])), RationalSpectrum.arma1(0, 0.5), 1.0)


def test_necessary_examples():
    s = RationalSpectrum.arma1(0, 0.5)
    d = arma1_filter(0, 0.5, 1)
    assert verify_necessary(0.0, d.filter, s, 1.0).ok
    assert verify_necessary(3.0, RationalFilter.zero(), RationalSpectrum.white(), 3.0).ok
    rep = verify_necessary(1.0, RationalFilter.zero(), s, 1.0)
    # constant S_V with B = 0 cannot meet water-filling on a colored spectrum
    assert rep.checks["power"] and not rep.checks["water_filling"]
    # with B = 0 the orthogonality expression is the constant S_V itself
    assert rep.checks["orthogonality"]


def test_armak_sufficiency_examples():
    s = RationalSpectrum.arma1(0, 0.5)
    d = arma1_filter(0, 0.5, 1)
    assert verify_armak_sufficiency(d, s, 1.0).ok
    small = design_from_direction(s, 0.9 * d.x_direction)
    rep = verify_armak_sufficiency(small, s, 1.0)
    assert not rep.checks["power"]
    k2 = armak_capacity(K2, 1.0, SearchOptions(starts=8))
    r2 = verify_armak_sufficiency(k2, K2, 1.0)
    assert set(r2.checks) == {"power", "eigen_outside", "eigen_distinct", "spectrum_equal", "spectrum_below_min"}
    assert r2.checks["power"]

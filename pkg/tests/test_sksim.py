import math

import numpy as np
import pytest

from gfcap.fbcap import arma1_capacity, feedback_capacity
from gfcap.riccati import dare_stabilizing, riccati_recursion
from gfcap.sksim import (SkConfig, comparison_scaled_mse, constellation, decode_constellation, error_bound,
                         simulate_message_refinement, simulate_state_refinement, trial_normals)
from gfcap.spectra import RationalSpectrum, to_state_space

AR1 = RationalSpectrum.arma1(0.0, 0.5)
X0 = arma1_capacity(0.0, 0.5, 1.0)[0]
CAP = -math.log(X0)


@pytest.fixture(scope="module")
def ar1_state():
    return simulate_state_refinement(SkConfig(AR1, 1.0, horizon=400, trials=4000, seed=1))


def _dare(design):
    ss = to_state_space(AR1)
    X = np.asarray(design.x_direction, dtype=float).reshape(1, ss.k)
    return ss, X, dare_stabilizing(ss.F, ss.G, X + ss.H)


def test_state_scheme_sigma_limit(ar1_state):
    _, _, sol = _dare(feedback_capacity(AR1, 1.0))
    assert np.max(np.abs(ar1_state.sigma_trace[-1] - sol.sigma_plus)) < 1e-8
    assert ar1_state.deterministic_innovation[-1] == pytest.approx(sol.innovation_variance, abs=1e-8)


def test_state_scheme_matches_recursion_exactly(ar1_state):
    ss, X, _ = _dare(feedback_capacity(AR1, 1.0))
    k = ss.k
    traj = riccati_recursion(ss.F, ss.G, X + ss.H, ar1_state.sigma_trace[k + 1], 50)
    assert np.array_equal(traj, ar1_state.sigma_trace[k + 1: k + 52])


def test_state_scheme_rate_and_power(ar1_state):
    r = ar1_state
    assert abs(r.empirical_rate - CAP) < 0.02 * CAP
    assert abs(r.empirical_rate - CAP) < 4 * r.rate_stderr + 1e-3
    assert abs(r.avg_power - 1.0) < 0.02
    assert r.theoretical_rate == pytest.approx(CAP, abs=1e-8)


def test_state_scheme_statistics(ar1_state):
    ex = ar1_state.extras
    T = ar1_state.trials
    for checks in ex["covariance_checks"].values():
        for s, m in zip(checks["sample"], checks["model"]):
            # sample variance of a normal has relative standard error sqrt(2/(T-1))
            assert abs(s - m) <= 3 * math.sqrt(2 / (T - 1)) * m + 1e-12
    assert all(z < 4.5 for z in ex["orthogonality_max_z"].values())
    assert ex["innovation_tail_rel_std"] < 0.05


def test_zero_message_gives_zero_rate():
    r = simulate_state_refinement(SkConfig(AR1, 1.0, horizon=60, trials=200, initial_power=0.0))
    assert np.all(r.sigma_trace == 0)
    assert np.all(r.deterministic_innovation == 1.0)
    assert r.theoretical_rate == 0.0


def test_white_state_and_message():
    w = RationalSpectrum.white(1.0)
    s = simulate_state_refinement(SkConfig(w, 3.0, horizon=200, trials=4000, seed=2))
    assert abs(s.empirical_rate - math.log(2)) < 0.02 * math.log(2)
    m = simulate_message_refinement(SkConfig(w, 3.0, horizon=200, trials=4000, seed=2))
    assert abs(m.empirical_rate - math.log(2)) < 0.02 * math.log(2)
    assert abs(m.avg_power - 3.0) < 0.06


def test_message_scheme_ar1():
    r = simulate_message_refinement(SkConfig(AR1, 1.0, horizon=400, trials=4000, seed=3))
    ex = r.extras
    assert abs(ex["tail_variance_ratio"] - X0 ** 2) < 0.01 * X0 ** 2
    assert abs(r.empirical_rate - CAP) < 0.02 * CAP
    assert abs(r.avg_power - 1.0) < 0.02
    # whitened-output least squares and the Kalman filter give the same mean-square error
    assert np.max(np.abs(ex["comparison_scaled_mse"] / ex["deterministic_scaled_mse"] - 1)) < 1e-10


def test_message_and_state_schemes_agree():
    a = simulate_state_refinement(SkConfig(AR1, 1.0, horizon=300, trials=3000, seed=4))
    b = simulate_message_refinement(SkConfig(AR1, 1.0, horizon=300, trials=3000, seed=5))
    assert abs(a.empirical_rate - b.empirical_rate) < 2 * math.hypot(a.rate_stderr, b.rate_stderr) + 5e-3


def test_comparison_mse_white_closed_form():
    # white noise: d_n = xi^{-(n-1)}, so E(V - V_n)^2 = 1 / (1/P + sum_j xi^{-2(j-1)})
    P = 3.0
    xi = math.sqrt(1 / (1 + P))
    q = comparison_scaled_mse(0.0, 0.0, xi, P, 30)
    direct = np.array([xi ** (-2 * n) / (1 / P + sum(xi ** (-2 * (j - 1)) for j in range(1, n + 1)))
                       for n in range(1, 31)])
    assert np.allclose(q, direct, rtol=1e-12)


def test_decode_low_and_high_rate():
    w = RationalSpectrum.white(1.0)
    C = 0.5 * math.log(4.0)
    lo = decode_constellation(SkConfig(w, 3.0, horizon=20, trials=20000, rate_nats=0.5 * C))
    assert lo.error_count == 0 and lo.bound < 1e-8
    hi = decode_constellation(SkConfig(w, 3.0, horizon=20, trials=5000, rate_nats=1.2 * C))
    assert hi.error_rate > 0.1


def test_constellation_spacing():
    pts, d = constellation(10, 0.3)
    M = int(round(math.exp(3.0)))
    assert pts.size == M and d == pytest.approx(2 / (M - 1))
    assert np.allclose(np.diff(pts), d)
    with pytest.raises(ValueError):
        constellation(1, 0.1)


def test_bound_decays_with_block_length():
    C = CAP
    b = [decode_constellation(SkConfig(AR1, 1.0, horizon=n, trials=2000, rate_nats=0.6 * C)).bound
         for n in (10, 15, 20)]
    assert b[0] > b[1] > b[2]
    assert error_bound(1.0, X0, 20, 0.6 * C) < error_bound(1.0, X0, 10, 0.6 * C)


def test_deterministic_for_fixed_seed():
    cfg = lambda: SkConfig(AR1, 1.0, horizon=50, trials=300, seed=9)
    a = simulate_state_refinement(cfg())
    b = simulate_state_refinement(cfg())
    assert a.empirical_rate == b.empirical_rate and np.array_equal(a.power_trace, b.power_trace)
    # per-trial streams: a sub-range of trials reproduces the same draws
    full = trial_normals(9, 10, (3,))
    assert np.array_equal(full[4:], trial_normals(9, 6, (3,), start=4))


def test_rejections():
    with pytest.raises(ValueError):
        decode_constellation(SkConfig(AR1, 1.0, horizon=10, trials=0, rate_nats=0.1))
    with pytest.raises(ValueError):
        decode_constellation(SkConfig(AR1, 1.0, horizon=10, trials=10))
    with pytest.raises(ValueError):
        simulate_state_refinement(SkConfig(AR1, 1.0, horizon=10, trials=1))
    with pytest.raises(ValueError):
        simulate_state_refinement(SkConfig(AR1, 1.0, horizon=10, trials=10, initial_power=5.0))

"""Feedback capacity of ARMA(k) Gaussian channels.

Everything is computed on the unit-innovation model and then rescaled: a noise
spectrum sigma2 |P/Q|^2 with power P behaves like |P/Q|^2 with power P/sigma2.
The state-space model is S_{n+1} = F S_n + G U_n, Z_n = H S_n + U_n, and a
projection direction X drives the input X_n = X (S_n - E[S_n | Y^{n-1}]).
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import numpy.polynomial.polynomial as npoly
from scipy.optimize import brentq, minimize

from .riccati import DareSolution, dare_residual, dare_schur_sigma, dare_stabilizing
from .spectra import (BlaschkeProduct, RationalSpectrum, SpectrumError, det_poly, is_anticausal,
                      jensen_log_integral, laurent_coeffs, theta_grid, to_state_space)

GRID = 4096
CANCEL_TOL = 1e-7


# ---------------------------------------------------------------------------
# rational filters


def _poly_trim(c: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    scale = max(1.0, float(np.max(np.abs(c))))
    nz = np.flatnonzero(np.abs(c) > tol * scale)
    return c[: nz[-1] + 1] if nz.size else c[:1]


def cancel_common_factors(num: np.ndarray, den: np.ndarray, tol: float = CANCEL_TOL
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Remove root pairs shared by num and den (both normalized to value 1 at z=0).

    A numerator root is cancelled when exactly one denominator root lies within ``tol``;
    when several do, the pairing is ambiguous, so it is left alone with a warning.
    """
    num = _poly_trim(num)
    den = _poly_trim(den)
    rn = list(npoly.polyroots(num)) if num.size > 1 else []
    rd = list(npoly.polyroots(den)) if den.size > 1 else []
    out_n = []
    for r in rn:
        close = [i for i, s in enumerate(rd) if abs(r - s) <= tol * max(1.0, abs(r))]
        if len(close) == 1:
            rd.pop(close[0])
        else:
            if len(close) > 1:
                warnings.warn(f"ambiguous near-cancellation at root {r:.6g}; not cancelled",
                              RuntimeWarning, stacklevel=2)
            out_n.append(r)
    if len(out_n) == len(rn):
        return num, den
    n_new = _from_roots(out_n) * num[0]
    d_new = _from_roots(rd) * den[0]
    return n_new, d_new


def _from_roots(roots) -> np.ndarray:
    if len(roots) == 0:
        return np.ones(1)
    c = npoly.polyfromroots(np.asarray(roots, dtype=complex))
    return np.real(c / c[0])


@dataclass(frozen=True)
class RationalFilter:
    """1 + B(z) = num(z)/den(z) with num(0) = den(0) = 1, so B(0) = 0."""

    num: np.ndarray
    den: np.ndarray

    def one_plus_b(self, z) -> np.ndarray:
        return npoly.polyval(z, self.num) / npoly.polyval(z, self.den)

    def b(self, z) -> np.ndarray:
        return self.one_plus_b(z) - 1.0

    @property
    def b_at_zero(self) -> float:
        return float(self.num[0] / self.den[0] - 1.0)

    def to_dict(self) -> dict:
        return {"num": [float(v) for v in self.num], "den": [float(v) for v in self.den]}

    @classmethod
    def from_dict(cls, d: dict) -> "RationalFilter":
        return cls(np.asarray(d["num"], dtype=float), np.asarray(d["den"], dtype=float))

    @classmethod
    def zero(cls) -> "RationalFilter":
        return cls(np.ones(1), np.ones(1))


def canonical_spectrum(num: np.ndarray, den: np.ndarray, scale: float) -> RationalSpectrum:
    """RationalSpectrum equal to scale |num/den|^2 on the circle, roots reflected outside."""
    parts = []
    for c in (num, den):
        c = _poly_trim(c)
        r = npoly.polyroots(c) if c.size > 1 else np.array([], dtype=complex)
        if np.any(np.abs(np.abs(r) - 1.0) < 1e-9):
            raise SpectrumError("spectral factor has a root on the unit circle")
        inside = np.abs(r) < 1.0
        fac = float(np.prod(1.0 / np.abs(r[inside]) ** 2)) if np.any(inside) else 1.0
        r = np.where(inside, 1.0 / np.conj(r), r)
        parts.append((_from_roots(r), fac * c[0] ** 2))
    (pn, fn), (pd, fd) = parts
    return RationalSpectrum(tuple(pn[1:]), tuple(pd[1:]), scale * fn / fd)


# ---------------------------------------------------------------------------
# designs


@dataclass
class FeedbackDesign:
    x_direction: np.ndarray
    dare: DareSolution
    rate: float
    power: float
    filter_num: np.ndarray
    filter_den: np.ndarray
    output_spectrum: RationalSpectrum
    x0: float | None = None
    kind: str = "armak"
    search_log: list = field(default_factory=list)

    @property
    def filter(self) -> RationalFilter:
        return RationalFilter(self.filter_num, self.filter_den)

    @property
    def rate_bits(self) -> float:
        return self.rate / math.log(2.0)

    def check_invariants(self, spec: RationalSpectrum, n_grid: int = GRID) -> dict:
        """Residuals of the rate, power, output-spectrum and causality identities."""
        th = theta_grid(n_grid)
        z = np.exp(1j * th)
        one_b = self.filter.one_plus_b(z)
        sz = spec(th)
        rate_j = 0.5 * (jensen_log_integral(self.filter_num) - jensen_log_integral(self.filter_den))
        power_q = float(np.mean(np.abs(one_b - 1.0) ** 2 * sz))
        sy = self.output_spectrum(th)
        return {
            "rate_jensen": abs(rate_j - self.rate),
            "power_quadrature": abs(power_q - self.power),
            "output_spectrum": float(np.max(np.abs(sy - np.abs(one_b) ** 2 * sz) / np.maximum(1.0, sy))),
            "b_at_zero": abs(self.filter.b_at_zero),
        }


def arma1_capacity(alpha: float, beta: float, P: float, tol: float = 1e-14) -> tuple[float, float]:
    """(x0, C_FB) for the ARMA(1) channel with |alpha| <= 1, |beta| < 1. Capacity in nats."""
    if not P > 0:
        raise ValueError("P must be positive")
    if abs(alpha) > 1 or abs(beta) >= 1:
        raise ValueError("need |alpha| <= 1 and |beta| < 1")
    s = float(np.sign(beta - alpha))

    def phi(x):
        return P * x * x * (1 + s * beta * x) ** 2 - (1 - x * x) * (1 + s * alpha * x) ** 2

    lo, hi = 0.0, 1.0  # phi(0) = -1 < 0 < phi(1)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            hi = mid
        else:
            lo = mid
    x0 = 0.5 * (lo + hi)
    return x0, -math.log(x0)


def arma1_filter(alpha: float, beta: float, P: float) -> FeedbackDesign:
    """Closed-form optimal ARMA(1) design; white input (alpha == beta) is routed to the Blaschke filter."""
    if alpha == beta:
        return white_blaschke_filter(1.0, P, BlaschkeProduct((math.sqrt(1.0 / (1.0 + P)),), (1,)))
    if abs(alpha) >= 1:
        raise ValueError("closed-form filter needs |alpha| < 1")
    x0, cap = arma1_capacity(alpha, beta, P)
    s = float(np.sign(beta - alpha))
    xi = s * x0
    y = (xi * xi - 1) / xi * (1 + alpha * xi) / (1 + beta * xi)
    r = -(alpha * xi - beta * y) * xi
    if not abs(r) < 1:
        raise ArithmeticError(f"output spectrum zero |r| = {abs(r)} is not inside the disc")
    num = npoly.polymul([1.0, -1.0 / xi], [1.0, -r])
    den = npoly.polymul([1.0, -xi], [1.0, alpha])
    num, den = cancel_common_factors(num, den)
    S_Y = RationalSpectrum((-r,), (beta,), 1.0 / xi ** 2)
    # closed-form Riccati quantities: chi = X, h = chi + alpha - beta
    chi = -(1 + alpha * xi) / xi
    h = chi + alpha - beta
    s2 = (1 - xi * xi) / (1 + beta * xi) ** 2
    F = np.array([[-beta]])
    G = np.array([[1.0]])
    gamma = np.array([[(-beta - xi) / h]])
    S = np.array([[s2]])
    dare = DareSolution(S, gamma, np.array([[xi]]), 1.0 / xi ** 2,
                        dare_residual(F, G, [[h]], S), 0)
    return FeedbackDesign(np.array([[chi]]), dare, cap, y * y / (1 - xi * xi), num, den, S_Y,
                          x0=x0, kind="arma1")


def white_blaschke_filter(N: float, P: float, b: BlaschkeProduct, tol: float = 1e-10) -> FeedbackDesign:
    """Design 1 + B = b(z) for white noise of power N."""
    if N <= 0 or P < 0:
        raise ValueError("need N > 0 and P >= 0")
    prod = float(np.prod(np.square(b.zeros))) if b.zeros else 1.0
    target = N / (P + N)
    if abs(prod - target) > tol:
        raise ValueError(f"product of squared zeros {prod:.15g} != N/(P+N) = {target:.15g}")
    num, den = b.polys()
    th = theta_grid(GRID)
    z = np.exp(1j * th)
    bz = b(z)
    power = float(np.mean(np.abs(bz - 1.0) ** 2)) * N
    rate = 0.5 * math.log(b.modulus_squared)
    empty = DareSolution(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((0, 0)), 1.0, 0.0, 0)
    return FeedbackDesign(np.zeros((1, 0)), empty, rate, power, num, den,
                          RationalSpectrum.white(N * b.modulus_squared),
                          x0=math.sqrt(prod), kind="white")


def build_filter(spec: RationalSpectrum, X, dare: DareSolution) -> tuple[RationalFilter, RationalSpectrum]:
    """1 + B(z) and S_Y from the four determinant polynomials of the state-space design."""
    ss = to_state_space(spec)
    F, G, H = ss.F, ss.G, ss.H
    X = np.asarray(X, dtype=float).reshape(1, ss.k)
    h = X + H
    A = det_poly(F - G @ h)
    A_sharp = det_poly(F - dare.gamma @ h)
    R = det_poly(F - dare.gamma @ H)
    Pp = det_poly(F - G @ H)
    num, den = cancel_common_factors(npoly.polymul(A, R), npoly.polymul(A_sharp, Pp))
    S_Y = canonical_spectrum(R, det_poly(F), spec.innovation_variance * dare.innovation_variance)
    return RationalFilter(num, den), S_Y


def design_from_direction(spec: RationalSpectrum, X, **dare_kw) -> FeedbackDesign:
    ss = to_state_space(spec)
    X = np.asarray(X, dtype=float).reshape(1, ss.k)
    dare = dare_stabilizing(ss.F, ss.G, X + ss.H, **dare_kw)
    filt, S_Y = build_filter(spec, X, dare)
    power = spec.innovation_variance * (X @ dare.sigma_plus @ X.T).item()
    rate = 0.5 * math.log(dare.innovation_variance)
    return FeedbackDesign(X, dare, rate, power, filt.num, filt.den, S_Y)


# ---------------------------------------------------------------------------
# ARMA(k) search


class _Evaluator:
    """Fast (rate, power) of a direction on the unit-innovation model."""

    def __init__(self, spec: RationalSpectrum):
        ss = to_state_space(spec)
        self.F, self.G, self.H = ss.F, ss.G, ss.H
        self.k = ss.k
        self.nfev = 0

    def __call__(self, X: np.ndarray) -> tuple[float, float]:
        self.nfev += 1
        Xr = np.ravel(np.asarray(X, dtype=float))
        h = Xr + self.H[0]
        if self.k == 1:
            # scalar DARE in drift-free form: s = (f^2 - 1)/h^2 for |f| > 1, else 0
            f = self.F[0, 0] - h[0]
            if abs(abs(f) - 1.0) < 1e-8:
                return math.nan, math.nan
            if abs(f) < 1.0:
                return 0.0, 0.0
            s = (f * f - 1.0) / (h[0] * h[0])
            return 0.5 * math.log(f * f), Xr[0] ** 2 * s
        F_eff = self.F - self.G @ h[None, :]
        eig = np.abs(np.linalg.eigvals(F_eff))
        if np.any(np.abs(eig - 1.0) < 1e-8):
            return math.nan, math.nan
        if np.all(eig < 1.0):
            return 0.0, 0.0
        S = dare_schur_sigma(self.F, self.G, h)
        if not np.all(np.isfinite(S)):
            return math.nan, math.nan
        return 0.5 * math.log1p(float(h @ S @ h)), float(Xr @ S @ Xr)


@dataclass
class SearchOptions:
    starts: int = 64
    seed: int = 0
    penalty_weights: Sequence[float] = (1e2, 1e4, 1e6)
    xatol: float = 1e-10
    fatol: float = 1e-14
    maxiter: int = 4000
    threads: int | None = None


def _rescale_to_power(ev: _Evaluator, X: np.ndarray, P: float) -> np.ndarray | None:
    """Scale X along its ray so that the power constraint is active."""
    if not np.any(X):
        return None

    def g(c):
        _, p = ev(c * X)
        return (p if math.isfinite(p) else math.inf) - P

    hi = 1.0
    ghi = g(hi)
    grow = 0
    while not (ghi > 0 and math.isfinite(ghi)):
        hi *= 2.0
        ghi = g(hi)
        grow += 1
        if grow > 60:
            return None
    lo = hi
    glo = ghi
    shrink = 0
    while glo > 0:
        lo *= 0.5
        glo = g(lo)
        shrink += 1
        if shrink > 200:
            return None
    if not math.isfinite(glo):
        return None
    # bracket [lo, hi] with g(lo) <= 0 < g(hi); bisect through nan regions conservatively
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if math.isfinite(gm) and gm <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo * X


def _local_search(ev: _Evaluator, X0: np.ndarray, P: float, opts: SearchOptions) -> dict:
    X = np.array(X0, dtype=float)
    nfev0 = ev.nfev

    for w in opts.penalty_weights:
        def obj(x, w=w):
            rate, p = ev(x)
            if not math.isfinite(rate):
                return 1e6
            viol = max(0.0, p - P) / P
            return -rate + w * viol * viol

        res = minimize(obj, X, method="Nelder-Mead",
                       options={"xatol": opts.xatol, "fatol": opts.fatol, "maxiter": opts.maxiter,
                                "initial_simplex": _simplex(X)})
        X = res.x
    Xs = _rescale_to_power(ev, X, P)
    if Xs is None:
        rate, p = ev(X)
        if math.isfinite(rate) and p <= P * (1 + 1e-8):
            return {"start": list(map(float, X0)), "x": X, "rate": rate, "power": p,
                    "nfev": ev.nfev - nfev0, "active": False}
        return {"start": list(map(float, X0)), "x": X, "rate": -math.inf, "power": math.nan,
                "nfev": ev.nfev - nfev0, "active": False}
    rate, p = ev(Xs)
    return {"start": list(map(float, X0)), "x": Xs, "rate": rate, "power": p,
            "nfev": ev.nfev - nfev0, "active": True}


def _simplex(X: np.ndarray) -> np.ndarray:
    k = X.size
    step = 0.1 * max(1.0, float(np.max(np.abs(X))))
    sim = np.tile(X, (k + 1, 1))
    for i in range(k):
        sim[i + 1, i] += step
    return sim


def _starts(spec: RationalSpectrum, ev: _Evaluator, P: float, opts: SearchOptions) -> list[np.ndarray]:
    k = ev.k
    rng = np.random.default_rng(opts.seed)
    starts = [np.full(k, 1e-3)]  # X = 0 neighborhood
    if np.any(ev.H):
        starts.append(ev.H.ravel().copy())
        starts.append(-ev.H.ravel().copy())
    if k == 1:
        (a,), (b,) = spec.padded()
        if abs(a) < 1 and a != b:
            x0, _ = arma1_capacity(a, b, P)
            xi = np.sign(b - a) * x0
            starts.append(np.array([-(1 + a * xi) / xi]))
    for _ in range(opts.starts):
        d = rng.standard_normal(k)
        d /= np.linalg.norm(d)
        Xs = _rescale_to_power(ev, d, P)
        starts.append(Xs if Xs is not None else d)
    return starts


def armak_capacity(spec: RationalSpectrum, P: float, opts: SearchOptions | None = None,
                   route_white: bool = True) -> FeedbackDesign:
    """Feedback capacity by multi-start search over the projection direction X."""
    opts = opts or SearchOptions()
    if not P > 0:
        raise ValueError("P must be positive")
    if spec.is_white:
        if not route_white:
            raise ValueError("white spectrum: use white_blaschke_filter")
        N = spec.innovation_variance
        return white_blaschke_filter(N, P, BlaschkeProduct((math.sqrt(N / (P + N)),), (1,)))
    if np.min(spec(theta_grid(GRID))) <= 0:
        raise ValueError("spectrum must be bounded away from zero on the grid")
    Pn = P / spec.innovation_variance
    ev = _Evaluator(spec)
    starts = _starts(spec, ev, Pn, opts)
    threads = opts.threads or int(os.environ.get("GFC_THREADS", "1") or 1)
    if threads > 1:
        # evaluators keep a call counter only, so separate instances per worker keep it exact
        with ThreadPoolExecutor(max_workers=threads) as pool:
            log = list(pool.map(lambda x: _local_search(_Evaluator(spec), x, Pn, opts), starts))
    else:
        log = [_local_search(ev, x, Pn, opts) for x in starts]
    feasible = [e for e in log if math.isfinite(e["rate"])]
    if not feasible:
        raise RuntimeError("all search starts were infeasible")
    best = min(feasible, key=lambda e: (-e["rate"], tuple(np.ravel(e["x"]))))
    design = design_from_direction(spec, best["x"])
    design.search_log = [{"start": e["start"], "x": [float(v) for v in np.ravel(e["x"])],
                          "rate": float(e["rate"]), "power": float(e["power"]) * spec.innovation_variance,
                          "nfev": int(e["nfev"]), "active": bool(e["active"])} for e in log]
    return design


def feedback_capacity(spec: RationalSpectrum, P: float, opts: SearchOptions | None = None) -> FeedbackDesign:
    """Closed form for ARMA(1) with |alpha| < 1, white routing, otherwise the search."""
    if spec.is_white:
        return armak_capacity(spec, P, opts)
    if spec.order == 1 and spec.innovation_variance == 1.0:
        (a,), (b,) = spec.padded()
        if abs(a) < 1:
            return arma1_filter(a, b, P)
    return armak_capacity(spec, P, opts)


# ---------------------------------------------------------------------------
# verifiers


@dataclass
class Report:
    checks: dict
    values: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(bool(v) for v in self.checks.values())

    def to_dict(self) -> dict:
        out = {"pass": self.ok}
        out.update({f"{k}_ok": bool(v) for k, v in self.checks.items()})
        out.update(self.values)
        return out


def _grid(n_grid):
    th = theta_grid(n_grid)
    return th, np.exp(1j * th)


def verify_sufficiency(B: RationalFilter, spec: RationalSpectrum, P: float, n_grid: int = GRID,
                       m: int | None = None) -> Report:
    """Sufficient optimality conditions for a stationary filter with S_V = 0.

    The multiplier lambda is fitted by least squares to the causal coefficients of
    lambda / (1 + B(1/z)) - B(z) S_Z(z), then checked against the grid minimum of S_Y.
    """
    th, z = _grid(n_grid)
    den_on_circle = npoly.polyval(z, B.den)
    if np.min(np.abs(den_on_circle)) < 1e-8 or np.min(np.abs(npoly.polyval(z, B.num))) < 1e-8:
        raise ValueError("filter has a pole or zero on the unit circle")
    sz = spec(th)
    if np.min(sz) <= 0:
        raise ValueError("spectrum is not bounded away from zero")
    one_b = B.one_plus_b(z)
    power = float(np.mean(np.abs(one_b - 1.0) ** 2 * sz))
    sy = np.abs(one_b) ** 2 * sz
    sy_min = float(np.min(sy))
    degs = len(B.num) + len(B.den) + len(spec.P) + len(spec.Q)
    m = m or max(64, 8 * degs)

    zf = lambda w: 1.0 / np.conj(B.one_plus_b(w))
    a = laurent_coeffs(zf, m, n_grid)
    bs = laurent_coeffs(lambda w: B.b(w) * spec(np.angle(w)), m, n_grid)
    a_c, b_c = a.causal_part(), bs.causal_part()
    denom = float(a_c @ a_c)
    if denom > 1e-24:
        lam = float(a_c @ b_c) / denom
        lam_rule = "least-squares"
    else:
        lam = sy_min
        lam_rule = "grid-min"
    series = type(a)(lam * a.coeffs - bs.coeffs, m, a.grid_size, a.aliasing_bound + bs.aliasing_bound)
    anti_ok, resid = is_anticausal(series, 1e-9)
    margin = sy_min - lam
    checks = {
        "power": abs(power - P) < 1e-8 * (1 + P),
        "anticausal": anti_ok,
        "lambda_positive": lam > 0,
        "lambda_below_min": margin >= -1e-9 * max(1.0, sy_min),
    }
    return Report(checks, {"power_residual": abs(power - P), "lambda": lam, "lambda_rule": lam_rule,
                           "sy_min": sy_min, "lambda_margin": margin, "anticausal_residual": resid,
                           "grid": n_grid, "order": m})


def verify_necessary(S_V, B: RationalFilter, spec: RationalSpectrum, P: float, n_grid: int = GRID,
                     tol: float = 1e-8) -> Report:
    """Power, water-filling and orthogonality residuals for a (S_V, B) pair.

    ``S_V`` is either samples on the ``n_grid`` circle grid or a callable of theta.
    """
    th, z = _grid(n_grid)
    sv = np.asarray(S_V(th) if callable(S_V) else S_V, dtype=float)
    if sv.shape == ():
        sv = np.full(n_grid, float(sv))
    if sv.shape != th.shape:
        raise ValueError("S_V samples must match the grid")
    if np.min(sv) < 0:
        raise ValueError("S_V must be nonnegative")
    sz = spec(th)
    one_b = B.one_plus_b(z)
    bz = one_b - 1.0
    power = float(np.mean(sv + np.abs(bz) ** 2 * sz))
    sy = sv + np.abs(one_b) ** 2 * sz
    lam = float(np.min(sy))
    wf = float(np.max(np.abs(sv * (sy - lam))))
    orth_vals = sv + bz * sz * np.conj(one_b)
    c = np.fft.fft(orth_vals) / n_grid * np.where(np.arange(n_grid) % 2 == 0, 1.0, -1.0)
    causal = np.abs(c[1: n_grid // 2])
    orth = float(np.max(causal))
    scale = 1.0 + float(np.sum(np.abs(c)))
    checks = {
        "power": abs(power - P) < tol * (1 + P),
        "water_filling": wf < tol * (1 + P) * (1 + float(np.max(sy))),
        "orthogonality": orth < 1e-9 * scale,
    }
    return Report(checks, {"power_residual": abs(power - P), "water_filling_residual": wf,
                           "orthogonality_residual": orth, "lambda": lam, "grid": n_grid})


def sy_rational(S_Y: RationalSpectrum, z) -> np.ndarray:
    """S_Y(z) = sigma2 R(z) R(1/z) / (Q(z) Q(1/z)) off the unit circle."""
    z = np.asarray(z, dtype=complex)
    return (S_Y.innovation_variance * npoly.polyval(z, S_Y.P) * npoly.polyval(1 / z, S_Y.P)
            / (npoly.polyval(z, S_Y.Q) * npoly.polyval(1 / z, S_Y.Q)))


def verify_armak_sufficiency(design: FeedbackDesign, spec: RationalSpectrum, P: float,
                             n_grid: int = GRID) -> Report:
    """Power, eigenvalue and output-spectrum conditions for a state-space design."""
    ss = to_state_space(spec)
    X = np.asarray(design.x_direction, dtype=float).reshape(1, ss.k)
    eig = np.linalg.eigvals(ss.F - ss.G @ (X + ss.H))
    mod = np.abs(eig)
    sep = float(min((abs(a - b) for i, a in enumerate(eig) for b in eig[i + 1:]), default=math.inf))
    vals = sy_rational(design.output_spectrum, eig)
    sy_min = float(np.min(design.output_spectrum(theta_grid(n_grid))))
    v = np.real(vals)
    dev = float(np.max(v) - np.min(v)) / max(1.0, float(np.max(np.abs(v)))) if v.size else 0.0
    imag = float(np.max(np.abs(np.imag(vals)))) if v.size else 0.0
    margin = sy_min - float(np.max(v)) if v.size else math.inf
    power_res = abs(design.power - P)
    checks = {
        "power": power_res < 1e-7 * (1 + P),
        "eigen_outside": bool(np.all(mod > 1 + 1e-8)),
        "eigen_distinct": sep > 1e-6,
        "spectrum_equal": dev < 1e-7 and imag < 1e-7 * max(1.0, float(np.max(np.abs(v)))),
        "spectrum_below_min": margin >= -1e-7 * max(1.0, sy_min),
    }
    return Report(checks, {"power_residual": power_res, "eigenvalues": [complex(e) for e in eig],
                           "moduli": [float(x) for x in mod], "separation": sep,
                           "sy_at_eigenvalues": [float(x) for x in v], "sy_deviation": dev,
                           "sy_min": sy_min, "margin": margin})


__all__ = [
    "RationalFilter", "FeedbackDesign", "SearchOptions", "Report",
    "arma1_capacity", "arma1_filter", "white_blaschke_filter", "build_filter",
    "design_from_direction", "armak_capacity", "feedback_capacity", "verify_sufficiency",
    "verify_necessary", "verify_armak_sufficiency", "cancel_common_factors",
    "canonical_spectrum", "sy_rational",
]

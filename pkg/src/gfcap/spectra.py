"""Rational noise spectra, state-space realizations and circle utilities.

Polynomials are stored as ascending coefficient arrays, so ``c[j]`` is the
coefficient of ``z**j``. The unit circle is sampled as ``theta_k = -pi + 2 pi k / N``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import numpy.polynomial.polynomial as npoly
import scipy.linalg as sla

STABILITY_MARGIN = 1e-9
COPRIME_TOL = 1e-9
DEFAULT_GRID = 4096


class SpectrumError(ValueError):
    """Invalid spectrum or degenerate factorization input."""


class PoleOnCircleError(ValueError):
    """A function sampled on the unit circle has a pole (or near pole) there."""


def theta_grid(n: int = DEFAULT_GRID) -> np.ndarray:
    return -np.pi + 2.0 * np.pi * np.arange(n) / n


def _trim(c: Sequence[float]) -> np.ndarray:
    c = np.asarray(c, dtype=float).ravel()
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else c[:0]


def monic(tail: Sequence[float]) -> np.ndarray:
    """Ascending coefficients of 1 + sum tail[n-1] z^n."""
    return np.concatenate(([1.0], np.asarray(tail, dtype=float)))


def poly_from_roots_monic(roots: Sequence[complex]) -> np.ndarray:
    """Real ascending polynomial with value 1 at z=0 and the given (nonzero) roots."""
    roots = np.asarray(roots, dtype=complex)
    if roots.size == 0:
        return np.ones(1)
    c = npoly.polyfromroots(roots)
    c = c / c[0]
    return np.real(c)


def det_poly(M: np.ndarray) -> np.ndarray:
    """Ascending coefficients of det(I - z M)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.ones(1)
    # descending coefficients of det(sI - M), read in ascending order, are those of det(I - zM)
    return np.real(np.poly(M))


def jensen_log_integral(c: np.ndarray) -> float:
    """Exact value of the integral of log|c(e^{i theta})|^2 dtheta/2pi for a polynomial c."""
    c = _trim(c)
    if c.size == 0:
        raise SpectrumError("zero polynomial")
    roots = npoly.polyroots(c) if c.size > 1 else np.array([])
    if np.any(np.abs(np.abs(roots) - 1.0) < 1e-12):
        raise SpectrumError("polynomial has a root on the unit circle")
    lead = abs(c[0]) if abs(c[0]) > 0 else None
    if lead is None:
        # factor z^m out; |z|=1 so it does not change the modulus
        return jensen_log_integral(c[np.flatnonzero(c)[0]:])
    inside = roots[np.abs(roots) < 1.0]
    return 2.0 * math.log(lead) - 2.0 * float(np.sum(np.log(np.abs(inside))))


@dataclass(frozen=True)
class RationalSpectrum:
    """ARMA(k) power spectral density sigma2 |P/Q|^2 with P, Q monic and stable.

    Common roots of P and Q (to within ``COPRIME_TOL``) are cancelled at
    construction, so a spectrum with P = Q is stored as white noise.
    """

    p_coeffs: tuple = ()
    q_coeffs: tuple = ()
    innovation_variance: float = 1.0

    def __post_init__(self):
        p = _trim(self.p_coeffs)
        q = _trim(self.q_coeffs)
        s2 = float(self.innovation_variance)
        if not np.all(np.isfinite(p)) or not np.all(np.isfinite(q)) or not math.isfinite(s2):
            raise SpectrumError("non-finite spectrum coefficients")
        if s2 <= 0:
            raise SpectrumError(f"innovation variance must be positive, got {s2}")
        with np.errstate(over="ignore", divide="ignore"):  # denormal leading terms put roots at infinity
            rp = npoly.polyroots(monic(p)) if p.size else np.array([], dtype=complex)
            rq = npoly.polyroots(monic(q)) if q.size else np.array([], dtype=complex)
        for name, r in (("P", rp), ("Q", rq)):
            if r.size and np.min(np.abs(r)) < 1.0 + STABILITY_MARGIN:
                raise SpectrumError(
                    f"{name} has a root of modulus {np.min(np.abs(r)):.12g}; all roots must lie outside the unit circle")
        # a root at infinity is the factor 1; dropping it keeps it out of the cancellation pairing
        rp, rq = _cancel_common(rp[np.isfinite(rp)], rq[np.isfinite(rq)])
        if rp.size != p.size or rq.size != q.size:
            p = _trim(poly_from_roots_monic(rp)[1:])
            q = _trim(poly_from_roots_monic(rq)[1:])
        object.__setattr__(self, "p_coeffs", tuple(float(v) for v in p))
        object.__setattr__(self, "q_coeffs", tuple(float(v) for v in q))
        object.__setattr__(self, "innovation_variance", s2)

    @classmethod
    def arma1(cls, alpha: float, beta: float, sigma2: float = 1.0) -> "RationalSpectrum":
        return cls((alpha,), (beta,), sigma2)

    @classmethod
    def white(cls, sigma2: float = 1.0) -> "RationalSpectrum":
        return cls((), (), sigma2)

    @property
    def order(self) -> int:
        return max(len(self.p_coeffs), len(self.q_coeffs))

    @property
    def P(self) -> np.ndarray:
        return monic(self.p_coeffs)

    @property
    def Q(self) -> np.ndarray:
        return monic(self.q_coeffs)

    @property
    def is_white(self) -> bool:
        return self.order == 0

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """(p_1..p_k, q_1..q_k) zero-padded to the common order k."""
        k = self.order
        p = np.zeros(k)
        q = np.zeros(k)
        p[: len(self.p_coeffs)] = self.p_coeffs
        q[: len(self.q_coeffs)] = self.q_coeffs
        return p, q

    def __call__(self, theta) -> np.ndarray:
        return eval_psd(self, theta)

    def to_dict(self) -> dict:
        return {"p": list(self.p_coeffs), "q": list(self.q_coeffs), "sigma2": self.innovation_variance}

    @classmethod
    def from_dict(cls, d: dict) -> "RationalSpectrum":
        unknown = set(d) - {"p", "q", "sigma2"}
        if unknown:
            raise SpectrumError(f"unknown channel fields: {sorted(unknown)}")
        return cls(tuple(d.get("p", ())), tuple(d.get("q", ())), d.get("sigma2", 1.0))


def _cancel_common(rp: np.ndarray, rq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rp = list(rp)
    rq = list(rq)
    i = 0
    while i < len(rp):
        d = [abs(rp[i] - r) for r in rq]
        j = int(np.argmin(d)) if d else -1
        if j >= 0 and d[j] <= COPRIME_TOL * max(1.0, abs(rp[i])):
            rp.pop(i)
            rq.pop(j)
        else:
            i += 1
    return np.asarray(rp, dtype=complex), np.asarray(rq, dtype=complex)


def eval_psd(spec: RationalSpectrum, theta) -> np.ndarray:
    """sigma2 |P(e^{i theta})|^2 / |Q(e^{i theta})|^2, vectorized over theta."""
    z = np.exp(1j * np.asarray(theta, dtype=float))
    num = np.abs(npoly.polyval(z, spec.P)) ** 2
    den = np.abs(npoly.polyval(z, spec.Q)) ** 2
    return spec.innovation_variance * num / den


def min_on_grid(spec, n: int = DEFAULT_GRID) -> float:
    """Minimum of a spectrum (RationalSpectrum or callable of theta) on an n-point grid."""
    return float(np.min(spec(theta_grid(n))))


@dataclass(frozen=True)
class StateSpace:
    """Companion realization S_{n+1} = F S_n + G U_n, Z_n = H S_n + U_n."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray

    @property
    def k(self) -> int:
        return self.F.shape[0]

    def transfer_polys(self) -> tuple[np.ndarray, np.ndarray]:
        """(det(I - z(F - GH)), det(I - zF)) as ascending coefficients."""
        return det_poly(self.F - self.G @ self.H), det_poly(self.F)


def to_state_space(spec: RationalSpectrum) -> StateSpace:
    k = spec.order
    p, q = spec.padded()
    F = np.zeros((k, k))
    if k:
        F[0, :] = -q
        F[1:, :-1] = np.eye(k - 1)
    G = np.zeros((k, 1))
    if k:
        G[0, 0] = 1.0
    H = (p - q).reshape(1, k)
    return StateSpace(F, G, H)


def autocovariances(spec: RationalSpectrum, m: int) -> np.ndarray:
    """R(0..m-1) of the process with spectrum ``spec``, via the Lyapunov equation."""
    s2 = spec.innovation_variance
    R = np.empty(m)
    if spec.is_white:
        R[:] = 0.0
        R[0] = s2
        return R
    ss = to_state_space(spec)
    F, G, H = ss.F, ss.G, ss.H
    Pi = sla.solve_discrete_lyapunov(F, G @ G.T)
    if not np.all(np.isfinite(Pi)):
        raise SpectrumError("Lyapunov solve failed; F is not stable")
    Pi = 0.5 * (Pi + Pi.T)
    R[0] = s2 * ((H @ Pi @ H.T).item() + 1.0)
    v = F @ Pi @ H.T + G  # cross covariance E[S_{n+1} Z_n]
    row = H.copy()
    for j in range(1, m):
        R[j] = s2 * (row @ v).item()
        row = row @ F
    return R


def autocovariances_quadrature(spec, m: int, n_grid: int = 1 << 14) -> np.ndarray:
    """R(0..m-1) by FFT quadrature of the spectrum; cross-check for ``autocovariances``."""
    th = theta_grid(n_grid)
    c = np.fft.fft(np.fft.ifftshift(spec(th))) / n_grid
    return np.real(c[:m])


def toeplitz_covariance(spec: RationalSpectrum, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    return sla.toeplitz(autocovariances(spec, n))


def entropy_rate_quadrature(spec, n_grid: int = DEFAULT_GRID) -> float:
    """1/2 log(2 pi e) + 1/2 mean of log S_Z over the grid (trapezoid = exact for trig polys)."""
    s = spec(theta_grid(n_grid))
    return 0.5 * math.log(2 * math.pi * math.e) + 0.5 * float(np.mean(np.log(s)))


def entropy_rate_jensen(spec: RationalSpectrum) -> float:
    """Entropy rate from the roots of P and Q (Jensen's formula), no sampling."""
    log_int = (math.log(spec.innovation_variance)
               + jensen_log_integral(spec.P) - jensen_log_integral(spec.Q))
    return 0.5 * math.log(2 * math.pi * math.e) + 0.5 * log_int


def entropy_rate(spec: RationalSpectrum, n_grid: int = DEFAULT_GRID, tol: float = 1e-10) -> float:
    """Differential entropy rate in nats per symbol.

    Returns the root-based value and warns if the quadrature value disagrees by more than ``tol``.
    """
    exact = entropy_rate_jensen(spec)
    quad = entropy_rate_quadrature(spec, n_grid)
    if abs(exact - quad) > tol:
        warnings.warn(f"entropy-rate quadrature ({quad:.15g}) and Jensen ({exact:.15g}) disagree; "
                      "increase the grid", RuntimeWarning, stacklevel=2)
    return exact


@dataclass(frozen=True)
class LaurentSeries:
    """Coefficients c_{-m}..c_m of a function on the circle."""

    coeffs: np.ndarray
    truncation_order: int
    grid_size: int = 0
    aliasing_bound: float = 0.0

    def __getitem__(self, j: int) -> float:
        m = self.truncation_order
        if abs(j) > m:
            return 0.0
        return self.coeffs[j + m]

    @property
    def indices(self) -> np.ndarray:
        m = self.truncation_order
        return np.arange(-m, m + 1)

    def causal_part(self) -> np.ndarray:
        """c_1..c_m."""
        return self.coeffs[self.truncation_order + 1:]

    def evaluate(self, theta) -> np.ndarray:
        z = np.exp(1j * np.asarray(theta, dtype=float))
        m = self.truncation_order
        return npoly.polyval(z, self.coeffs) * z ** (-m)

    def as_dict(self) -> dict[int, float]:
        return {int(j): float(c) for j, c in zip(self.indices, self.coeffs)}


def laurent_coeffs(f: Callable, m: int, n_grid: int | None = None,
                   denominator: Callable | None = None, real: bool = True) -> LaurentSeries:
    """Laurent coefficients of ``f`` (a callable of z on the unit circle) for |j| <= m.

    ``denominator`` (also a callable of z) enables the pole-on-circle test. Without it,
    non-finite samples are treated as poles. The reported aliasing bound is the largest
    coefficient magnitude in the discarded band m < |j| <= N/2, which dominates the
    aliasing error when coefficients decay geometrically.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    N = n_grid or max(DEFAULT_GRID, 8 * m)
    if N < 8 * m:
        raise ValueError(f"grid size {N} below 8*m = {8 * m}")
    th = theta_grid(N)
    z = np.exp(1j * th)
    if denominator is not None:
        dmin = float(np.min(np.abs(denominator(z))))
        if dmin < 1e-8:
            raise PoleOnCircleError(f"denominator reaches {dmin:.3g} on the {N}-point grid")
    vals = np.asarray(f(z), dtype=complex)
    if vals.shape == ():
        vals = np.full(N, complex(vals))
    if not np.all(np.isfinite(vals)):
        raise PoleOnCircleError(f"non-finite samples on the {N}-point grid")
    # theta_k = -pi + 2 pi k/N so e^{-ij theta_k} = (-1)^j e^{-2 pi i jk/N}
    c_all = np.fft.fft(vals) / N
    j_all = np.fft.fftfreq(N, 1.0 / N).astype(int)
    c_all = c_all * np.where(j_all % 2 == 0, 1.0, -1.0)
    idx = np.arange(-m, m + 1)
    c = c_all[idx % N]
    keep = np.abs(j_all) > m
    alias = float(np.max(np.abs(c_all[keep]))) if np.any(keep) else 0.0
    if real:
        c = np.real(c)
    return LaurentSeries(np.asarray(c), m, N, alias)


def is_anticausal(s: LaurentSeries, tol: float = 1e-9) -> tuple[bool, float]:
    """(ok, residual) where residual is max_{j>=1}|c_j| and ok compares it to tol (sum|c_j| + 1)."""
    causal = np.abs(s.causal_part())
    resid = float(np.max(causal)) if causal.size else 0.0
    scale = float(np.sum(np.abs(s.coeffs))) + 1.0
    return resid <= tol * scale, resid


def factor_laurent_polynomial(c: Sequence[float], n_grid: int = DEFAULT_GRID) -> tuple[np.ndarray, float]:
    """Spectral factor of a symmetric Laurent polynomial.

    ``c`` holds c_{-k}..c_k. Returns (R, sigma2) with R monic and stable (ascending
    coefficients) and sigma2 R(z) R(1/z) = sum_j c_j z^j.
    """
    c = np.asarray(c, dtype=float).ravel()
    if c.size % 2 != 1:
        raise SpectrumError("need an odd number of coefficients c_{-k}..c_k")
    k = c.size // 2
    if not np.allclose(c, c[::-1], rtol=1e-12, atol=1e-14 * np.max(np.abs(c))):
        raise SpectrumError("coefficients are not symmetric")
    th = theta_grid(n_grid)
    z = np.exp(1j * th)
    symbol = np.real(npoly.polyval(z, c) * z ** (-k))
    if np.min(symbol) < 0:
        raise SpectrumError(f"symbol is negative on the grid (min {np.min(symbol):.3g})")
    # trim outer zero band
    while k > 0 and c[0] == 0.0 and c[-1] == 0.0:
        c = c[1:-1]
        k -= 1
    if k == 0:
        if c[0] <= 0:
            raise SpectrumError("nonpositive constant symbol")
        return np.ones(1), float(c[0])
    roots = npoly.polyroots(c)  # z^k times the symbol
    mod = np.abs(roots)
    if np.any(np.abs(mod - 1.0) < 1e-7):
        raise SpectrumError("symbol has a zero on the unit circle")
    outside = roots[mod > 1.0]
    if outside.size != k:
        raise SpectrumError("root split failed: expected k roots outside the circle")
    R = poly_from_roots_monic(outside)
    sigma2 = float(c[k] / np.sum(R ** 2))
    return R, sigma2


@dataclass(frozen=True)
class BlaschkeProduct:
    """Normalized Blaschke product prod_i (1 - z^{j_i}/a_i) / (1 - a_i z^{j_i})."""

    zeros: tuple = ()
    delays: tuple = ()

    def __post_init__(self):
        a = tuple(float(v) for v in self.zeros)
        d = tuple(int(v) for v in self.delays) if self.delays else tuple(1 for _ in a)
        if len(a) != len(d):
            raise ValueError("zeros and delays must have equal length")
        if any(not (0 < abs(v) < 1) for v in a):
            raise ValueError("Blaschke zeros must satisfy 0 < |a| < 1")
        if any(j < 1 for j in d):
            raise ValueError("delays must be positive integers")
        object.__setattr__(self, "zeros", a)
        object.__setattr__(self, "delays", d)

    def polys(self) -> tuple[np.ndarray, np.ndarray]:
        num = np.ones(1)
        den = np.ones(1)
        for a, j in zip(self.zeros, self.delays):
            n_f = np.zeros(j + 1)
            d_f = np.zeros(j + 1)
            n_f[0] = d_f[0] = 1.0
            n_f[j] = -1.0 / a
            d_f[j] = -a
            num = npoly.polymul(num, n_f)
            den = npoly.polymul(den, d_f)
        return num, den

    def __call__(self, z) -> np.ndarray:
        num, den = self.polys()
        return npoly.polyval(z, num) / npoly.polyval(z, den)

    @property
    def modulus_squared(self) -> float:
        return float(np.prod([1.0 / a ** 2 for a in self.zeros])) if self.zeros else 1.0


__all__ = [
    "RationalSpectrum", "StateSpace", "LaurentSeries", "BlaschkeProduct",
    "SpectrumError", "PoleOnCircleError",
    "eval_psd", "to_state_space", "toeplitz_covariance", "autocovariances",
    "autocovariances_quadrature", "entropy_rate", "entropy_rate_jensen",
    "entropy_rate_quadrature", "laurent_coeffs", "is_anticausal",
    "factor_laurent_polynomial", "theta_grid", "min_on_grid", "det_poly",
    "jensen_log_integral", "monic", "poly_from_roots_monic",
]

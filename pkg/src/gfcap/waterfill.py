"""Nonfeedback capacity by water-filling, spectral and finite-block."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .spectra import theta_grid

WATERFILL_GRID = 8192
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


@dataclass(frozen=True)
class WaterfillResult:
    water_level: float
    capacity: float
    power_used: float
    grid_size: int = WATERFILL_GRID

    @property
    def capacity_bits(self) -> float:
        return self.capacity / math.log(2.0)


def _crossing(S: Callable, a: float, b: float, lam: float) -> float:
    g = lambda t: float(S(np.array([t]))[0]) - lam
    ga, gb = g(a), g(b)
    if ga == 0.0:
        return a
    if gb == 0.0 or ga * gb > 0:
        return b
    return brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def waterfill_integrals(S: Callable, lam: float, n_grid: int = WATERFILL_GRID) -> tuple[float, float]:
    """(P(lam), C(lam)) for a spectrum callable of theta.

    P = int (lam - S)^+ dtheta/2pi and C = int 1/2 log^+(lam/S) dtheta/2pi, by composite
    Gauss-Legendre on the grid cells, with cells split at the points where S crosses lam.
    """
    edges = np.append(theta_grid(n_grid), np.pi)
    s_edges = S(edges)
    above = s_edges > lam
    split = np.flatnonzero(above[:-1] != above[1:])
    a = edges[:-1]
    b = edges[1:]
    if split.size:
        cuts = np.array([_crossing(S, a[i], b[i], lam) for i in split])
        keep = np.ones(n_grid, dtype=bool)
        keep[split] = False
        a = np.concatenate([a[keep], a[split], cuts])
        b = np.concatenate([b[keep], cuts, b[split]])
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    w = half[:, None] * _GL_W[None, :] / (2.0 * np.pi)
    s = S(nodes.ravel()).reshape(nodes.shape)
    gap = np.maximum(lam - s, 0.0)
    power = float(np.sum(w * gap))
    cap = float(np.sum(w * 0.5 * np.log(np.maximum(s, lam) / s)))
    return power, cap


def spectral_waterfill(spec, P: float, n_grid: int = WATERFILL_GRID) -> WaterfillResult:
    """Water-filling on a noise spectrum (RationalSpectrum or any callable of theta)."""
    if P < 0 or not math.isfinite(P):
        raise ValueError(f"power must be a nonnegative finite number, got {P}")
    S = spec
    s_grid = S(theta_grid(n_grid))
    lo = float(np.min(s_grid))
    if P == 0:
        return WaterfillResult(lo, 0.0, 0.0, n_grid)
    hi = float(np.max(s_grid)) + P + 1.0
    f = lambda lam: waterfill_integrals(S, lam, n_grid)[0] - P
    lam = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    power, cap = waterfill_integrals(S, lam, n_grid)
    return WaterfillResult(lam, cap, power, n_grid)


def eigen_waterfill(eigs: np.ndarray, total: float) -> tuple[float, np.ndarray]:
    """Exact water level L with sum (L - eigs)^+ = total. Returns (L, allocation)."""
    eigs = np.asarray(eigs, dtype=float)
    if total <= 0:
        return float(np.min(eigs)), np.zeros_like(eigs)
    srt = np.sort(eigs)
    csum = np.cumsum(srt)
    m = len(srt)
    level = (total + csum[-1]) / m
    for j in range(1, m + 1):
        L = (total + csum[j - 1]) / j
        if j == m or L <= srt[j]:
            level = L
            break
    return float(level), np.maximum(level - eigs, 0.0)


def nblock_nonfeedback(K_Z: np.ndarray, P: float) -> tuple[np.ndarray, float]:
    """n-block nonfeedback capacity by eigen water-filling. Returns (K_X, C_n) in nats."""
    K_Z = np.asarray(K_Z, dtype=float)
    n = K_Z.shape[0]
    if K_Z.shape != (n, n) or not np.allclose(K_Z, K_Z.T, rtol=1e-12, atol=1e-14):
        raise ValueError("K_Z must be a symmetric square matrix")
    try:
        np.linalg.cholesky(K_Z)
    except np.linalg.LinAlgError as exc:
        raise ValueError("K_Z is not positive definite") from exc
    lam, Qm = np.linalg.eigh(K_Z)
    level, alloc = eigen_waterfill(lam, n * P)
    K_X = (Qm * alloc) @ Qm.T
    K_X = 0.5 * (K_X + K_X.T)
    cap = float(np.sum(np.log(np.maximum(lam, level) / lam))) / (2 * n)
    return K_X, cap


@dataclass
class WaterfillReport:
    power_residual: float
    trace_residual: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def power_ok(self) -> bool:
        return self.power_residual <= self.tolerance

    @property
    def trace_ok(self) -> bool:
        return self.trace_residual <= self.tolerance

    @property
    def ok(self) -> bool:
        return self.power_ok and self.trace_ok


def verify_waterfill_conditions(K_X, K_Z, P: float) -> WaterfillReport:
    K_X = np.asarray(K_X, dtype=float)
    K_Z = np.asarray(K_Z, dtype=float)
    if K_X.shape != K_Z.shape:
        raise ValueError("shape mismatch")
    n = K_X.shape[0]
    K_Y = K_X + K_Z
    lmin = float(np.linalg.eigvalsh(K_Y)[0])
    power = abs(float(np.trace(K_X)) - n * P)
    trace = abs(float(np.trace(K_X @ (K_Y - lmin * np.eye(n)))))
    return WaterfillReport(power, trace, 1e-8 * n, {"lambda_min_KY": lmin})


__all__ = [
    "WaterfillResult", "WaterfillReport", "spectral_waterfill", "waterfill_integrals",
    "eigen_waterfill", "nblock_nonfeedback", "verify_waterfill_conditions", "WATERFILL_GRID",
]

"""Riccati recursion and the stabilizing DARE solution.

The equation solved is

    S = F S F' + G G' - (F S h' + G)(F S h' + G)' / (1 + h S h'),

with h = H_eff a row vector. Writing F_eff = F - G h turns it into the drift-free
form S = F_eff S F_eff' - (F_eff S h')(.)'/(1 + h S h'), so the rank, reflection and
determinant properties are stated in terms of F_eff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

UNIT_CIRCLE_MARGIN = 1e-8
DEFAULT_TOL = 1e-13
DEFAULT_MAX_ITER = 1_000_000


class DareError(RuntimeError):
    """The Riccati iteration failed to converge or produced a non-stabilizing point."""

    def __init__(self, msg: str, last_iterate: np.ndarray | None = None):
        super().__init__(msg)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class DareSolution:
    sigma_plus: np.ndarray
    gamma: np.ndarray
    closed_loop: np.ndarray
    innovation_variance: float
    residual: float
    iterations: int = 0

    @property
    def spectral_radius(self) -> float:
        if self.closed_loop.size == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.closed_loop))))


def _as_system(F, G, H_eff):
    F = np.atleast_2d(np.asarray(F, dtype=float))
    k = F.shape[0]
    G = np.zeros((k, 1)) if G is None else np.asarray(G, dtype=float).reshape(k, 1)
    h = np.asarray(H_eff, dtype=float).reshape(1, k)
    return F, G, h


def riccati_step(F: np.ndarray, G: np.ndarray, h: np.ndarray, S: np.ndarray):
    """One Riccati map application. Returns (S_next, gain, innovation variance)."""
    FS = F @ S
    K = FS @ h.T + G
    s2 = 1.0 + (h @ S @ h.T).item()
    S_next = FS @ F.T + G @ G.T - (K @ K.T) / s2
    S_next = 0.5 * (S_next + S_next.T)
    return S_next, K / s2, s2


def riccati_recursion(F, G, H_eff, sigma0, steps: int) -> np.ndarray:
    """Iterates Sigma_0..Sigma_steps of the Riccati map, shape (steps+1, k, k)."""
    F, G, h = _as_system(F, G, H_eff)
    S = np.array(sigma0, dtype=float).reshape(F.shape)
    out = np.empty((steps + 1,) + S.shape)
    out[0] = S
    for n in range(steps):
        S, _, _ = riccati_step(F, G, h, S)
        out[n + 1] = S
    return out


def innovation_variances(trajectory: np.ndarray, H_eff) -> np.ndarray:
    """1 + h Sigma_n h' along a recursion trajectory."""
    h = np.asarray(H_eff, dtype=float).ravel()
    return 1.0 + np.einsum("i,nij,j->n", h, trajectory, h)


def dare_residual(F, G, H_eff, S) -> float:
    F, G, h = _as_system(F, G, H_eff)
    S_next, _, _ = riccati_step(F, G, h, S)
    return float(np.max(np.abs(S_next - S))) if S.size else 0.0


@numba.njit(cache=True)
def _iterate_nb(F, G, h, S, tol, max_iter):
    k = F.shape[0]
    GG = np.outer(G, G)
    for it in range(1, max_iter + 1):
        FS = F @ S
        K = FS @ h + G
        s2 = 1.0 + h @ (S @ h)
        Sn = FS @ F.T + GG - np.outer(K, K) / s2
        delta = 0.0
        scale = 1.0
        for i in range(k):
            for j in range(k):
                v = 0.5 * (Sn[i, j] + Sn[j, i])
                d = abs(v - S[i, j])
                if d > delta:
                    delta = d
                if abs(v) > scale:
                    scale = abs(v)
                S[i, j] = v
        if not np.isfinite(delta):
            return S, it, delta
        if delta < tol * scale:
            return S, it, delta
    return S, max_iter, delta


def _iterate_scalar(f: float, g: float, h: float, s: float, tol: float, max_iter: int):
    delta = math.inf
    for it in range(1, max_iter + 1):
        K = f * s * h + g
        sn = f * s * f + g * g - K * K / (1.0 + h * s * h)
        delta = abs(sn - s)
        s = sn
        if not math.isfinite(delta) or delta < tol * max(1.0, abs(s)):
            return s, it, delta
    return s, max_iter, delta


def _polish(F: np.ndarray, G: np.ndarray, h: np.ndarray, S: np.ndarray, rtol: float = 1e-15,
            max_iter: int = 500) -> np.ndarray:
    """Continue the Riccati map in extended precision and round back.

    The float64 iterate stalls where rounding noise, amplified by a non-normal closed
    loop, balances the contraction; extended precision moves that floor well below it.
    """
    L = np.longdouble
    Fl, Gl, hl = F.astype(L), G.astype(L), h.astype(L)
    GG = Gl @ Gl.T
    Sl = S.astype(L)
    tol = rtol * max(1.0, float(np.max(np.abs(S))))
    for _ in range(max_iter):
        FS = Fl @ Sl
        K = FS @ hl.T + Gl
        Sn = FS @ Fl.T + GG - (K @ K.T) / (1 + (hl @ Sl @ hl.T)[0, 0])
        Sn = (Sn + Sn.T) / 2
        delta = float(np.max(np.abs(Sn - Sl)))
        Sl = Sn
        if delta < tol:
            break
    return Sl.astype(float)


def check_detectable(F: np.ndarray, h: np.ndarray, tol: float = 1e-10) -> bool:
    """PBH test: every eigenvalue with |lambda| >= 1 is observable through h."""
    k = F.shape[0]
    for lam in np.linalg.eigvals(F):
        if abs(lam) < 1.0:
            continue
        M = np.vstack([lam * np.eye(k) - F, h.astype(complex)])
        smin = np.linalg.svd(M, compute_uv=False)[-1]
        if smin <= tol * max(1.0, np.linalg.norm(F, np.inf), np.linalg.norm(h)):
            return False
    return True


def dare_stabilizing(F, G, H_eff, *, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                     sigma0=None) -> DareSolution:
    """Stabilizing solution by fixed-point iteration of the Riccati map from Sigma_0 = I.

    Convergence is declared when the max-norm step falls below tol * max(1, ||Sigma||).
    """
    F, G, h = _as_system(F, G, H_eff)
    k = F.shape[0]
    if k == 0:
        return DareSolution(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((0, 0)), 1.0, 0.0, 0)
    F_eff = F - G @ h
    eig = np.linalg.eigvals(F_eff)
    if np.any(np.abs(np.abs(eig) - 1.0) < UNIT_CIRCLE_MARGIN):
        raise ValueError(f"F - G H_eff has an eigenvalue within {UNIT_CIRCLE_MARGIN} of the unit circle")
    if not check_detectable(F, h):
        raise ValueError("{F, H_eff} is not detectable")
    if np.all(np.abs(eig) < 1.0):
        # zero solves the drift-free form and leaves F_eff as the (stable) closed loop
        return _finish(F, G, h, np.zeros((k, k)), 0)
    S0 = np.eye(k) if sigma0 is None else np.array(sigma0, dtype=float).reshape(k, k)
    if k == 1:
        s, it, delta = _iterate_scalar(float(F[0, 0]), float(G[0, 0]), float(h[0, 0]), float(S0[0, 0]),
                                       tol, max_iter)
        S = np.array([[s]])
    else:
        S, it, delta = _iterate_nb(np.ascontiguousarray(F), G[:, 0].copy(), h[0].copy(), S0.copy(),
                                   tol, max_iter)
    if not np.all(np.isfinite(S)):
        raise DareError("Riccati iteration diverged", S)
    if delta >= tol * max(1.0, float(np.max(np.abs(S)))):
        raise DareError(f"no convergence after {it} iterations (last step {delta:.3g})", S)
    return _finish(F, G, h, _polish(F, G, h, S), it)


def dare_schur_sigma(F, G, H_eff) -> np.ndarray:
    """Stabilizing Sigma from the unstable Schur subspace of F - G H_eff (no iteration).

    On that subspace Sigma^{-1} = W solves W = A W A' + A h'h A' with A = T11^{-T} stable.
    Used by the capacity search and as an independent check of the iteration.
    """
    F, G, h = _as_system(F, G, H_eff)
    k = F.shape[0]
    F_eff = F - G @ h
    T, Z, j = sla.schur(F_eff, output="real", sort="ouc")
    S = np.zeros((k, k))
    if j == 0:
        return S
    T11 = T[:j, :j]
    hu = h @ Z[:, :j]
    A = np.linalg.inv(T11).T
    Ah = A @ hu.T
    W = sla.solve_discrete_lyapunov(A, Ah @ Ah.T)
    Su = np.linalg.inv(0.5 * (W + W.T))
    S = Z[:, :j] @ Su @ Z[:, :j].T
    return 0.5 * (S + S.T)


def dare_schur(F, G, H_eff) -> DareSolution:
    """DareSolution built from ``dare_schur_sigma``; same checks as the iterative solver."""
    F, G, h = _as_system(F, G, H_eff)
    eig = np.linalg.eigvals(F - G @ h)
    if np.any(np.abs(np.abs(eig) - 1.0) < UNIT_CIRCLE_MARGIN):
        raise ValueError(f"F - G H_eff has an eigenvalue within {UNIT_CIRCLE_MARGIN} of the unit circle")
    return _finish(F, G, h, dare_schur_sigma(F, G, h), 0)


def _finish(F, G, h, S, it) -> DareSolution:
    _, gamma, s2 = riccati_step(F, G, h, S)
    closed = F - gamma @ h
    resid = dare_residual(F, G, h, S)
    sol = DareSolution(S, gamma, closed, s2, resid, it)
    if resid > 1e-10 * (1.0 + float(np.max(np.abs(S)))):
        raise DareError(f"DARE residual {resid:.3g} exceeds bound", S)
    if sol.spectral_radius >= 1.0:
        raise DareError(f"solution is not stabilizing (spectral radius {sol.spectral_radius:.12g})", S)
    return sol


@dataclass
class DareReport:
    det_identity: bool | None
    det_residual: float
    reflection: bool
    reflection_residual: float
    rank_ok: bool
    rank: int
    expected_rank: int
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return bool(self.reflection and self.rank_ok and self.det_identity is not False)


def verify_dare_properties(F, G, H_eff, sol: DareSolution, tol: float = 1e-8) -> DareReport:
    """Check determinant identity, eigenvalue reflection and rank of a DARE solution."""
    F, G, h = _as_system(F, G, H_eff)
    F_eff = F - G @ h
    k = F.shape[0]
    eig_f = np.linalg.eigvals(F_eff) if k else np.zeros(0)
    eig_cl = np.linalg.eigvals(sol.closed_loop) if k else np.zeros(0)

    det_f = float(np.linalg.det(F_eff)) if k else 1.0
    det_cl = float(np.linalg.det(sol.closed_loop)) if k else 1.0
    if k == 0 or abs(det_f) > 1e-12:
        pred = det_f / det_cl if det_cl != 0 else math.inf
        det_res = abs(pred - sol.innovation_variance) / max(1.0, sol.innovation_variance)
        det_ok: bool | None = det_res <= tol
    else:
        det_res, det_ok = math.nan, None

    target = np.where(np.abs(eig_f) > 1.0, 1.0 / np.conj(eig_f), eig_f)
    if k:
        cost = np.abs(target[:, None] - eig_cl[None, :])
        r, c = linear_sum_assignment(cost)
        refl_res = float(np.max(cost[r, c]))
    else:
        refl_res = 0.0

    ev = np.linalg.eigvalsh(sol.sigma_plus) if k else np.zeros(0)
    tr = float(np.trace(sol.sigma_plus)) if k else 0.0
    rank = int(np.sum(ev > 1e-8 * tr)) if tr > 0 else 0
    expected = int(np.sum(np.abs(eig_f) > 1.0))
    return DareReport(det_ok, det_res, refl_res <= tol, refl_res, rank == expected, rank, expected,
                      {"eig_F_eff": eig_f, "eig_closed_loop": eig_cl})


__all__ = [
    "DareSolution", "DareError", "DareReport", "dare_stabilizing", "riccati_recursion",
    "riccati_step", "dare_residual", "verify_dare_properties", "innovation_variances",
    "check_detectable", "dare_schur", "dare_schur_sigma",
]

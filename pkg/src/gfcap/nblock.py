"""Finite-horizon feedback capacity as a determinant maximization.

Variables are the output covariance K_Y (symmetric) and a strictly lower-triangular
feedback matrix B. The problem

    maximize   log det K_Y
    subject to K_V = K_Y - (I + B) K_Z (I + B)' >= 0
               tr(K_Y - B K_Z - K_Z B' - K_Z) <= n P

is concave (the LMI is a Schur complement of a linear matrix pencil), and is solved
by a log-barrier method with damped Newton steps.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg as sla

from .waterfill import eigen_waterfill, nblock_nonfeedback


KKT_TOL = 1e-8


@dataclass
class NBlockSolution:
    k_y: np.ndarray
    b_lower: np.ndarray
    k_v: np.ndarray
    value: float
    kkt_residual: float
    duality_measure: float = math.nan
    newton_steps: int = 0
    method: str = "barrier-newton"

    @property
    def n(self) -> int:
        return self.k_y.shape[0]


class _Index:
    """Coordinates of the stacked variable vector: lower triangle of K_Y, then strictly lower B."""

    def __init__(self, n: int):
        self.n = n
        ki, kj = np.tril_indices(n)
        bi, bj = np.tril_indices(n, -1)
        self.ki, self.kj, self.bi, self.bj = ki, kj, bi, bj
        self.nk = ki.size
        self.nb = bi.size
        # each direction's K_V change is coef (u v' + v u') with u = e_i and v either e_j or -g_j
        self.u = np.concatenate([ki, bi])
        self.c = np.concatenate([kj, n + bj])
        self.coef = np.concatenate([np.where(ki == kj, 0.5, 1.0), np.ones(bi.size)])

    def unpack(self, x):
        n = self.n
        K = np.zeros((n, n))
        K[self.ki, self.kj] = x[: self.nk]
        K = K + np.tril(K, -1).T
        B = np.zeros((n, n))
        B[self.bi, self.bj] = x[self.nk:]
        return K, B

    def pack(self, K, B):
        return np.concatenate([K[self.ki, self.kj], B[self.bi, self.bj]])


def _pair_hessian(Muu, Muv, Mvv, u, c, coef):
    """H_ab = tr(V X_a V X_b) for X_a = coef_a (e_{u_a} v_a' + v_a e_{u_a}'), from Gram blocks."""
    t1 = Muv[u[:, None], c[None, :]] * Muv[u[None, :], c[:, None]]
    t2 = Muu[u[:, None], u[None, :]] * Mvv[c[:, None], c[None, :]]
    return 2.0 * (coef[:, None] * coef[None, :]) * (t1 + t2)


@numba.njit(cache=True)
def _hessian_nb(Yi, V, Muv, Mvv, K_Z, u, c, coef, nk, ds, mu, s):
    """Full barrier Hessian; same terms as ``_pair_hessian`` plus the K_Y, curvature and slack parts."""
    N = u.size
    Hm = np.empty((N, N))
    inv_s2 = mu / (s * s)
    n = V.shape[0]
    for a in range(N):
        ua, ca, wa = u[a], c[a], coef[a]
        for b in range(a + 1):
            ub, cb = u[b], c[b]
            h = mu * 2.0 * wa * coef[b] * (Muv[ua, cb] * Muv[ub, ca] + V[ua, ub] * Mvv[ca, cb])
            if a < nk:
                # both K_Y directions (b <= a)
                h += 2.0 * wa * coef[b] * (Yi[ua, cb] * Yi[ub, ca] + Yi[ua, ub] * Yi[ca, cb])
            elif b >= nk:
                h += mu * 2.0 * V[ua, ub] * K_Z[ca - n, cb - n]
            h += inv_s2 * ds[a] * ds[b]
            Hm[a, b] = h
            Hm[b, a] = h
    return Hm


class _Barrier:
    def __init__(self, K_Z: np.ndarray, P: float):
        self.K_Z = K_Z
        self.n = K_Z.shape[0]
        self.P = P
        self.idx = _Index(self.n)
        self.trKZ = float(np.trace(K_Z))

    def parts(self, K, B):
        n = self.n
        IB = np.eye(n) + B
        K_V = K - IB @ self.K_Z @ IB.T
        s = n * self.P - (np.trace(K) - 2.0 * np.sum(B * self.K_Z.T) - self.trKZ)
        return K_V, s

    def feasible(self, K, B) -> bool:
        K_V, s = self.parts(K, B)
        if not s > 0:
            return False
        try:
            np.linalg.cholesky(K_V)
            np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            return False
        return True

    def value(self, K, B, mu) -> float:
        K_V, s = self.parts(K, B)
        ly = np.linalg.slogdet(K)[1]
        lv = np.linalg.slogdet(K_V)[1]
        return -ly - mu * (lv + math.log(s))

    def grad_hess(self, K, B, mu):
        """Gradient and Hessian of -logdet K_Y - mu (logdet K_V + log s)."""
        n, idx, K_Z = self.n, self.idx, self.K_Z
        IB = np.eye(n) + B
        K_V, s = self.parts(K, B)
        Yi = np.linalg.inv(K)
        V = np.linalg.inv(K_V)
        Yi = 0.5 * (Yi + Yi.T)
        V = 0.5 * (V + V.T)
        Gm = K_Z @ IB.T
        W = V @ Gm.T
        T = Gm @ V @ Gm.T
        # d s along each direction
        ds = np.concatenate([-1.0 * (idx.ki == idx.kj), 2.0 * K_Z[idx.bj, idx.bi]])
        # gradient
        gK_mat = -Yi - mu * V
        gK = np.where(idx.ki == idx.kj, 1.0, 2.0) * gK_mat[idx.ki, idx.kj]
        gB = mu * 2.0 * W[idx.bi, idx.bj]
        g = np.concatenate([gK, gB]) - mu * ds / s
        Muv = np.hstack([V, -W])
        Mvv = np.block([[V, -W], [-W.T, T]])
        Hm = _hessian_nb(Yi, V, Muv, Mvv, K_Z, idx.u, idx.c, idx.coef, idx.nk, ds, mu, s)
        return g, Hm

    def grad_hess_reference(self, K, B, mu):
        """Vectorized Hessian assembly, kept to cross-check the compiled kernel."""
        n, idx, K_Z = self.n, self.idx, self.K_Z
        IB = np.eye(n) + B
        K_V, s = self.parts(K, B)
        Yi = np.linalg.inv(K)
        V = np.linalg.inv(K_V)
        Yi = 0.5 * (Yi + Yi.T)
        V = 0.5 * (V + V.T)
        Gm = K_Z @ IB.T
        W = V @ Gm.T
        T = Gm @ V @ Gm.T
        ds = np.concatenate([-1.0 * (idx.ki == idx.kj), 2.0 * K_Z[idx.bj, idx.bi]])
        Muv = np.hstack([V, -W])
        Mvv = np.block([[V, -W], [-W.T, T]])
        Hm = mu * _pair_hessian(V, Muv, Mvv, idx.u, idx.c, idx.coef)
        nk = idx.nk
        Hm[:nk, :nk] += _pair_hessian(Yi, Yi, Yi, idx.ki, idx.kj, idx.coef[:nk])
        # curvature of K_V in B: d2 K_V = -(dB_a K_Z dB_b' + dB_b K_Z dB_a')
        bi, bj = idx.bi, idx.bj
        Hm[nk:, nk:] += mu * 2.0 * V[bi[:, None], bi[None, :]] * K_Z[bj[:, None], bj[None, :]]
        Hm += mu * np.outer(ds, ds) / s ** 2
        return Hm


def _newton(bar: _Barrier, x, mu, tol, max_steps=100):
    idx = bar.idx
    steps = 0
    dec2 = math.inf
    for steps in range(1, max_steps + 1):
        K, B = idx.unpack(x)
        g, Hm = bar.grad_hess(K, B, mu)
        try:
            cf = sla.cho_factor(Hm, overwrite_a=True, check_finite=False)
            dx = -sla.cho_solve(cf, g)
        except (np.linalg.LinAlgError, ValueError):
            dx = -np.linalg.lstsq(bar.grad_hess(K, B, mu)[1], g, rcond=None)[0]
        dec2 = float(-g @ dx)
        if dec2 / 2 <= tol:
            return x, steps, dec2
        f0 = bar.value(K, B, mu)
        t = 1.0
        while True:
            xn = x + t * dx
            Kn, Bn = idx.unpack(xn)
            if bar.feasible(Kn, Bn):
                fn = bar.value(Kn, Bn, mu)
                if fn <= f0 - 0.25 * t * dec2:
                    break
            t *= 0.5
            if t < 1e-14:
                if dec2 < 1e-10:
                    # already centered to rounding level
                    return x, steps, dec2
                raise np.linalg.LinAlgError("line search failed")
        x = xn
    return x, steps, dec2


def _orthogonal_b(K_V, K_Z):
    """B solving tril(K_V + B K_Z (I+B)', -1) = 0, one row at a time (row i uses rows < i)."""
    n = K_Z.shape[0]
    B = np.zeros((n, n))
    for i in range(1, n):
        C = (K_Z @ (np.eye(n) + B).T)[:i, :i]
        B[i, :i] = np.linalg.solve(C.T, -K_V[i, :i])
    return B


def _alternating(K_Z, P, iters=200):
    """Fallback ascent: water-fill K_V for fixed B, then refit B to the orthogonality condition."""
    n = K_Z.shape[0]
    B = np.zeros((n, n))
    logdet_z = np.linalg.slogdet(K_Z)[1]
    best = None
    for _ in range(iters):
        IB = np.eye(n) + B
        M = IB @ K_Z @ IB.T
        budget = n * P - float(np.trace(B @ K_Z @ B.T))
        if budget <= 0:
            break
        lam, Qm = np.linalg.eigh(M)
        _, alloc = eigen_waterfill(lam, budget)
        K_V = (Qm * alloc) @ Qm.T
        K_Y = M + K_V
        val = 0.5 * (np.linalg.slogdet(K_Y)[1] - logdet_z) / n
        if best is not None and val <= best[0] + 1e-13:
            break
        best = (val, K_Y, B.copy(), K_V)
        B = _orthogonal_b(K_V, K_Z)
    val, K_Y, B, K_V = best
    return K_Y, B, K_V, val


def nblock_feedback(K_Z: np.ndarray, P: float, mu0: float = 1.0, mu_min: float = 1e-9,
                    shrink: float = 10.0, center_tol: float = 1e-6) -> NBlockSolution:
    """C_FB,n (nats per symbol) by a barrier method on the concave formulation."""
    K_Z = np.asarray(K_Z, dtype=float)
    n = K_Z.shape[0]
    if K_Z.shape != (n, n) or not np.allclose(K_Z, K_Z.T, rtol=1e-12, atol=1e-14):
        raise ValueError("K_Z must be symmetric")
    try:
        np.linalg.cholesky(K_Z)
    except np.linalg.LinAlgError as exc:
        raise ValueError("K_Z is not positive definite") from exc
    if not P > 0:
        raise ValueError("P must be positive")
    logdet_z = np.linalg.slogdet(K_Z)[1]
    bar = _Barrier(K_Z, P)
    idx = bar.idx
    eps = 1e-6 * P
    x = idx.pack(K_Z + (P - eps) * np.eye(n), np.zeros((n, n)))
    mu = mu0
    total = 0
    try:
        while True:
            tol = 0.5 * KKT_TOL ** 2 if mu / shrink < mu_min else center_tol
            x, steps, dec2 = _newton(bar, x, mu, tol)
            total += steps
            if mu / shrink < mu_min:
                break
            mu /= shrink
    except np.linalg.LinAlgError:
        warnings.warn("Newton iteration failed; falling back to alternating ascent", RuntimeWarning,
                      stacklevel=2)
        K_Y, B, K_V, val = _alternating(K_Z, P)
        return NBlockSolution(K_Y, B, K_V, val, math.nan, math.nan, total, "alternating")
    K, B = idx.unpack(x)
    K_V, s = bar.parts(K, B)
    # barrier gap: n from log det K_V plus one from the trace slack
    gap = mu * (n + 1)
    value = 0.5 * (np.linalg.slogdet(K)[1] - logdet_z) / n
    return NBlockSolution(K, B, 0.5 * (K_V + K_V.T), value, math.sqrt(max(dec2, 0.0)), gap, total)


# ---------------------------------------------------------------------------
# verification


@dataclass
class NBlockReport:
    power_residual: float
    water_filling_residual: float
    orthogonality_residual: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def power_ok(self):
        return self.power_residual <= self.tolerance

    @property
    def water_filling_ok(self):
        return self.water_filling_residual <= self.tolerance

    @property
    def orthogonality_ok(self):
        return self.orthogonality_residual <= self.tolerance

    @property
    def ok(self):
        return self.power_ok and self.water_filling_ok and self.orthogonality_ok

    def to_dict(self):
        return {"pass": self.ok, "power_residual": self.power_residual,
                "water_filling_residual": self.water_filling_residual,
                "orthogonality_residual": self.orthogonality_residual, "tolerance": self.tolerance}


def verify_nblock_conditions(sol: NBlockSolution, K_Z, P: float, tol: float | None = None) -> NBlockReport:
    K_Z = np.asarray(K_Z, dtype=float)
    n = K_Z.shape[0]
    K_V, B = sol.k_v, sol.b_lower
    K_Y = K_V + (np.eye(n) + B) @ K_Z @ (np.eye(n) + B).T
    power = abs(float(np.trace(K_V + B @ K_Z @ B.T)) - n * P)
    lmin = float(np.linalg.eigvalsh(K_Y)[0])
    wf = abs(float(np.trace(K_V @ (K_Y - lmin * np.eye(n)))))
    orth = float(np.max(np.abs(np.tril(K_V + B @ K_Z @ (np.eye(n) + B).T, -1)))) if n > 1 else 0.0
    return NBlockReport(power, wf, orth, tol if tol is not None else 1e-6 * n, {"lambda_min_KY": lmin})


def dual_value(sol: NBlockSolution, K_Z, P: float) -> float:
    """Per-symbol dual objective at the explicit dual point built from the primal solution."""
    K_Z = np.asarray(K_Z, dtype=float)
    n = K_Z.shape[0]
    K_Y = sol.k_y
    IB = np.eye(n) + sol.b_lower
    nu = 1.0 / float(np.linalg.eigvalsh(K_Y)[0])
    Phi = np.linalg.inv(K_Y)
    M = nu * np.eye(n) - Phi
    Psi2 = -M @ IB @ K_Z
    Psi3 = K_Z @ IB.T @ M @ IB @ K_Z
    D = (-np.linalg.slogdet(Phi)[1] + 2.0 * np.trace(Psi2) + np.trace(np.linalg.solve(K_Z, Psi3))
         + nu * (np.trace(K_Z) + n * P) - n)
    return 0.5 * (D - np.linalg.slogdet(K_Z)[1]) / n


@dataclass
class RankReport:
    rank: int
    max_rank: int
    eigenvalues: np.ndarray
    band_residual: float
    bandwidth: int

    @property
    def rank_ok(self):
        return self.rank <= self.max_rank

    @property
    def band_ok(self):
        return self.band_residual < 1e-6

    @property
    def ok(self):
        return self.rank_ok and self.band_ok


def nblock_rank_check(sol: NBlockSolution, k: int) -> RankReport:
    """Rank of K_V (eigenvalues above 1e-6 trace) and bandedness of K_Y (relative off-band size)."""
    ev = np.linalg.eigvalsh(sol.k_v)
    tr = float(np.trace(sol.k_v))
    rank = int(np.sum(ev > 1e-6 * tr)) if tr > 0 else 0
    n = sol.n
    i, j = np.indices((n, n))
    off = np.abs(i - j) > k
    norm = float(np.max(np.sum(np.abs(sol.k_y), axis=1)))
    band = float(np.max(np.abs(sol.k_y[off]))) / norm if np.any(off) else 0.0
    if k == 0:
        # white noise: any rank, but K_V must be diagonal
        kv = sol.k_v
        diag_res = float(np.max(np.abs(kv - np.diag(np.diag(kv))))) / max(1.0, float(np.max(np.abs(kv))))
        return RankReport(rank, n, ev, max(band, diag_res), 1)
    return RankReport(rank, k, ev, band, 2 * k + 1)


@dataclass
class GainResult:
    c_n: float
    c_fb_n: float
    gain: float
    kx_diagonal: bool
    feedback: NBlockSolution
    k_x: np.ndarray


def feedback_gain(K_Z, P: float) -> GainResult:
    """(C_n, C_FB,n, gain) with the diagonal-K_X criterion for zero gain."""
    K_X, c_n = nblock_nonfeedback(K_Z, P)
    fb = nblock_feedback(K_Z, P)
    off = K_X - np.diag(np.diag(K_X))
    diag = float(np.max(np.abs(off))) <= 1e-9 * max(1.0, float(np.max(np.abs(K_X))))
    return GainResult(c_n, fb.value, fb.value - c_n, diag, fb, K_X)


__all__ = [
    "NBlockSolution", "NBlockReport", "RankReport", "GainResult", "nblock_feedback",
    "verify_nblock_conditions", "dual_value", "nblock_rank_check", "feedback_gain",
]

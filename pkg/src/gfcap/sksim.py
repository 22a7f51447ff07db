"""Monte Carlo simulation of linear feedback coding schemes.

Two forms are simulated on the unit-innovation model of the noise:

* state refinement: after k symbols that carry a Gaussian message, the transmitter
  sends X (S_n - E[S_n | Y^{n-1}]) and the receiver runs an exact Kalman filter;
* message refinement (k <= 1): the transmitter sends a scaled estimation error of
  the message, X_n = xi^{-(n-1)} (V - E[V | Y^{n-1}]).

Every trial draws from its own Philox stream keyed by (seed, trial), so results do
not depend on batch sizes or thread count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .fbcap import FeedbackDesign, feedback_capacity
from .riccati import riccati_step
from .spectra import RationalSpectrum, to_state_space


@dataclass
class SkConfig:
    spectrum: RationalSpectrum
    power: float
    design: FeedbackDesign | None = None
    horizon: int = 400
    trials: int = 10_000
    rate_nats: float | None = None
    seed: int = 0
    initial_power: float | None = None  # variance of the message symbols; defaults to power
    track_steps: tuple = ()

    def resolved_design(self) -> FeedbackDesign:
        if self.design is None:
            self.design = feedback_capacity(self.spectrum, self.power)
        return self.design


@dataclass
class SkResult:
    empirical_rate: float
    rate_stderr: float
    avg_power: float
    power_trace: np.ndarray
    innovation_variance_trace: np.ndarray
    error_count: int = 0
    trials: int = 0
    theoretical_rate: float = math.nan
    sigma_trace: np.ndarray | None = None
    deterministic_innovation: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "empirical_rate": self.empirical_rate,
            "rate_stderr": self.rate_stderr,
            "theoretical_rate": self.theoretical_rate,
            "avg_power": self.avg_power,
            "trials": self.trials,
            "error_count": self.error_count,
        }


def trial_normals(seed: int, trials: int, shape: tuple, start: int = 0) -> np.ndarray:
    """Standard normals of shape (trials,) + shape, one Philox stream per trial."""
    out = np.empty((trials,) + tuple(shape))
    for t in range(trials):
        g = np.random.Generator(np.random.Philox(key=[seed & (2 ** 64 - 1), start + t]))
        out[t] = g.standard_normal(shape)
    return out


def _unit_model(cfg: SkConfig):
    """(F, G, H, X, Pn, scale) of the simulated unit-innovation model."""
    spec = cfg.spectrum
    design = cfg.resolved_design()
    scale = spec.innovation_variance
    Pn = cfg.power / scale
    if spec.is_white:
        x0 = math.sqrt(1.0 / (1.0 + Pn))
        # white noise as a one-dimensional state with no output contribution
        return np.zeros((1, 1)), np.ones((1, 1)), np.zeros((1, 1)), np.array([[-1.0 / x0]]), Pn, scale
    ss = to_state_space(spec)
    X = np.asarray(design.x_direction, dtype=float).reshape(1, ss.k)
    return ss.F, ss.G, ss.H, X, Pn, scale


def _rate_from_variances(var: np.ndarray, trials: int) -> tuple[float, float]:
    tail = var[len(var) // 2:]
    est = float(np.mean(0.5 * np.log(tail)))
    # Var(log sample variance) ~ 2/(T-1); innovations are independent across time
    se = 0.5 * math.sqrt(2.0 / max(trials - 1, 1)) / math.sqrt(len(tail))
    return est, se


def simulate_state_refinement(cfg: SkConfig) -> SkResult:
    """State-refinement scheme with exact Kalman filtering, from S_0 = U_0 = 0."""
    F, G, H, X, Pn, scale = _unit_model(cfg)
    k = F.shape[0]
    h = X + H
    eig = np.abs(np.linalg.eigvals(F - G @ h))
    if np.any(np.abs(eig - 1.0) < 1e-8):
        raise ValueError("design has a unit-circle closed-loop mode")
    T, n_steps = cfg.trials, cfg.horizon
    if T < 2 or n_steps <= k:
        raise ValueError("need at least two trials and a horizon longer than the state order")
    Pv = Pn if cfg.initial_power is None else cfg.initial_power / scale
    if Pv > 4 * Pn:
        raise ValueError("initial symbol power exceeds the burst cap of 4P")
    draws = trial_normals(cfg.seed, T, (n_steps, 2))
    U = draws[:, :, 0]
    Vn = draws[:, :, 1] * math.sqrt(Pv)

    S = np.zeros((T, k))
    S_hat = np.zeros((T, k))
    Sig = np.zeros((k, k))
    power = np.empty(n_steps)
    innov_var = np.empty(n_steps)
    det_innov = np.empty(n_steps)
    sig_trace = np.empty((n_steps + 1, k, k))
    sig_trace[0] = Sig
    Y = np.empty((T, n_steps))
    Xs = np.empty((T, n_steps))
    err_var = {}
    track = set(cfg.track_steps) or {k + 1, n_steps // 4, n_steps // 2, n_steps}
    for n in range(n_steps):
        u = U[:, n]
        if n < k:
            x = Vn[:, n]
            c, r = H, 1.0 + Pv
        else:
            x = (S - S_hat) @ X[0]
            c, r = h, None
        y = x + S @ H[0] + u
        Y[:, n] = y
        Xs[:, n] = x
        power[n] = float(np.mean(x * x))
        if n + 1 in track:
            e = S - S_hat
            err_var[n + 1] = (np.var(e, axis=0, ddof=1), np.diag(Sig).copy())
        if r is None:
            nu = (y + S_hat @ X[0]) - S_hat @ h[0]
            Sig_next, gain, s2 = riccati_step(F, G, h, Sig)
        else:
            nu = y - S_hat @ H[0]
            K = F @ Sig @ c.T + G
            s2 = (c @ Sig @ c.T).item() + r
            gain = K / s2
            Sig_next = F @ Sig @ F.T + G @ G.T - (K @ K.T) / s2
            Sig_next = 0.5 * (Sig_next + Sig_next.T)
        innov_var[n] = float(np.var(nu, ddof=1))
        det_innov[n] = s2
        S_hat = S_hat @ F.T + np.outer(nu, gain[:, 0])
        S = S @ F.T + np.outer(u, G[:, 0])
        Sig = Sig_next
        sig_trace[n + 1] = Sig

    rate, se = _rate_from_variances(innov_var, T)
    # orthogonality of the current input to past outputs, at the middle and the last step
    orth = {}
    for m in sorted({n_steps // 2, n_steps}):
        if m - 1 <= k:
            continue
        xm = Xs[:, m - 1]
        past = Y[:, k: m - 1]
        xc = xm - xm.mean()
        pc = past - past.mean(axis=0)
        corr = (xc @ pc) / (np.sqrt(xc @ xc) * np.sqrt(np.sum(pc * pc, axis=0)))
        orth[m] = float(np.max(np.abs(corr)) * math.sqrt(T))
    tail = innov_var[n_steps // 2:]
    extras = {
        "covariance_checks": {int(m): {"sample": v[0].tolist(), "model": v[1].tolist()} for m, v in err_var.items()},
        "orthogonality_max_z": orth,
        "innovation_tail_rel_std": float(np.std(tail) / np.mean(tail)),
        "initial_power": Pv * scale,
    }
    return SkResult(rate, se, float(np.mean(power)) * scale, power * scale, innov_var,
                    trials=T, theoretical_rate=float(np.mean(0.5 * np.log(det_innov[n_steps // 2:]))),
                    sigma_trace=sig_trace, deterministic_innovation=det_innov, extras=extras)


def _message_model(cfg: SkConfig):
    F, G, H, X, Pn, scale = _unit_model(cfg)
    if F.shape[0] > 1:
        raise ValueError("message refinement is implemented for order <= 1")
    f_eff = float((F - G @ (X + H))[0, 0])
    xi = 1.0 / f_eff
    if not abs(xi) < 1:
        raise ValueError("design closed loop does not expand; no message refinement")
    return F, G, H, xi, Pn, scale


def comparison_scaled_mse(alpha: float, beta: float, xi: float, P: float, n_steps: int) -> np.ndarray:
    """xi^{-2n} E(V - V_n)^2 for n = 1..n_steps from the whitened-output construction.

    With S_0 = U_0 = 0 the transformed outputs are Y''_n = d_n V + U_n exactly, where
    d_n = -alpha d_{n-1} + a_n, a_1 = 1 and a_n = xi^{-(n-1)} (1 + beta xi). The
    recursion is run on e_n = xi^n d_n and q_n = xi^{2n} (1/P + sum d_k^2) to stay in range.
    """
    out = np.empty(n_steps)
    e = xi
    q = xi * xi / P + e * e
    out[0] = 1.0 / q
    for n in range(2, n_steps + 1):
        e = -alpha * xi * e + xi * (1 + beta * xi)
        q = xi * xi * q + e * e
        out[n - 1] = 1.0 / q
    return out


def simulate_message_refinement(cfg: SkConfig) -> SkResult:
    """Message-refinement scheme, simulated in scaled error coordinates.

    With e_n the Kalman error of the augmented state [S_n; V], the V component is
    rescaled by xi^{-(n-1)}. The scaled system has constant matrices diag(F, 1/xi),
    [G; 0] and [H, 1], and the scaled V error at step n is exactly the input X_n.
    """
    F, G, H, xi, Pn, scale = _message_model(cfg)
    k = F.shape[0]
    T, n_steps = cfg.trials, cfg.horizon
    Pv = Pn if cfg.initial_power is None else cfg.initial_power / scale
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = F
    A[k, k] = 1.0 / xi
    Gt = np.zeros((k + 1, 1))
    Gt[:k] = G
    ht = np.zeros((1, k + 1))
    ht[0, :k] = H[0]
    ht[0, k] = 1.0
    draws = trial_normals(cfg.seed, T, (n_steps + 1,))
    U = draws[:, :n_steps]
    e = np.zeros((T, k + 1))
    e[:, k] = draws[:, n_steps] * math.sqrt(Pv)
    Pt = np.zeros((k + 1, k + 1))
    Pt[k, k] = Pv
    power = np.empty(n_steps)
    innov_var = np.empty(n_steps)
    scaled_mse = np.empty(n_steps)
    det_scaled = np.empty(n_steps)
    for n in range(n_steps):
        u = U[:, n]
        x = e[:, k]
        power[n] = float(np.mean(x * x))
        nu = e @ ht[0] + u
        innov_var[n] = float(np.var(nu, ddof=1))
        Pt_next, gain, _ = riccati_step(A, Gt, ht, Pt)
        e = e @ (A - gain @ ht).T + np.outer(u, (Gt - gain)[:, 0])
        Pt = Pt_next
        scaled_mse[n] = float(np.mean(e[:, k] ** 2))
        det_scaled[n] = Pt[k, k]
    steps = np.arange(1, n_steps + 1)
    log_mse = 2.0 * steps * math.log(abs(xi)) + np.log(scaled_mse)
    tail = slice(n_steps // 2, n_steps)
    coef, cov = np.polyfit(steps[tail], log_mse[tail], 1, cov=True)
    rate = -0.5 * coef[0]
    se = 0.5 * math.sqrt(cov[0, 0])
    m = n_steps - n_steps // 2
    ratio = (xi * xi) * (scaled_mse[-1] / scaled_mse[n_steps // 2 - 1]) ** (1.0 / m) if m > 0 else math.nan
    extras = {"xi": xi, "scaled_mse": scaled_mse, "deterministic_scaled_mse": det_scaled,
              "log_mse": log_mse, "tail_variance_ratio": float(ratio)}
    if k == 1 or cfg.spectrum.is_white:
        if cfg.spectrum.is_white:
            a, b = 0.0, 0.0
        else:
            (a,), (b,) = cfg.spectrum.padded()
        extras["comparison_scaled_mse"] = comparison_scaled_mse(a, b, xi, Pv, n_steps)
    return SkResult(rate, se, float(np.mean(power)) * scale, power * scale, innov_var, trials=T,
                    theoretical_rate=-math.log(abs(xi)), extras=extras)


@dataclass
class DecodeResult:
    error_rate: float
    bound: float
    error_count: int
    trials: int
    constellation_size: int
    delta: float
    c0: float

    def __iter__(self):
        return iter((self.error_rate, self.bound))


def constellation(n: int, rate_nats: float) -> tuple[np.ndarray, float]:
    """Equally spaced points on [-1, 1], M = round(e^{nR}) of them, spacing 2/(M-1)."""
    M = int(round(math.exp(n * rate_nats)))
    if M < 2:
        raise ValueError("rate too small for a constellation of two or more points")
    delta = 2.0 / (M - 1)
    return np.linspace(-1.0, 1.0, M), delta


def decode_constellation(cfg: SkConfig) -> DecodeResult:
    """Message refinement of a constellation point with nearest-point decoding after n steps.

    The transmitter's estimate is the linear MMSE under the matched second moments; the
    receiver decodes from the minimum-variance unbiased estimate, MMSE / (1 - p_n / v).
    """
    if cfg.trials < 1:
        raise ValueError("zero trials")
    if cfg.rate_nats is None:
        raise ValueError("rate_nats is required for constellation decoding")
    F, G, H, xi, Pn, scale = _message_model(cfg)
    k = F.shape[0]
    n = cfg.horizon
    T = cfg.trials
    M = int(round(math.exp(n * cfg.rate_nats)))
    if M < 2:
        raise ValueError("rate too small for a constellation of two or more points")
    delta = 2.0 / (M - 1)
    var_theta = (M + 1) / (3.0 * (M - 1))
    gamma = math.sqrt(Pn / var_theta)
    v = Pn
    draws = np.empty((T, n))
    idx = np.empty(T, dtype=np.int64)
    for t in range(T):
        g = np.random.Generator(np.random.Philox(key=[cfg.seed & (2 ** 64 - 1), t]))
        draws[t] = g.standard_normal(n)
        idx[t] = g.integers(M)
    theta = -1.0 + delta * idx
    V = gamma * theta
    # absolute coordinates: augmented state [S; V], measurement row [H, c_n]
    A = np.eye(k + 1)
    A[:k, :k] = F
    Ga = np.zeros((k + 1, 1))
    Ga[:k] = G
    S = np.zeros((T, k))
    est = np.zeros((T, k + 1))  # E[[S_n; V] | Y^{n-1}]
    Pcov = np.zeros((k + 1, k + 1))
    Pcov[k, k] = v
    U = draws
    var_mvu = np.empty(n)
    for step in range(n):
        c_n = xi ** (-step)
        row = np.zeros((1, k + 1))
        row[0, :k] = H[0]
        row[0, k] = c_n
        x = c_n * (V - est[:, k])
        y = x + S @ H[0] + U[:, step]
        y_rx = y + c_n * est[:, k]
        nu = y_rx - est @ row[0]
        s2 = (row @ Pcov @ row.T).item() + 1.0
        K = (A @ Pcov @ row.T + Ga) / s2
        est = est @ A.T + np.outer(nu, K[:, 0])
        Pcov = A @ Pcov @ A.T + Ga @ Ga.T - (K @ K.T) * s2
        Pcov = 0.5 * (Pcov + Pcov.T)
        S = S @ F.T + np.outer(U[:, step], G[:, 0])
        p = Pcov[k, k]
        mvu = est[:, k] / (1.0 - p / v)
        var_mvu[step] = float(np.mean((mvu - V) ** 2)) / gamma ** 2
    theta_hat = mvu / gamma
    dec = np.clip(np.rint((theta_hat + 1.0) / delta), 0, M - 1).astype(int)
    errors = int(np.sum(dec != idx))
    steps = np.arange(1, n + 1)
    tail = slice(n // 2, n)
    # c0 from var(theta error) ~ x0^{2n} / (2 c0), slope fixed by x0 = |xi|
    logc = 2.0 * steps[tail] * math.log(abs(xi)) - np.log(2.0 * var_mvu[tail])
    c0 = float(math.exp(np.mean(logc)))
    arg = c0 * abs(xi) ** (-2 * n) * math.exp(-2 * n * cfg.rate_nats)
    bound = float(erfc(math.sqrt(arg)))
    return DecodeResult(errors / T, bound, errors, T, M, delta, c0)


def error_bound(c0: float, x0: float, n: int, rate_nats: float) -> float:
    return float(erfc(math.sqrt(c0 * x0 ** (-2 * n) * math.exp(-2 * n * rate_nats))))


__all__ = [
    "SkConfig", "SkResult", "DecodeResult", "simulate_state_refinement",
    "simulate_message_refinement", "decode_constellation", "trial_normals",
    "comparison_scaled_mse", "constellation", "error_bound",
]

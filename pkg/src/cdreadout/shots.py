"""Single-shot sampling, histograms, assignment fidelity and repeated-readout scoring."""

from __future__ import annotations

import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr

from .demod import _best_phase, _cumsimp

OVERLAP_WARN = 0.4   # fitted-distribution overlap beyond which metrics degenerate
MIN_FIT_SHOTS = 100


@dataclass
class ShotConfig:
    """Everything needed to sample demodulated single shots."""

    n_shots: int
    seed: int
    traj: object                       # ConditionalTrajectory
    env: object                        # DemodEnvelope
    init_state: str = "g"              # 'g' | 'e' | 'thermal'
    p_excited: float = 0.0             # thermal excited-state weight
    t1: float = math.inf               # relaxation time (s)
    gamma_up: float = 0.0              # excitation rate (1/s)
    eta: float = 1.0
    n_repeats: int = 1
    q_variance_ratio: float = 1.0      # displayed variance of the idle quadrature
    phi_demod: Optional[float] = None
    latch_k: float = 2.0


@dataclass
class ShotBatch:
    """Demodulated shot values in noise-sigma units, plus the hidden truth."""

    i_vals: np.ndarray        # (n_shots, n_repeats)
    q_vals: np.ndarray
    labels: np.ndarray        # prepared state per chain: -1 (g) / +1 (e)
    jump_times: np.ndarray    # (n_shots, n_repeats), NaN where no jump occurred
    eta: float = 1.0
    q_variance_ratio: float = 1.0
    window: float = 0.0       # single-window duration (s)
    demod_phase: float = 0.0

    @property
    def n_shots(self):
        return self.i_vals.shape[0]

    @property
    def n_repeats(self):
        return self.i_vals.shape[1]


@dataclass
class ReadoutMetrics:
    """Separation, assignment and repeatability scores for one batch."""

    snr_measured: float
    sigma_i: float
    separation_sigmas: float
    discrimination_power: float
    f_g: float
    f_e: float
    f_total: float
    qndness: float
    threshold: float
    mu_g: float = 0.0
    mu_e: float = 0.0


def _validate(cfg):
    if cfg.n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {cfg.n_shots!r}")
    if cfg.n_repeats < 1:
        raise ValueError(f"n_repeats must be >= 1, got {cfg.n_repeats!r}")
    if cfg.t1 <= 0:
        raise ValueError(f"t1 must be positive, got {cfg.t1!r}")
    if cfg.gamma_up < 0:
        raise ValueError(f"gamma_up must be nonnegative, got {cfg.gamma_up!r}")
    if not (0.0 < cfg.eta <= 1.0):
        raise ValueError(f"eta must be in (0, 1], got {cfg.eta!r}")
    if cfg.init_state not in ("g", "e", "both", "thermal"):
        raise ValueError(
            f"init_state must be 'g', 'e', 'both' or 'thermal', got {cfg.init_state!r}"
        )
    if not (0.0 <= cfg.p_excited <= 1.0):
        raise ValueError(f"p_excited must be in [0, 1], got {cfg.p_excited!r}")
    if len(cfg.env.weights) != len(cfg.traj.out_g):
        raise ValueError(
            f"grid mismatch: envelope has {len(cfg.env.weights)} samples, "
            f"trajectory has {len(cfg.traj.out_g)}"
        )
    if abs(cfg.env.dt - cfg.traj.dt) > 1e-12 * max(cfg.env.dt, cfg.traj.dt):
        raise ValueError("grid mismatch: envelope dt differs from trajectory dt")


def simulate_shots(cfg, threads=1):
    """Sample demodulated shots with at most one relaxation event per window.

    All random variates are drawn up front in a fixed order from one seeded
    generator (init uniforms, jump uniforms, excitation uniforms, I noise,
    Q noise), so results are a pure function of (seed, batch shape) for any
    thread count.
    """
    _validate(cfg)
    traj, env = cfg.traj, cfg.env
    k = traj.kappa
    rk = math.sqrt(k)
    t_grid = traj.t
    window = traj.duration

    ce = _cumsimp(traj.out_e * env.weights, traj.dt)
    cg = _cumsimp(traj.out_g * env.weights, traj.dt)
    w_end = float(_cumsimp(np.abs(env.weights) ** 2, traj.dt)[-1].real)
    phi = cfg.phi_demod if cfg.phi_demod is not None else _best_phase(ce[-1] - cg[-1])
    rot = np.exp(-1j * phi)
    sigma_m = math.sqrt(k * w_end / cfg.eta)

    # spliced window means: start on one branch, continue on the other after the jump
    p_e_jump = rot * (ce + (cg[-1] - cg))   # e window, decay at t
    p_g_jump = rot * (cg + (ce[-1] - ce))   # g window, excitation at t
    p_e_end = rot * ce[-1]
    p_g_end = rot * cg[-1]

    n, reps = cfg.n_shots, cfg.n_repeats
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    init_u = rng.random(n)
    jump_u = rng.random((n, reps))
    up_u = rng.random((n, reps))
    i_noise = rng.standard_normal((n, reps))
    q_noise = rng.standard_normal((n, reps))

    if cfg.init_state == "g":
        labels = np.full(n, -1, dtype=np.int8)
    elif cfg.init_state == "e":
        labels = np.full(n, 1, dtype=np.int8)
    elif cfg.init_state == "both":   # deterministic even split
        labels = np.where(np.arange(n) < n // 2, -1, 1).astype(np.int8)
    else:
        labels = np.where(init_u < cfg.p_excited, 1, -1).astype(np.int8)

    p_down = -math.expm1(-window / cfg.t1)
    p_up = -math.expm1(-window * cfg.gamma_up) if cfg.gamma_up > 0 else 0.0

    i_vals = np.empty((n, reps))
    q_vals = np.empty((n, reps))
    jump_times = np.full((n, reps), np.nan)
    scale = 2.0 * rk / sigma_m
    q_amp = math.sqrt(cfg.q_variance_ratio)

    def run_block(sl):
        state = labels[sl].astype(np.float64)
        for r in range(reps):
            excited = state > 0
            u = jump_u[sl, r]
            uu = up_u[sl, r]
            jump_down = excited & (u < p_down)
            jump_up = (~excited) & (uu < p_up)
            mean_p = np.where(excited, p_e_end, p_g_end).astype(complex)
            if np.any(jump_down):
                tj = -cfg.t1 * np.log1p(-u[jump_down])
                mean_p[jump_down] = np.interp(tj, t_grid, p_e_jump.real) + 1j * np.interp(
                    tj, t_grid, p_e_jump.imag
                )
                jump_times[sl, r][jump_down] = tj
            if np.any(jump_up):
                tj = -np.log1p(-uu[jump_up]) / cfg.gamma_up
                mean_p[jump_up] = np.interp(tj, t_grid, p_g_jump.real) + 1j * np.interp(
                    tj, t_grid, p_g_jump.imag
                )
                jump_times[sl, r][jump_up] = tj
            i_vals[sl, r] = scale * mean_p.real + i_noise[sl, r]
            q_vals[sl, r] = scale * mean_p.imag + q_amp * q_noise[sl, r]
            state = np.where(jump_down | jump_up, -state, state)

    if threads <= 1 or n < 2 * threads:
        run_block(slice(0, n))
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_block, [slice(bounds[j], bounds[j + 1]) for j in range(threads)]))

    return ShotBatch(
        i_vals=i_vals,
        q_vals=q_vals,
        labels=labels,
        jump_times=jump_times,
        eta=cfg.eta,
        q_variance_ratio=cfg.q_variance_ratio,
        window=window,
        demod_phase=phi,
    )


def _gaussian_fit(x, n_pass=3, clip=4.0):
    """Sigma-clipped mean and std, robust to sparse outlier tails."""
    mu, sd = float(np.mean(x)), float(np.std(x))
    for _ in range(n_pass):
        keep = np.abs(x - mu) < clip * max(sd, 1e-300)
        if not np.any(keep):
            break
        mu, sd = float(np.mean(x[keep])), float(np.std(x[keep]))
    return mu, sd


@dataclass
class ShotHistogram:
    """2D counts with axes in units of the fitted noise sigma."""

    counts: np.ndarray
    i_edges: np.ndarray
    q_edges: np.ndarray
    sigma_fit: float
    mu_g: float
    mu_e: float
    eta: float
    q_variance_ratio: float = 1.0

    @property
    def i_centers(self):
        return 0.5 * (self.i_edges[:-1] + self.i_edges[1:])

    @property
    def q_centers(self):
        return 0.5 * (self.q_edges[:-1] + self.q_edges[1:])

    @property
    def i_centers_eta_scaled(self):
        """Secondary axis: centers rescaled by the root detection efficiency."""
        return self.i_centers * math.sqrt(self.eta)


def histogram(batch, bins=61):
    """Bin first-window shots in the I/Q plane, axes normalized by the fitted sigma."""
    if batch.n_shots < MIN_FIT_SHOTS:
        warnings.warn(
            f"only {batch.n_shots} shots: Gaussian fits and axis scaling are unreliable",
            stacklevel=2,
        )
    x = batch.i_vals[:, 0]
    q = batch.q_vals[:, 0]
    mus, sds, counts = [], [], []
    for lab in (-1, 1):
        sel = batch.labels == lab
        if np.any(sel):
            mu, sd = _gaussian_fit(x[sel])
            mus.append(mu)
            sds.append(sd)
            counts.append(int(np.sum(sel)))
    sigma_fit = float(np.sqrt(np.average(np.square(sds), weights=counts)))
    if sigma_fit <= 0:
        sigma_fit = 1.0
    xs = x / sigma_fit
    qs = q / sigma_fit
    lo = min(xs.min(), qs.min()) - 1.0
    hi = max(xs.max(), qs.max()) + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    h, i_edges, q_edges = np.histogram2d(xs, qs, bins=(edges, edges))
    mu_g = mus[0] / sigma_fit if len(mus) > 0 else math.nan
    mu_e = (mus[-1] / sigma_fit) if len(mus) > 1 else math.nan
    return ShotHistogram(
        counts=h,
        i_edges=i_edges,
        q_edges=q_edges,
        sigma_fit=sigma_fit,
        mu_g=mu_g,
        mu_e=mu_e,
        eta=batch.eta,
        q_variance_ratio=batch.q_variance_ratio,
    )


def _fitted_misassignment(thr, mu_g, sd_g, mu_e, sd_e):
    return float(1.0 - ndtr((thr - mu_g) / sd_g) + ndtr((thr - mu_e) / sd_e))


def assign_and_score(batch, threshold=None):
    """Two-Gaussian fits, threshold assignment and fidelity/repeatability metrics."""
    x0 = batch.i_vals[:, 0]
    sel_g = batch.labels == -1
    sel_e = batch.labels == 1
    if not (np.any(sel_g) and np.any(sel_e)):
        raise ValueError("scoring needs shots prepared in both states")
    mu_g, sd_g = _gaussian_fit(x0[sel_g])
    mu_e, sd_e = _gaussian_fit(x0[sel_e])
    if mu_e < mu_g:
        raise ValueError("fitted means are inverted: excited mean below ground mean")
    sd_g = max(sd_g, 1e-12)
    sd_e = max(sd_e, 1e-12)
    sigma_pooled = math.sqrt(0.5 * (sd_g**2 + sd_e**2))
    d = (mu_e - mu_g) / sigma_pooled
    overlap = 2.0 * ndtr(-d / 2.0)
    if overlap > OVERLAP_WARN:
        warnings.warn(
            f"fitted distributions overlap by {overlap:.2f}: "
            "assignment metrics are degenerate",
            stacklevel=2,
        )

    if threshold is None:
        def empirical_error(thr):
            return float(np.mean(x0[sel_g] >= thr) + np.mean(x0[sel_e] < thr))

        mid = 0.5 * (mu_g + mu_e)
        try:
            res = minimize_scalar(
                empirical_error, bracket=(mu_g, mid, mu_e), method="golden",
                options={"xtol": 1e-4},
            )
            threshold = float(np.clip(res.x, mu_g, mu_e))
        except ValueError:
            threshold = mid

    f_g = float(np.mean(x0[sel_g] < threshold))
    f_e = float(np.mean(x0[sel_e] >= threshold))
    f_total = f_g + f_e - 1.0

    try:
        res_fit = minimize_scalar(
            _fitted_misassignment,
            bracket=(mu_g, 0.5 * (mu_g + mu_e), mu_e),
            method="golden",
            args=(mu_g, sd_g, mu_e, sd_e),
            options={"xtol": 1e-10},
        )
        thr_fit = float(res_fit.x)
    except ValueError:
        thr_fit = 0.5 * (mu_g + mu_e)   # bracket degenerates when the clouds coincide
    discrimination = 1.0 - _fitted_misassignment(thr_fit, mu_g, sd_g, mu_e, sd_e)

    if batch.n_repeats >= 2:
        assigned = batch.i_vals >= threshold
        cur, nxt = assigned[:, :-1], assigned[:, 1:]
        n_e = np.sum(cur)
        n_g = cur.size - n_e
        p_ee = float(np.sum(cur & nxt) / n_e) if n_e else math.nan
        p_gg = float(np.sum(~cur & ~nxt) / n_g) if n_g else math.nan
        qnd = 0.5 * (p_ee + p_gg)
    else:
        qnd = math.nan

    return ReadoutMetrics(
        snr_measured=(mu_e - mu_g) / math.sqrt(sd_g**2 + sd_e**2),
        sigma_i=sigma_pooled,
        separation_sigmas=d,
        discrimination_power=discrimination,
        f_g=f_g,
        f_e=f_e,
        f_total=f_total,
        qndness=qnd,
        threshold=float(threshold),
        mu_g=mu_g,
        mu_e=mu_e,
    )


def latched_assignments(batch, metrics, k=2.0):
    """Hysteretic state trace: flip only on excursions past the far distribution."""
    lower = metrics.mu_g + k * metrics.sigma_i    # must dip below this to leave e
    upper = metrics.mu_e - k * metrics.sigma_i    # must rise above this to leave g
    state = np.where(batch.i_vals[:, 0] >= metrics.threshold, 1, -1).astype(np.int8)
    out = np.empty(batch.i_vals.shape, dtype=np.int8)
    out[:, 0] = state
    for r in range(1, batch.n_repeats):
        x = batch.i_vals[:, r]
        state = np.where(state == 1, np.where(x <= lower, -1, 1), np.where(x >= upper, 1, -1))
        out[:, r] = state.astype(np.int8)
    return out


@dataclass
class ChainResult:
    """Repeated-readout batch with its scores and latched trace."""

    batch: ShotBatch
    metrics: ReadoutMetrics
    latched: np.ndarray


def chain_measure(cfg, threads=1):
    """Run back-to-back readout windows with a persistent qubit state."""
    if cfg.n_repeats < 2:
        raise ValueError(f"chained readout needs n_repeats >= 2, got {cfg.n_repeats!r}")
    batch = simulate_shots(cfg, threads=threads)
    metrics = assign_and_score(batch)
    latched = latched_assignments(batch, metrics, k=cfg.latch_k)
    return ChainResult(batch=batch, metrics=metrics, latched=latched)


def post_select_minority(batch, metrics):
    """Condition on a clean first shot, report the flip weight in the second."""
    if batch.n_repeats < 2:
        raise ValueError("post-selection needs at least two repeats")
    x0, x1 = batch.i_vals[:, 0], batch.i_vals[:, 1]
    sel_g = x0 <= metrics.mu_g
    sel_e = x0 >= metrics.mu_e
    out = {}
    out["g_selected_flip_fraction"] = (
        float(np.mean(x1[sel_g] >= metrics.threshold)) if np.any(sel_g) else math.nan
    )
    out["e_selected_flip_fraction"] = (
        float(np.mean(x1[sel_e] < metrics.threshold)) if np.any(sel_e) else math.nan
    )
    out["n_g_selected"] = int(np.sum(sel_g))
    out["n_e_selected"] = int(np.sum(sel_e))
    return out


def shots_to_csv(batch):
    """Serialize shots as shot_idx,repeat_idx,init_label,i_val,q_val,jump_time_s rows."""
    buf = io.StringIO()
    buf.write("shot_idx,repeat_idx,init_label,i_val,q_val,jump_time_s\n")
    for s in range(batch.n_shots):
        lab = "e" if batch.labels[s] > 0 else "g"
        for r in range(batch.n_repeats):
            tj = batch.jump_times[s, r]
            tj_txt = "" if math.isnan(tj) else f"{tj:.17g}"
            buf.write(
                f"{s},{r},{lab},{batch.i_vals[s, r]:.17g},{batch.q_vals[s, r]:.17g},{tj_txt}\n"
            )
    return buf.getvalue()


def shots_from_csv(text, eta=1.0):
    """Rebuild a batch from its CSV form."""
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    if not rows:
        raise ValueError("shots CSV has no data rows")
    n = max(int(r[0]) for r in rows) + 1
    reps = max(int(r[1]) for r in rows) + 1
    i_vals = np.zeros((n, reps))
    q_vals = np.zeros((n, reps))
    labels = np.zeros(n, dtype=np.int8)
    jump_times = np.full((n, reps), np.nan)
    for r in rows:
        s, rep = int(r[0]), int(r[1])
        labels[s] = 1 if r[2] == "e" else -1
        i_vals[s, rep] = float(r[3])
        q_vals[s, rep] = float(r[4])
        if r[5] != "":
            jump_times[s, rep] = float(r[5])
    return ShotBatch(
        i_vals=i_vals, q_vals=q_vals, labels=labels, jump_times=jump_times, eta=eta
    )


def metrics_to_dict(metrics):
    """Plain-dict view for JSON export."""
    return {
        "snr_measured": metrics.snr_measured,
        "sigma_i": metrics.sigma_i,
        "separation_sigmas": metrics.separation_sigmas,
        "discrimination_power": metrics.discrimination_power,
        "f_g": metrics.f_g,
        "f_e": metrics.f_e,
        "f_total": metrics.f_total,
        "qndness": None if math.isnan(metrics.qndness) else metrics.qndness,
        "threshold": metrics.threshold,
        "mu_g": metrics.mu_g,
        "mu_e": metrics.mu_e,
    }

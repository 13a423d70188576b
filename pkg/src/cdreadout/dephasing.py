"""Measurement back-action, efficiency calibration, spectator decoherence, leakage nulling."""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .demod import _cumsimp, _w_longitudinal, optimal_envelope, snr_numeric


@dataclass(frozen=True)
class DephasingResult:
    """Measurement-induced dephasing and the efficiency it implies."""

    gamma_m: float          # accumulated dephasing exponent over the window
    snr_ref: float          # matched-filter SNR of the same window
    eta_inferred: float     # snr_ref^2 / (4 gamma_m)

    @property
    def coherence_factor(self):
        return math.exp(-self.gamma_m)


def measurement_dephasing(traj, eta=1.0):
    """Integrate the branch separation into the dephasing exponent, cross-checked vs SNR."""
    diff = traj.alpha_e - traj.alpha_g
    gamma_m = float(0.5 * traj.kappa * _cumsimp(np.abs(diff) ** 2, traj.dt)[-1].real)
    if gamma_m <= 0:
        return DephasingResult(gamma_m=0.0, snr_ref=0.0, eta_inferred=math.nan)
    env = optimal_envelope(traj)
    snr_unit = float(snr_numeric(traj, env, eta=1.0).snr[-1])
    rel = abs(snr_unit**2 - 4.0 * gamma_m) / (4.0 * gamma_m)
    if rel > 1e-6:
        raise RuntimeError(
            f"information-dephasing identity violated by {rel:.3g}: "
            "matched-filter SNR^2 and 4*gamma_m disagree"
        )
    snr_ref = float(snr_numeric(traj, env, eta=eta).snr[-1])
    return DephasingResult(
        gamma_m=gamma_m, snr_ref=snr_ref, eta_inferred=snr_ref**2 / (4.0 * gamma_m)
    )


def gamma_m_longitudinal(zeta, kappa, tau):
    """Closed-form dephasing exponent for a constant displacement rate."""
    return 2.0 * (zeta / kappa) ** 2 * _w_longitudinal(kappa * np.asarray(tau, dtype=float))


@dataclass(frozen=True)
class EfficiencyFit:
    """Efficiency extracted from paired coherence-decay and SNR-slope scans."""

    eta: float
    sigma_d_sq: float      # variance of the optimally-projected record per unit SNR slope
    snr_slope: float
    r_squared: float


def extract_efficiency(ramsey_data, snr_data):
    """Combine contrast-vs-amplitude decay with SNR-vs-amplitude slope into eta."""
    ramsey = np.asarray(ramsey_data, dtype=float)
    snr = np.asarray(snr_data, dtype=float)
    if ramsey.ndim != 2 or ramsey.shape[1] != 2 or len(ramsey) < 5:
        raise ValueError("ramsey_data must be >= 5 rows of (amplitude, contrast)")
    if snr.ndim != 2 or snr.shape[1] != 2 or len(snr) < 5:
        raise ValueError("snr_data must be >= 5 rows of (amplitude, snr)")
    amp_r, contrast = ramsey[:, 0], ramsey[:, 1]
    if np.any(contrast <= 0) or np.any(contrast > 1.0 + 1e-9):
        raise ValueError("contrasts must lie in (0, 1]")
    order = np.argsort(amp_r)
    if contrast[order][-1] >= contrast[order][0]:
        raise ValueError("contrast does not decay with amplitude: nothing to fit")
    a2 = amp_r**2
    log_c = np.log(contrast)
    slope_c = float(np.dot(a2, log_c) / np.dot(a2, a2))
    if slope_c >= 0:
        raise ValueError("contrast decay fit has non-negative slope: nothing to fit")
    sigma_d_sq = -1.0 / (2.0 * slope_c)

    amp_s, snr_v = snr[:, 0], snr[:, 1]
    slope_s = float(np.dot(amp_s, snr_v) / np.dot(amp_s, amp_s))
    resid = snr_v - slope_s * amp_s
    ss_tot = float(np.sum((snr_v - snr_v.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    if r2 < 0.95:
        raise ValueError(f"SNR-vs-amplitude fit quality too low (R^2={r2:.3f} < 0.95)")
    return EfficiencyFit(
        eta=0.5 * sigma_d_sq * slope_s**2,
        sigma_d_sq=sigma_d_sq,
        snr_slope=slope_s,
        r_squared=r2,
    )


@dataclass
class SpectatorConfig:
    """Spectator qubit exposed to readout photons through a residual cross-Kerr."""

    chi_spectator: float            # rad/s
    n_echo: int
    sequence_length: float          # s
    traj: object                    # measurement-window ConditionalTrajectory
    measurement_on: bool = True
    n_paths: int = 20000
    seed: int = 0


@dataclass(frozen=True)
class SpectatorResult:
    """Coherence ratio of an echo sequence with the measurement on vs off."""

    n_echo: int
    contrast_ratio: float
    stderr: float
    phi_static: float
    contrast_ratio_analytic: float
    method: str = "mc"


def _sequence_photon_number(cfg):
    """Branch-averaged photon number over the echo sequence, window centered."""
    traj = cfg.traj
    dt = traj.dt
    t_seq = cfg.sequence_length
    n_cells = int(round(t_seq / dt))
    if n_cells < 2:
        raise ValueError("sequence_length too short for the trajectory time step")
    window = traj.duration
    if window > t_seq:
        raise ValueError("measurement window does not fit inside the echo sequence")
    n_win = 0.5 * (np.abs(traj.alpha_g) ** 2 + np.abs(traj.alpha_e) ** 2)
    i0 = int(round(0.5 * (t_seq - window) / dt))
    n_full = np.zeros(n_cells + 1)
    i1 = min(i0 + len(n_win), n_cells + 1)
    n_full[i0:i1] = n_win[: i1 - i0]
    if i1 < n_cells + 1:
        tail_t = np.arange(n_cells + 1 - i1) * dt
        n_full[i1:] = n_win[-1] * np.exp(-traj.kappa * (tail_t + dt))
    return n_full, dt, n_cells


def _echo_signs(n_echo, t_seq, n_cells, dt):
    """Toggling sign on cell centers, plus the exact flip times."""
    flips = (
        np.array([(2 * k - 1) / (2 * n_echo) * t_seq for k in range(1, n_echo + 1)])
        if n_echo > 0
        else np.empty(0)
    )
    if n_echo > 0 and t_seq / n_echo < 10 * dt:
        raise ValueError(
            f"echo pulse spacing {t_seq / n_echo:.3g}s is below 10 time steps; "
            "sequence under-resolved"
        )
    centers = (np.arange(n_cells) + 0.5) * dt
    signs = np.ones(n_cells)
    for f in flips:
        signs[centers >= f] *= -1.0
    return signs, flips


def spectator_dephasing(cfg, method="mc"):
    """Dephasing of an idle spectator during readout, with CPMG echo refocusing."""
    if cfg.n_echo < 0:
        raise ValueError(f"n_echo must be >= 0, got {cfg.n_echo!r}")
    if not cfg.measurement_on:
        return SpectatorResult(
            n_echo=cfg.n_echo,
            contrast_ratio=1.0,
            stderr=0.0,
            phi_static=0.0,
            contrast_ratio_analytic=1.0,
            method=method,
        )
    n_full, dt, n_cells = _sequence_photon_number(cfg)
    signs, flips = _echo_signs(cfg.n_echo, cfg.sequence_length, n_cells, dt)
    chi = cfg.chi_spectator
    kappa = cfg.traj.kappa

    # deterministic phase: exact flip-time splitting of the cumulative photon integral
    cum_n = cumulative_trapezoid(n_full, dx=dt, initial=0.0)
    t_nodes = np.arange(n_cells + 1) * dt
    bounds = np.concatenate(([0.0], flips, [cfg.sequence_length]))
    cum_at = np.interp(bounds, t_nodes, cum_n)
    seg = np.diff(cum_at)
    phi_static = chi * float(np.sum(seg * (-1.0) ** np.arange(len(seg))))

    # stochastic phase: photon shot noise filtered by the cavity bandwidth
    w = np.sqrt(n_full[:n_cells]) * signs
    rho = math.exp(-kappa * dt)

    r = 0.0
    var = 0.0
    for k in range(n_cells):
        var += w[k] * (w[k] + 2.0 * r)
        r = rho * (r + w[k])
    var *= (chi * dt) ** 2
    ratio_analytic = math.exp(-0.5 * var)

    if method == "analytic":
        return SpectatorResult(
            n_echo=cfg.n_echo,
            contrast_ratio=ratio_analytic,
            stderr=0.0,
            phi_static=phi_static,
            contrast_ratio_analytic=ratio_analytic,
            method="analytic",
        )

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    u = rng.standard_normal(cfg.n_paths)
    acc = np.zeros(cfg.n_paths)
    amp = math.sqrt(1.0 - rho * rho)
    for k in range(n_cells):
        acc += w[k] * u
        u = rho * u + amp * rng.standard_normal(cfg.n_paths)
    phases = chi * dt * acc
    zc, zs = np.cos(phases), np.sin(phases)
    ratio = float(np.hypot(np.mean(zc), np.mean(zs)))
    stderr = float(
        math.sqrt((np.var(zc) + np.var(zs)) / cfg.n_paths)
    )
    return SpectatorResult(
        n_echo=cfg.n_echo,
        contrast_ratio=ratio,
        stderr=stderr,
        phi_static=phi_static,
        contrast_ratio_analytic=ratio_analytic,
        method="mc",
    )


@dataclass
class CancellationResult:
    """Grid search for the compensation tone nulling a leaked common drive."""

    best_amp: float
    best_phase: float
    residual_map: np.ndarray    # (len(amps), len(phases))
    amps: np.ndarray
    phases: np.ndarray
    response_scale: float


def tune_cancellation(leakage, amps, phases, kappa=1e7, window=870e-9, dt=1e-9):
    """Sweep a compensation tone against a leaked drive; residual is the summed-branch mean.

    The conditional parts of the two branches cancel in the sum, so the residual
    is the magnitude of the complex demodulated response to the net common drive
    (leakage + amp*e^{i*phase}) and is exactly linear in that net amplitude.
    """
    amps = np.asarray(amps, dtype=float)
    phases = np.asarray(phases, dtype=float)
    if len(amps) < 1 or len(phases) < 1:
        raise ValueError("amplitude and phase grids must be non-empty")
    n = int(round(window / dt))
    t = np.arange(n + 1) * dt
    alpha_unit = (2.0 / kappa) * -np.expm1(-0.5 * kappa * t)
    out_unit = -1.0 / math.sqrt(kappa) + math.sqrt(kappa) * alpha_unit
    response = 2.0 * math.sqrt(kappa) * complex(_cumsimp(out_unit, dt)[-1])
    r0 = abs(response)

    net = leakage + amps[:, None] * np.exp(1j * phases[None, :])
    residual_map = np.abs(net) * r0
    flat = int(np.argmin(residual_map))
    ia, ip = np.unravel_index(flat, residual_map.shape)
    if abs(leakage) > 0:
        phase_wraps = np.ptp(phases) >= 1.9 * math.pi
        amp_edge = ia in (0, len(amps) - 1) and len(amps) > 2
        phase_edge = ip in (0, len(phases) - 1) and len(phases) > 2 and not phase_wraps
        if amp_edge or phase_edge:
            warnings.warn(
                "cancellation optimum sits on the grid boundary; widen the search range",
                stacklevel=2,
            )
    return CancellationResult(
        best_amp=float(amps[ia]),
        best_phase=float(phases[ip]),
        residual_map=residual_map,
        amps=amps,
        phases=phases,
        response_scale=r0,
    )


def residual_map_to_csv(result):
    """Serialize the cancellation sweep as amp,phase,residual rows."""
    buf = io.StringIO()
    buf.write("amp,phase,residual\n")
    for i, a in enumerate(result.amps):
        for j, p in enumerate(result.phases):
            buf.write(f"{a:.17g},{p:.17g},{result.residual_map[i, j]:.17g}\n")
    return buf.getvalue()

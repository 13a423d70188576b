"""Demodulation envelopes, numeric SNR curves and their closed-form references."""

from __future__ import annotations

import io
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

PHI_GRID_STEP = 1e-3   # demodulation-phase search resolution (rad)


def _cumsimp(y, dx):
    """Cumulative Simpson quadrature, complex-safe, starting at 0."""
    y = np.asarray(y)
    if np.iscomplexobj(y):
        re = cumulative_simpson(y.real, dx=dx, initial=0.0)
        im = cumulative_simpson(y.imag, dx=dx, initial=0.0)
        return re + 1j * im
    return cumulative_simpson(y, dx=dx, initial=0.0)


@dataclass
class DemodEnvelope:
    """Complex demodulation weights on the trajectory's inclusive time grid."""

    dt: float
    weights: np.ndarray
    kind: str = "custom"


def boxcar_envelope(n_samples, dt):
    """Uniform unit weights."""
    if n_samples < 2:
        raise ValueError("boxcar envelope needs at least two samples")
    return DemodEnvelope(dt=dt, weights=np.ones(n_samples, dtype=complex), kind="boxcar")


def optimal_envelope(traj):
    """Matched filter: conjugate branch difference, normalized to unit peak."""
    d = traj.out_e - traj.out_g
    peak = np.max(np.abs(d))
    if peak <= 0:
        raise ValueError("branches are identical: matched filter is degenerate")
    return DemodEnvelope(dt=traj.dt, weights=np.conj(d) / peak, kind="optimal")


def custom_envelope(weights, dt):
    """Wrap caller-supplied weights."""
    w = np.asarray(weights, dtype=complex)
    if len(w) < 2:
        raise ValueError("envelope needs at least two samples")
    return DemodEnvelope(dt=dt, weights=w, kind="custom")


@dataclass
class SnrCurve:
    """Amplitude SNR as a function of integration time."""

    tau: np.ndarray
    snr: np.ndarray
    label: str = ""
    phi: float = 0.0

    def to_csv(self):
        buf = io.StringIO()
        buf.write("tau_s,snr\n")
        for k in range(len(self.tau)):
            buf.write(f"{self.tau[k]:.17g},{self.snr[k]:.17g}\n")
        return buf.getvalue()


def snr_curve_from_csv(text, label=""):
    """Rebuild an SNR curve from its CSV form."""
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    if not rows:
        raise ValueError("SNR CSV has no data rows")
    tau = np.array([float(r[0]) for r in rows])
    snr = np.array([float(r[1]) for r in rows])
    return SnrCurve(tau=tau, snr=snr, label=label)


def _best_phase(c_end):
    """Phase maximizing the in-phase projected signal, searched on a fixed grid."""
    phis = np.arange(0.0, 2.0 * math.pi, PHI_GRID_STEP)
    proj = np.abs(np.real(np.exp(-1j * phis) * c_end))
    return float(phis[np.argmax(proj)])


def snr_numeric(traj, env, phi=None, eta=1.0):
    """Integrate the demodulated branch separation against the accumulated noise."""
    if len(env.weights) != len(traj.out_g):
        raise ValueError(
            f"grid mismatch: envelope has {len(env.weights)} samples, "
            f"trajectory has {len(traj.out_g)}"
        )
    if abs(env.dt - traj.dt) > 1e-12 * max(env.dt, traj.dt):
        raise ValueError(f"grid mismatch: envelope dt {env.dt!r} differs from trajectory dt {traj.dt!r}")
    if not (0.0 < eta <= 1.0):
        raise ValueError(f"eta must be in (0, 1], got {eta!r}")
    k = traj.kappa
    d = traj.out_e - traj.out_g
    c = _cumsimp(d * env.weights, traj.dt)
    w = _cumsimp(np.abs(env.weights) ** 2, traj.dt)
    if phi is None:
        phi = _best_phase(c[-1])
    signal = 2.0 * math.sqrt(k) * np.real(np.exp(-1j * phi) * c)
    noise = 2.0 * k * w
    snr = np.zeros_like(signal)
    pos = noise > 0
    snr[pos] = math.sqrt(eta) * np.abs(signal[pos]) / np.sqrt(noise[pos])
    return SnrCurve(tau=traj.t.copy(), snr=snr, label=f"numeric-{traj.mode}-{env.kind}", phi=phi)


def snr_longitudinal_boxcar(zeta, kappa, tau, eta=1.0):
    """Uniform-weight SNR for a constant displacement rate switched on at t=0."""
    x = kappa * np.asarray(tau, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = (
        math.sqrt(8.0 * eta) * (zeta / kappa) * (x[pos] + 2.0 * np.expm1(-x[pos] / 2)) / np.sqrt(x[pos])
    )
    return out


def _w_longitudinal(x):
    """Matched-filter weight integral for the displacement ring-up."""
    return x + 4.0 * np.expm1(-x / 2) - np.expm1(-x)


def snr_longitudinal_optimal(zeta, kappa, tau, eta=1.0):
    """Matched-filter SNR for a constant displacement rate switched on at t=0."""
    x = kappa * np.asarray(tau, dtype=float)
    return math.sqrt(8.0 * eta) * (zeta / kappa) * np.sqrt(np.maximum(_w_longitudinal(x), 0.0))


def snr_dispersive_boxcar(eps, chi, kappa, tau, phi_demod=math.pi / 2, eta=1.0):
    """Uniform-weight SNR for a constant drive under a conditional cavity pull."""
    tau = np.asarray(tau, dtype=float)
    x = kappa * tau
    phi = math.atan2(chi, kappa)
    s2 = math.sin(2 * phi)
    c2 = math.cos(phi) ** 2
    out = np.zeros_like(x)
    pos = x > 0
    xp, tp = x[pos], tau[pos]
    # regrouped to avoid cancellation: sin2phi*sqrt(x) - (4cos^2/sqrt(x)) * bracket
    bracket = s2 * -np.expm1(-xp / 2) - 2.0 * np.cos(2 * phi + chi * tp / 4) * np.sin(
        chi * tp / 4
    ) * np.exp(-xp / 2)
    term = s2 * np.sqrt(xp) - (4.0 * c2 / np.sqrt(xp)) * bracket
    out[pos] = math.sqrt(8.0 * eta) * (eps / kappa) * math.sin(phi_demod) * np.abs(term)
    return out


_SERIES_TERMS = 26


def _dispersive_weight_integral(chi, kappa, tau):
    """Integral of the squared matched-filter response for the dispersive branch split."""
    tau = np.asarray(tau, dtype=float)
    s_tot = math.hypot(kappa, chi)
    phi = math.atan2(chi, kappa)
    sphi, cphi = chi / s_tot, kappa / s_tot
    x = kappa * tau
    out = np.empty_like(tau)

    series = (x < 0.5) & (0.5 * s_tot * tau < 1.0)
    if np.any(series):
        # g(t) = sin(phi) - Im[e^{i phi} e^{z t}], z = (i chi - kappa)/2; Maclaurin in t
        z = 0.5 * (1j * chi - kappa)
        c = np.zeros(_SERIES_TERMS + 1)
        p = complex(cphi, sphi)   # e^{i phi}
        fact = 1.0
        for n_ in range(1, _SERIES_TERMS + 1):
            p *= z
            fact *= n_
            if n_ >= 2:   # n=1 coefficient is exactly zero
                c[n_] = -p.imag / fact
        conv = np.convolve(c, c)
        coeffs = np.zeros(len(conv) + 1)
        for pdeg in range(len(conv)):
            coeffs[pdeg + 1] = conv[pdeg] / (pdeg + 1)
        out[series] = np.polynomial.polynomial.polyval(tau[series], coeffs)

    direct = ~series
    if np.any(direct):
        td, xd = tau[direct], x[direct]
        i1 = (2.0 / s_tot) * (
            math.sin(2 * phi) - np.sin(2 * phi + chi * td / 2) * np.exp(-xd / 2)
        )
        i2 = (math.cos(3 * phi) - np.exp(-xd) * np.cos(3 * phi + chi * td)) / s_tot
        out[direct] = (
            sphi**2 * td
            - 2.0 * sphi * i1
            + (0.5 / kappa) * -np.expm1(-xd)
            - 0.5 * i2
        )
    return out


def snr_dispersive_optimal(eps, chi, kappa, tau, eta=1.0):
    """Matched-filter SNR for a constant drive under a conditional cavity pull."""
    tau = np.asarray(tau, dtype=float)
    phi = math.atan2(chi, kappa)
    f_int = np.maximum(_dispersive_weight_integral(chi, kappa, tau), 0.0)
    return math.sqrt(8.0 * eta) * (eps / math.sqrt(kappa)) * 2.0 * math.cos(phi) * np.sqrt(f_int)


SlopeFit = namedtuple("SlopeFit", ["slope", "stderr"])


def fit_loglog_slope(curve, tau_min, tau_max):
    """Least-squares power-law exponent of an SNR curve over a tau window."""
    mask = (curve.tau >= tau_min) & (curve.tau <= tau_max) & (curve.tau > 0)
    n = int(np.sum(mask))
    if n < 10:
        raise ValueError(f"need at least 10 points in the fit window, got {n}")
    snr = curve.snr[mask]
    if np.any(snr <= 0):
        raise ValueError("all SNR values in the fit window must be positive")
    lx = np.log(curve.tau[mask])
    ly = np.log(snr)
    lx = lx - lx.mean()
    slope = float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))
    resid = (ly - ly.mean()) - slope * lx
    dof = max(n - 2, 1)
    stderr = float(math.sqrt(np.dot(resid, resid) / dof / np.dot(lx, lx)))
    return SlopeFit(slope=slope, stderr=stderr)


def compare_curves(curve_a, curve_b):
    """Pointwise ratio and crossover times of two SNR curves on a shared grid."""
    if len(curve_a.tau) != len(curve_b.tau) or not np.allclose(
        curve_a.tau, curve_b.tau, rtol=1e-12, atol=0.0
    ):
        raise ValueError("tau grids differ: curves must share a common integration-time grid")
    tau = curve_a.tau
    valid = (curve_a.snr > 0) & (curve_b.snr > 0)
    ratio = np.full(len(tau), np.nan)
    ratio[valid] = curve_a.snr[valid] / curve_b.snr[valid]
    diff = curve_a.snr - curve_b.snr
    crossovers = []
    for i in range(len(tau) - 1):
        if valid[i] and valid[i + 1] and diff[i] != 0 and np.sign(diff[i]) != np.sign(diff[i + 1]):
            frac = diff[i] / (diff[i] - diff[i + 1])
            crossovers.append(float(tau[i] + frac * (tau[i + 1] - tau[i])))
    finite = ratio[np.isfinite(ratio)]
    return {
        "tau": tau,
        "ratio": ratio,
        "crossovers": crossovers,
        "ratio_final": float(ratio[valid][-1]) if np.any(valid) else math.nan,
        "ratio_max": float(np.max(finite)) if len(finite) else math.nan,
        "ratio_min": float(np.min(finite)) if len(finite) else math.nan,
        "a_dominates_initially": bool(len(finite) and finite[0] > 1.0),
    }

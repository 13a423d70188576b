"""Qubit-conditioned cavity trajectories for dispersive and displacement readout."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

MAX_KAPPA_STEP = 0.05   # fixed-step RK4 resolution guard on dt*kappa
SIGMA = {"g": -1.0, "e": +1.0}


@dataclass
class ConditionalTrajectory:
    """Cavity and output fields for both qubit branches on an inclusive time grid."""

    dt: float
    kappa: float
    alpha_g: np.ndarray
    alpha_e: np.ndarray
    out_g: np.ndarray
    out_e: np.ndarray
    mode: str = "generic"

    @property
    def t(self):
        return np.arange(len(self.alpha_g)) * self.dt

    @property
    def duration(self):
        return (len(self.alpha_g) - 1) * self.dt


def dispersive_amplitude(t, eps, chi, kappa, sigma):
    """Closed-form response to a constant input drive under a conditional cavity pull."""
    r = 0.5 * (kappa + 1j * chi * sigma)
    return (eps / r) * -np.expm1(-r * np.asarray(t))


def longitudinal_amplitude(t, zeta, kappa, sigma):
    """Closed-form response to a constant conditional displacement rate."""
    return -1j * sigma * (zeta / kappa) * -np.expm1(-0.5 * kappa * np.asarray(t))


def _check_step(dt, kappa):
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if dt * kappa > MAX_KAPPA_STEP:
        raise ValueError(
            f"dt*kappa={dt * kappa:.3g} exceeds {MAX_KAPPA_STEP}; "
            "fixed-step integration would be under-resolved"
        )


def _rk4_conditional(zeta, chi, kappa, eps, dt, n_steps, alpha_init=None):
    """RK4 for alpha' = -(i*chi*sigma/2 + kappa/2)*alpha - i*(zeta/2)*sigma + eps, both branches."""
    sig = np.array([-1.0, 1.0])
    c = -(0.5j * chi * sig + 0.5 * kappa)
    alpha = np.zeros((n_steps + 1, 2), dtype=complex)
    x = np.zeros(2, dtype=complex) if alpha_init is None else np.asarray(alpha_init, dtype=complex).copy()
    alpha[0] = x
    z = np.asarray(zeta, dtype=complex)

    def drive(zval):
        return -0.5j * zval * sig + eps

    for k in range(n_steps):
        z0 = z[k]
        z1 = z[k + 1] if k + 1 < len(z) else z[-1]
        zm = 0.5 * (z0 + z1)
        d0, dm, d1 = drive(z0), drive(zm), drive(z1)
        k1 = c * x + d0
        k2 = c * (x + 0.5 * dt * k1) + dm
        k3 = c * (x + 0.5 * dt * k2) + dm
        k4 = c * (x + dt * k3) + d1
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        alpha[k + 1] = x
    return alpha[:, 0], alpha[:, 1]


def _wrap(alpha_g, alpha_e, kappa, eps, dt, mode):
    in_mean = -eps / math.sqrt(kappa)
    rk = math.sqrt(kappa)
    return ConditionalTrajectory(
        dt=dt,
        kappa=kappa,
        alpha_g=alpha_g,
        alpha_e=alpha_e,
        out_g=in_mean + rk * alpha_g,
        out_e=in_mean + rk * alpha_e,
        mode=mode,
    )


def evolve_dispersive(eps, chi, kappa, duration, dt):
    """Integrate both conditional branches under a constant input drive."""
    _check_step(dt, kappa)
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError(f"duration {duration!r} is shorter than dt {dt!r}")
    ag, ae = _rk4_conditional(np.zeros(n), chi, kappa, eps, dt, n)
    return _wrap(ag, ae, kappa, eps, dt, "dispersive")


def evolve_longitudinal(zeta, kappa, dt, alpha_init=None):
    """Integrate both conditional branches under a sampled displacement rate."""
    _check_step(dt, kappa)
    z = np.atleast_1d(np.asarray(zeta, dtype=complex))
    if len(z) < 1:
        raise ValueError("zeta must contain at least one sample")
    ag, ae = _rk4_conditional(z, 0.0, kappa, 0.0, dt, len(z), alpha_init=alpha_init)
    return _wrap(ag, ae, kappa, 0.0, dt, "longitudinal")


def evolve_combined(eps, zeta, chi, kappa, dt):
    """Integrate both conditional branches with drive and displacement rate together."""
    _check_step(dt, kappa)
    z = np.atleast_1d(np.asarray(zeta, dtype=complex))
    if len(z) < 1:
        raise ValueError("zeta must contain at least one sample")
    ag, ae = _rk4_conditional(z, chi, kappa, eps, dt, len(z))
    return _wrap(ag, ae, kappa, eps, dt, "combined")


def constant_zeta(zeta, duration, dt):
    """Left-edge sample array for a constant displacement rate."""
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError(f"duration {duration!r} is shorter than dt {dt!r}")
    return np.full(n, zeta, dtype=complex)


def trajectory_from_closed_form(mode, kappa, duration, dt, eps=0.0, chi=0.0, zeta=0.0):
    """Exact constant-input trajectory, for oracle comparisons and fast sweeps."""
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError(f"duration {duration!r} is shorter than dt {dt!r}")
    t = np.arange(n + 1) * dt
    if mode == "dispersive":
        ag = dispersive_amplitude(t, eps, chi, kappa, -1.0)
        ae = dispersive_amplitude(t, eps, chi, kappa, +1.0)
        return _wrap(ag, ae, kappa, eps, dt, "dispersive")
    if mode == "longitudinal":
        ag = longitudinal_amplitude(t, zeta, kappa, -1.0)
        ae = longitudinal_amplitude(t, zeta, kappa, +1.0)
        return _wrap(ag, ae, kappa, 0.0, dt, "longitudinal")
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class DepletionPlan:
    """Reversal pulse that empties the cavity through a zero crossing."""

    duration: float
    reversed_zeta: float
    target: complex


def design_depletion(alpha_end, zeta0, multiplier, kappa):
    """Pick the reversal duration whose decay toward the flipped fixed point crosses zero."""
    a0 = abs(alpha_end)
    if a0 < 1e-12:
        raise ValueError("cavity already empty: |alpha| at window end is below 1e-12")
    if zeta0 <= 0:
        raise ValueError(f"zeta0 must be positive, got {zeta0!r}")
    if multiplier >= 0:
        raise ValueError(
            f"multiplier={multiplier!r} gives no zero crossing: reversal must be negative"
        )
    target_mag = abs(multiplier) * zeta0 / kappa
    duration = (2.0 / kappa) * math.log(1.0 + a0 / target_mag)
    unit = alpha_end / a0
    return DepletionPlan(
        duration=duration,
        reversed_zeta=multiplier * zeta0,
        target=-target_mag * unit,
    )


def trajectory_to_csv(traj):
    """Serialize both branches of a trajectory as CSV rows."""
    buf = io.StringIO()
    buf.write(
        "t_s,re_alpha_g,im_alpha_g,re_alpha_e,im_alpha_e,"
        "re_out_g,im_out_g,re_out_e,im_out_e\n"
    )
    t = traj.t
    for k in range(len(t)):
        row = (
            t[k],
            traj.alpha_g[k].real, traj.alpha_g[k].imag,
            traj.alpha_e[k].real, traj.alpha_e[k].imag,
            traj.out_g[k].real, traj.out_g[k].imag,
            traj.out_e[k].real, traj.out_e[k].imag,
        )
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def trajectory_from_csv(text, kappa, mode="generic"):
    """Rebuild a trajectory from its CSV form (kappa is not stored in the CSV)."""
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    if len(rows) < 2:
        raise ValueError("trajectory CSV needs at least two data rows")
    cols = np.array([[float(v) for v in r] for r in rows])
    dt = cols[1, 0] - cols[0, 0]
    return ConditionalTrajectory(
        dt=float(dt),
        kappa=kappa,
        alpha_g=cols[:, 1] + 1j * cols[:, 2],
        alpha_e=cols[:, 3] + 1j * cols[:, 4],
        out_g=cols[:, 5] + 1j * cols[:, 6],
        out_e=cols[:, 7] + 1j * cols[:, 8],
        mode=mode,
    )

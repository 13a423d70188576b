"""Drive envelopes and the co-rotating displaced-frame amplitude they set up."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .system import TWO_PI, zeta_prefactor

TANH_STEEPNESS = 6.0   # endpoint-exact ramp shape, >=99% of target within the segment
MAX_PHASE_STEP = 0.1   # resolution guard on dt*|detuning| for the frame integrator


def _tanh_ramp_shape(u):
    """Smooth 0->1 profile, exactly 0 at u=0 and 1 at u=1."""
    s = TANH_STEEPNESS
    return (np.tanh(s * (u - 0.5)) + math.tanh(s / 2)) / (2 * math.tanh(s / 2))


@dataclass
class DriveEnvelope:
    """Complex drive amplitude sampled on a uniform left-edge grid."""

    dt: float
    samples: np.ndarray                 # complex, rad/s
    ring_time: float = 0.0              # end of the initial ramp-up, 0 if none

    @property
    def t(self):
        return np.arange(len(self.samples)) * self.dt

    @property
    def duration(self):
        return len(self.samples) * self.dt


def make_envelope(segments, dt):
    """Assemble a piecewise envelope from constant, tanh-ramp and reversal segments."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if not segments:
        raise ValueError("segments must be a non-empty list")
    parts = []
    level = 0.0 + 0.0j
    ring_time = 0.0
    elapsed = 0.0
    for i, seg in enumerate(segments):
        kind = seg["kind"]
        duration = seg["duration"]
        n = int(round(duration / dt))
        if n < 1:
            raise ValueError(f"segment {i}: duration {duration!r} is shorter than dt {dt!r}")
        if kind == "constant":
            target = complex(seg["amplitude"])
            parts.append(np.full(n, target, dtype=complex))
        elif kind == "tanh-ramp":
            target = complex(seg["amplitude"])
            u = np.arange(n) / n
            parts.append(level + (target - level) * _tanh_ramp_shape(u))
            if ring_time == 0.0:
                ring_time = elapsed + n * dt
        elif kind == "reversal":
            if i == 0:
                raise ValueError("segment 0: reversal needs a previous segment to scale")
            target = complex(seg["amplitude"]) * level
            parts.append(np.full(n, target, dtype=complex))
        else:
            raise ValueError(f"segment {i}: unknown kind {kind!r}")
        level = target
        elapsed += n * dt
    return DriveEnvelope(dt=dt, samples=np.concatenate(parts), ring_time=ring_time)


@dataclass
class FrameSolution:
    """Displaced-frame amplitude, the conditional rate it carries, and ramp diagnostics."""

    dt: float
    xi: np.ndarray                       # frame amplitude on the envelope grid
    zeta: np.ndarray                     # conditional displacement rate (rad/s)
    xi_adiabatic: np.ndarray             # instantaneous-follow reference
    resonant_residual: float             # |xi - xi_adiabatic| at the end of ring-up
    resonant_residual_relative: float    # same, normalized by |xi_adiabatic| there
    detuning: float = field(default=0.0)


def _frame_checks(env, delta):
    if delta == 0.0:
        raise ValueError("zero detuning: drive frequency coincides with the driven mode")
    if env.dt * abs(delta) > MAX_PHASE_STEP:
        raise ValueError(
            f"dt*|detuning|={env.dt * abs(delta):.3g} exceeds {MAX_PHASE_STEP}; "
            "time step too coarse to resolve the frame rotation"
        )


def _frame_params(params, use_filter):
    if use_filter:
        return params.omega_c - params.omega_f, params.kappa_filter_decay
    return params.omega_c - params.omega_q, params.gamma1


def solve_frame(env, params, use_filter=False):
    """Integrate the slow frame amplitude driven off-resonantly by the envelope."""
    delta, gamma = _frame_params(params, use_filter)
    _frame_checks(env, delta)
    eps = np.asarray(env.samples, dtype=complex)
    n = len(eps)
    a = -(0.5 * gamma - 1j * delta)
    dt = env.dt
    xi = np.empty(n, dtype=complex)
    xi[0] = 0.0
    mid = np.empty(n - 1, dtype=complex) if n > 1 else np.empty(0, dtype=complex)
    if n > 1:
        mid[:] = 0.5 * (eps[:-1] + eps[1:])
    x = 0.0 + 0.0j
    for k in range(n - 1):
        e0, em, e1 = eps[k], mid[k], eps[k + 1]
        k1 = a * x + 1j * e0
        k2 = a * (x + 0.5 * dt * k1) + 1j * em
        k3 = a * (x + 0.5 * dt * k2) + 1j * em
        k4 = a * (x + dt * k3) + 1j * e1
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        xi[k + 1] = x
    xi_ad = 1j * eps / (0.5 * gamma - 1j * delta)
    idx = min(int(round(env.ring_time / dt)), n - 1)
    resid = abs(xi[idx] - xi_ad[idx])
    ref = abs(xi_ad[idx])
    rel = resid / ref if ref > 0 else (0.0 if resid == 0.0 else math.inf)
    pref = zeta_prefactor(params, use_filter)
    if use_filter:
        zeta = -pref * math.copysign(1.0, delta) * xi
    else:
        zeta = -pref * xi
    return FrameSolution(
        dt=dt,
        xi=xi,
        zeta=zeta,
        xi_adiabatic=xi_ad,
        resonant_residual=resid,
        resonant_residual_relative=rel,
        detuning=delta,
    )


def zeta_of_envelope(env, params, use_filter=False):
    """Map an envelope directly to its adiabatic conditional displacement rate."""
    delta, _ = _frame_params(params, use_filter)
    _frame_checks(env, delta)
    pref = zeta_prefactor(params, use_filter)
    eps = np.asarray(env.samples, dtype=complex)
    if use_filter:
        return pref * eps / abs(delta)
    return pref * eps / delta


def envelope_to_csv(env):
    """Serialize an envelope as t_s,re_eps_hz,im_eps_hz rows."""
    buf = io.StringIO()
    buf.write("t_s,re_eps_hz,im_eps_hz\n")
    t = env.t
    for k in range(len(env.samples)):
        e = env.samples[k] / TWO_PI
        buf.write(f"{t[k]:.17g},{e.real:.17g},{e.imag:.17g}\n")
    return buf.getvalue()


def envelope_from_csv(text):
    """Rebuild an envelope from its CSV form (ring_time is not recoverable)."""
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    if not rows:
        raise ValueError("envelope CSV has no data rows")
    t = np.array([float(r[0]) for r in rows])
    samples = TWO_PI * (
        np.array([float(r[1]) for r in rows]) + 1j * np.array([float(r[2]) for r in rows])
    )
    dt = t[1] - t[0] if len(t) > 1 else 1.0
    return DriveEnvelope(dt=float(dt), samples=samples)

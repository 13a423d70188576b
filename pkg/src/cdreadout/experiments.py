"""Named experiments turning a validated config into deterministic output files."""

from __future__ import annotations

import io
import json
import math
import time
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from . import __version__
from .cavity import (
    constant_zeta,
    design_depletion,
    evolve_longitudinal,
    longitudinal_amplitude,
    trajectory_from_closed_form,
    trajectory_to_csv,
)
from .config import config_hash
from .demod import (
    SnrCurve,
    boxcar_envelope,
    compare_curves,
    optimal_envelope,
    snr_curve_from_csv,
    snr_dispersive_boxcar,
    snr_dispersive_optimal,
    snr_longitudinal_boxcar,
    snr_longitudinal_optimal,
    snr_numeric,
)
from .dephasing import (
    SpectatorConfig,
    extract_efficiency,
    gamma_m_longitudinal,
    residual_map_to_csv,
    spectator_dephasing,
    tune_cancellation,
)
from .drive import envelope_to_csv, make_envelope, solve_frame
from .shots import (
    ShotConfig,
    chain_measure,
    histogram,
    metrics_to_dict,
    post_select_minority,
    shots_to_csv,
    simulate_shots,
)
from .system import TWO_PI, derive_couplings

DEFAULT_DT = 1e-9


class NumericalError(RuntimeError):
    """A computation failed for numerical (not configuration) reasons."""

    def __init__(self, module, operation, message):
        super().__init__(f"{module}.{operation}: {message}")
        self.module = module
        self.operation = operation
        self.message = message


def _json_text(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


class Table:
    """Column-oriented output rendered as CSV or JSON depending on the run config."""

    def __init__(self, columns, rows):
        self.columns = list(columns)
        self.rows = rows

    def render(self, fmt):
        if fmt == "json":
            return _json_text({"columns": self.columns, "rows": [list(r) for r in self.rows]})
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")
        return buf.getvalue()


def _curve_files(curves, fmt):
    files = {}
    for curve in curves:
        tab = Table(["tau_s", "snr"], list(zip(curve.tau.tolist(), curve.snr.tolist())))
        files[f"snr_{curve.label}.{fmt}"] = tab.render(fmt)
    return files


def _build_window_traj(zeta, kappa, window_s, depletion_multiplier=None, depletion_s=None,
                       dt=DEFAULT_DT):
    """Constant-rate readout window, optionally followed by a reversal segment."""
    profile = [constant_zeta(zeta, window_s, dt)]
    if depletion_multiplier is not None and depletion_s:
        profile.append(constant_zeta(depletion_multiplier * zeta, depletion_s, dt))
    return evolve_longitudinal(np.concatenate(profile), kappa, dt)


SNR_FAMILIES = (
    "longitudinal-boxcar",
    "longitudinal-optimal",
    "dispersive-boxcar",
    "dispersive-optimal",
)


class SnrSweepParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    families: List[str] = list(SNR_FAMILIES)
    zeta_hz: float = 1.28e6
    eps_hz: Optional[float] = None       # default: matched steady-state branch separation
    chi_hz: Optional[float] = None       # default: chi = kappa
    eta: Optional[float] = None          # default: system eta
    tau_max_s: float = 2e-6
    n_tau: int = 400


def _run_snr_sweep(p, sys_params, seed, threads, fmt):
    for fam in p.families:
        if fam not in SNR_FAMILIES:
            raise ValueError(f"families entry {fam!r} is not one of {sorted(SNR_FAMILIES)}")
    kappa = sys_params.kappa
    zeta = TWO_PI * p.zeta_hz
    chi = TWO_PI * p.chi_hz if p.chi_hz is not None else kappa
    eps = TWO_PI * p.eps_hz if p.eps_hz is not None else zeta * (kappa**2 + chi**2) / (2 * chi * kappa)
    eta = p.eta if p.eta is not None else sys_params.eta
    tau = np.linspace(0.0, p.tau_max_s, p.n_tau + 1)
    makers = {
        "longitudinal-boxcar": lambda: snr_longitudinal_boxcar(zeta, kappa, tau, eta=eta),
        "longitudinal-optimal": lambda: snr_longitudinal_optimal(zeta, kappa, tau, eta=eta),
        "dispersive-boxcar": lambda: snr_dispersive_boxcar(eps, chi, kappa, tau, eta=eta),
        "dispersive-optimal": lambda: snr_dispersive_optimal(eps, chi, kappa, tau, eta=eta),
    }
    curves = [SnrCurve(tau=tau, snr=makers[f](), label=f) for f in p.families]
    files = _curve_files(curves, fmt)
    summary = {f"snr_final_{c.label}": float(c.snr[-1]) for c in curves}
    return files, summary


class HistogramParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    zeta_hz: float = 1.28e6
    window_s: float = 750e-9
    depletion_multiplier: Optional[float] = None
    depletion_s: Optional[float] = None
    n_shots: int = 20000
    envelope: Literal["optimal", "boxcar"] = "optimal"
    init: Literal["g", "e", "both", "thermal"] = "both"
    p_excited: float = 0.5
    no_decay: bool = False
    t1_s: Optional[float] = None
    eta: Optional[float] = None
    q_variance_ratio: float = 1.0
    bins: int = 61
    separation_sigmas: Optional[float] = None
    write_shots: bool = True


def _make_env(traj, kind):
    if kind == "boxcar":
        return boxcar_envelope(len(traj.out_g), traj.dt)
    return optimal_envelope(traj)


def _rescale_to_separation(p, kappa, eta, target):
    """Scale zeta so the matched-filter mean separation hits the target (linear map)."""
    zeta = TWO_PI * p.zeta_hz
    traj = _build_window_traj(zeta, kappa, p.window_s, p.depletion_multiplier, p.depletion_s)
    env = _make_env(traj, p.envelope)
    sep = math.sqrt(2.0) * float(snr_numeric(traj, env, eta=eta).snr[-1])
    if sep <= 0:
        raise NumericalError("shots", "separation_rescale", "zero separation at reference zeta")
    return zeta * target / sep


def _run_histogram(p, sys_params, seed, threads, fmt):
    kappa = sys_params.kappa
    eta = p.eta if p.eta is not None else sys_params.eta
    zeta = TWO_PI * p.zeta_hz
    if p.separation_sigmas is not None:
        zeta = _rescale_to_separation(p, kappa, eta, p.separation_sigmas)
    traj = _build_window_traj(zeta, kappa, p.window_s, p.depletion_multiplier, p.depletion_s)
    env = _make_env(traj, p.envelope)
    t1 = math.inf if p.no_decay else (p.t1_s if p.t1_s is not None else 1.0 / sys_params.gamma1)
    cfg = ShotConfig(
        n_shots=p.n_shots,
        seed=seed,
        traj=traj,
        env=env,
        init_state=p.init,
        p_excited=p.p_excited,
        t1=t1,
        eta=eta,
        q_variance_ratio=p.q_variance_ratio,
    )
    batch = simulate_shots(cfg, threads=threads)
    hist = histogram(batch, bins=p.bins)
    rows = []
    ic, qc = hist.i_centers, hist.q_centers
    for i in range(len(ic)):
        for j in range(len(qc)):
            rows.append((float(ic[i]), float(qc[j]), int(hist.counts[i, j])))
    files = {f"histogram.{fmt}": Table(["i_center", "q_center", "count"], rows).render(fmt)}
    summary = {
        "sigma_fit": hist.sigma_fit,
        "mu_g": hist.mu_g,
        "mu_e": hist.mu_e,
        "n_shots": batch.n_shots,
    }
    if p.init == "both":
        from .shots import assign_and_score

        metrics = assign_and_score(batch)
        files["metrics.json"] = _json_text(metrics_to_dict(metrics))
        summary.update(
            separation_sigmas=metrics.separation_sigmas,
            discrimination_power=metrics.discrimination_power,
        )
    if p.write_shots:
        files[f"shots.{fmt}"] = _shots_file(batch, fmt)
    return files, summary


def _shots_file(batch, fmt):
    if fmt == "csv":
        return shots_to_csv(batch)
    rows = []
    for s in range(batch.n_shots):
        lab = "e" if batch.labels[s] > 0 else "g"
        for r in range(batch.n_repeats):
            tj = batch.jump_times[s, r]
            rows.append(
                [s, r, lab, batch.i_vals[s, r], batch.q_vals[s, r], None if math.isnan(tj) else tj]
            )
    return _json_text(
        {"columns": ["shot_idx", "repeat_idx", "init_label", "i_val", "q_val", "jump_time_s"],
         "rows": rows}
    )


class QndChainParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    zeta_hz: float = 1.28e6
    window_s: float = 870e-9
    depletion_multiplier: Optional[float] = None
    depletion_s: Optional[float] = None
    n_chains: int = 10000
    n_repeats: int = 2
    envelope: Literal["optimal", "boxcar"] = "optimal"
    init: Literal["both", "thermal"] = "both"
    p_excited: float = 0.5
    no_decay: bool = False
    t1_s: Optional[float] = None
    eta: Optional[float] = None
    latch_k: float = 2.0
    separation_sigmas: Optional[float] = None
    write_shots: bool = True


def _run_qnd_chain(p, sys_params, seed, threads, fmt):
    kappa = sys_params.kappa
    eta = p.eta if p.eta is not None else sys_params.eta
    zeta = TWO_PI * p.zeta_hz
    if p.separation_sigmas is not None:
        zeta = _rescale_to_separation(p, kappa, eta, p.separation_sigmas)
    traj = _build_window_traj(zeta, kappa, p.window_s, p.depletion_multiplier, p.depletion_s)
    env = _make_env(traj, p.envelope)
    t1 = math.inf if p.no_decay else (p.t1_s if p.t1_s is not None else 1.0 / sys_params.gamma1)
    cfg = ShotConfig(
        n_shots=p.n_chains,
        seed=seed,
        traj=traj,
        env=env,
        init_state=p.init,
        p_excited=p.p_excited,
        t1=t1,
        eta=eta,
        n_repeats=p.n_repeats,
        latch_k=p.latch_k,
    )
    result = chain_measure(cfg, threads=threads)
    post = post_select_minority(result.batch, result.metrics)
    files = {"metrics.json": _json_text(metrics_to_dict(result.metrics)),
             "postselect.json": _json_text(post)}
    rows = []
    for s in range(result.batch.n_shots):
        for r in range(result.batch.n_repeats):
            rows.append((s, r, "e" if result.latched[s, r] > 0 else "g"))
    files[f"latched.{fmt}"] = Table(["chain_idx", "repeat_idx", "latched_label"], rows).render(fmt)
    if p.write_shots:
        files[f"shots.{fmt}"] = _shots_file(result.batch, fmt)
    summary = dict(metrics_to_dict(result.metrics))
    summary.update(post)
    return files, summary


class SpectatorEchoParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    chi_spectator_hz: Optional[float] = None   # default: the derived qubit-cavity cross-Kerr
    n_echo_list: List[int] = [0, 1, 2, 3, 4, 6]
    sequence_length_s: float = 1.2e-6
    zeta_hz: float = 1.28e6
    window_s: float = 870e-9
    n_paths: int = 20000
    measurement_on: bool = True
    method: Literal["mc", "analytic"] = "mc"


def _run_spectator_echo(p, sys_params, seed, threads, fmt):
    kappa = sys_params.kappa
    chi_s = (
        TWO_PI * p.chi_spectator_hz
        if p.chi_spectator_hz is not None
        else derive_couplings(sys_params).chi_qc
    )
    traj = trajectory_from_closed_form(
        "longitudinal", kappa, p.window_s, DEFAULT_DT, zeta=TWO_PI * p.zeta_hz
    )
    entries = []
    for i, n_echo in enumerate(p.n_echo_list):
        cfg = SpectatorConfig(
            chi_spectator=chi_s,
            n_echo=n_echo,
            sequence_length=p.sequence_length_s,
            traj=traj,
            measurement_on=p.measurement_on,
            n_paths=p.n_paths,
            seed=seed + i,
        )
        res = spectator_dephasing(cfg, method=p.method)
        entries.append(
            {
                "n_echo": res.n_echo,
                "contrast_ratio": res.contrast_ratio,
                "stderr": res.stderr,
                "phi_static": res.phi_static,
                "contrast_ratio_analytic": res.contrast_ratio_analytic,
            }
        )
    files = {"spectator.json": _json_text(entries)}
    summary = {f"ratio_n{e['n_echo']}": e["contrast_ratio"] for e in entries}
    return files, summary


class EfficiencyCalibParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eta_true: Optional[float] = None
    amplitudes: List[float] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0]
    window_s: float = 870e-9
    # weak unit drive keeps the echo contrast measurable across the amplitude
    # sweep (strong drive pins it to the numerical floor and biases the fit)
    zeta_hz_unit: float = 0.32e6
    noise_rel: float = 0.01


def _run_efficiency_calib(p, sys_params, seed, threads, fmt):
    kappa = sys_params.kappa
    eta_true = p.eta_true if p.eta_true is not None else sys_params.eta
    amps = np.asarray(p.amplitudes, dtype=float)
    if len(amps) < 5:
        raise ValueError("amplitudes must contain at least 5 points")
    zeta_unit = TWO_PI * p.zeta_hz_unit
    rng = np.random.Generator(np.random.PCG64(seed))
    xi_snr = rng.standard_normal(len(amps))
    xi_con = rng.standard_normal(len(amps))
    snr_clean = snr_longitudinal_optimal(zeta_unit, kappa, np.full(len(amps), p.window_s), eta=eta_true) * amps
    gamma = gamma_m_longitudinal(zeta_unit * amps, kappa, p.window_s)
    snr_vals = snr_clean * (1.0 + p.noise_rel * xi_snr)
    contrast = np.clip(np.exp(-gamma) * (1.0 + p.noise_rel * xi_con), 1e-12, 1.0)
    try:
        fit = extract_efficiency(
            np.column_stack([amps, contrast]), np.column_stack([amps, snr_vals])
        )
    except ValueError as exc:
        raise NumericalError("dephasing", "extract_efficiency", str(exc)) from exc
    rows = list(zip(amps.tolist(), contrast.tolist(), snr_vals.tolist()))
    files = {
        f"calib.{fmt}": Table(["amplitude", "contrast", "snr"], rows).render(fmt),
        "eta.json": _json_text(
            {
                "eta_inferred": fit.eta,
                "eta_true": eta_true,
                "sigma_d_sq": fit.sigma_d_sq,
                "snr_slope": fit.snr_slope,
                "r_squared": fit.r_squared,
            }
        ),
    }
    return files, {"eta_inferred": fit.eta, "eta_true": eta_true}


class CancellationParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    leakage_re: float = 1.0
    leakage_im: float = 0.0
    amp_min: float = 0.0
    amp_max: float = 2.0
    n_amps: int = 81
    n_phases: int = 64
    window_s: float = 870e-9


def _run_cancellation(p, sys_params, seed, threads, fmt):
    amps = np.linspace(p.amp_min, p.amp_max, p.n_amps)
    phases = np.arange(p.n_phases) * (TWO_PI / p.n_phases)
    res = tune_cancellation(
        complex(p.leakage_re, p.leakage_im),
        amps,
        phases,
        kappa=sys_params.kappa,
        window=p.window_s,
    )
    if fmt == "csv":
        residual_text = residual_map_to_csv(res)
    else:
        rows = []
        for i, a in enumerate(res.amps):
            for j, ph in enumerate(res.phases):
                rows.append([float(a), float(ph), float(res.residual_map[i, j])])
        residual_text = _json_text({"columns": ["amp", "phase", "residual"], "rows": rows})
    files = {
        f"residual.{fmt}": residual_text,
        "optimum.json": _json_text(
            {
                "best_amp": res.best_amp,
                "best_phase": res.best_phase,
                "residual_min": float(res.residual_map.min()),
                "response_scale": res.response_scale,
            }
        ),
    }
    return files, {"best_amp": res.best_amp, "best_phase": res.best_phase}


class DepletionDesignParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    zeta_hz: float = 1.28e6
    multiplier: float = -2.0
    window_s: float = 750e-9
    verify_steps: int = 400


def _run_depletion_design(p, sys_params, seed, threads, fmt):
    kappa = sys_params.kappa
    zeta = TWO_PI * p.zeta_hz
    alpha_end = complex(longitudinal_amplitude(p.window_s, zeta, kappa, +1.0))
    try:
        plan = design_depletion(alpha_end, zeta, p.multiplier, kappa)
    except ValueError as exc:
        raise NumericalError("cavity", "design_depletion", str(exc)) from exc
    dt_rev = plan.duration / p.verify_steps
    rev = evolve_longitudinal(
        np.full(p.verify_steps, plan.reversed_zeta, dtype=complex),
        kappa,
        dt_rev,
        alpha_init=(-alpha_end, alpha_end),
    )
    residual = float(abs(rev.alpha_e[-1]))
    files = {
        "depletion.json": _json_text(
            {
                "duration_s": plan.duration,
                "reversed_zeta_hz": plan.reversed_zeta / TWO_PI,
                "window_end_amp": abs(alpha_end),
                "residual_amp": residual,
                "residual_relative": residual / abs(alpha_end),
            }
        ),
        f"reversal_trajectory.{fmt}": (
            trajectory_to_csv(rev)
            if fmt == "csv"
            else _json_text(
                {
                    "columns": ["t_s", "re_alpha_e", "im_alpha_e"],
                    "rows": [
                        [float(t), float(a.real), float(a.imag)]
                        for t, a in zip(rev.t, rev.alpha_e)
                    ],
                }
            )
        ),
    }
    return files, {"duration_s": plan.duration, "residual_relative": residual / abs(alpha_end)}


class FrameCheckParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps_over_delta: float = 0.1925
    ring_time_factor: float = 100.0    # ramp duration in units of 1/|detuning|
    hold_factor: float = 100.0         # constant hold after the ramp, same units
    dt_factor: float = 0.02            # time step in units of 1/|detuning|
    use_filter: bool = False


def _run_frame_check(p, sys_params, seed, threads, fmt):
    delta = sys_params.omega_c - (
        sys_params.omega_f if p.use_filter else sys_params.omega_q
    )
    if delta == 0:
        raise ValueError("zero detuning between drive and driven mode")
    adelta = abs(delta)
    dt = p.dt_factor / adelta
    amp = p.eps_over_delta * adelta
    env = make_envelope(
        [
            {"kind": "tanh-ramp", "amplitude": amp, "duration": p.ring_time_factor / adelta},
            {"kind": "constant", "amplitude": amp, "duration": p.hold_factor / adelta},
        ],
        dt,
    )
    sol = solve_frame(env, sys_params, use_filter=p.use_filter)
    rows = [
        (
            float(k * dt),
            float(sol.xi[k].real),
            float(sol.xi[k].imag),
            float(sol.zeta[k].real / TWO_PI),
            float(sol.zeta[k].imag / TWO_PI),
        )
        for k in range(len(sol.xi))
    ]
    files = {
        f"frame.{fmt}": Table(
            ["t_s", "re_xi", "im_xi", "re_zeta_hz", "im_zeta_hz"], rows
        ).render(fmt),
        f"envelope.{fmt}": (
            envelope_to_csv(env)
            if fmt == "csv"
            else _json_text(
                {
                    "columns": ["t_s", "re_eps_hz", "im_eps_hz"],
                    "rows": [
                        [float(t), float(e.real / TWO_PI), float(e.imag / TWO_PI)]
                        for t, e in zip(env.t, env.samples)
                    ],
                }
            )
        ),
        "frame.json": _json_text(
            {
                "resonant_residual": sol.resonant_residual,
                "resonant_residual_relative": sol.resonant_residual_relative,
                "zeta_final_hz": abs(sol.zeta[-1]) / TWO_PI,
                "detuning_hz": sol.detuning / TWO_PI,
            }
        ),
    }
    summary = {
        "resonant_residual": sol.resonant_residual,
        "zeta_final_hz": abs(sol.zeta[-1]) / TWO_PI,
    }
    return files, summary


EXPERIMENTS = {
    "snr-sweep": (SnrSweepParams, _run_snr_sweep),
    "histogram": (HistogramParams, _run_histogram),
    "qnd-chain": (QndChainParams, _run_qnd_chain),
    "spectator-echo": (SpectatorEchoParams, _run_spectator_echo),
    "efficiency-calib": (EfficiencyCalibParams, _run_efficiency_calib),
    "cancellation-tune": (CancellationParams, _run_cancellation),
    "depletion-design": (DepletionDesignParams, _run_depletion_design),
    "frame-check": (FrameCheckParams, _run_frame_check),
}


def run_experiment(cfg, threads=1):
    """Execute the configured experiment; returns (files, manifest)."""
    if cfg.experiment.name not in EXPERIMENTS:
        raise ValueError(
            f"unknown experiment {cfg.experiment.name!r}; "
            f"available: {sorted(EXPERIMENTS)}"
        )
    model, handler = EXPERIMENTS[cfg.experiment.name]
    params = model.model_validate(cfg.experiment.params)
    sys_params = cfg.system.to_params()
    t0 = time.perf_counter()
    try:
        files, summary = handler(params, sys_params, cfg.seed, threads, cfg.output.format)
    except NumericalError:
        raise
    except RuntimeError as exc:
        raise NumericalError(cfg.experiment.name, "run", str(exc)) from exc
    wall = time.perf_counter() - t0
    manifest = {
        "config": cfg.model_dump(mode="json"),
        "config_hash": config_hash(cfg),
        "tool_version": __version__,
        "experiment": cfg.experiment.name,
        "outputs": sorted(files),
        "summary": summary,
        "wall_time_s": wall,
    }
    return files, manifest


def compare_runs(text_a, text_b, label_a="a", label_b="b"):
    """Compare two serialized SNR curves; numerical mismatches raise NumericalError."""
    try:
        curve_a = snr_curve_from_csv(text_a, label=label_a)
        curve_b = snr_curve_from_csv(text_b, label=label_b)
        result = compare_curves(curve_a, curve_b)
    except ValueError as exc:
        raise NumericalError("demod", "compare_curves", str(exc)) from exc
    lines = [f"comparing {label_a} vs {label_b} over {len(result['tau'])} points"]
    lines.append(f"final ratio {label_a}/{label_b}: {result['ratio_final']:.6g}")
    lines.append(f"ratio range: [{result['ratio_min']:.6g}, {result['ratio_max']:.6g}]")
    if result["crossovers"]:
        lines.append(
            "crossover tau_s: " + ", ".join(f"{t:.6g}" for t in result["crossovers"])
        )
    else:
        lines.append("no crossover: one curve dominates over the whole grid")
    if result["a_dominates_initially"]:
        lines.append(f"{label_a} dominates at short integration times")
    return {
        "tau_s": result["tau"].tolist(),
        "ratio": [None if not np.isfinite(r) else float(r) for r in result["ratio"]],
        "crossover_tau_s": result["crossovers"],
        "ratio_final": result["ratio_final"],
        "ratio_max": result["ratio_max"],
        "ratio_min": result["ratio_min"],
        "report": "\n".join(lines),
    }

import math
import warnings

import numpy as np
import pytest

from cdreadout.cavity import constant_zeta, evolve_combined, trajectory_from_closed_form
from cdreadout.demod import optimal_envelope, snr_numeric
from cdreadout.dephasing import (
    SpectatorConfig,
    extract_efficiency,
    gamma_m_longitudinal,
    measurement_dephasing,
    residual_map_to_csv,
    spectator_dephasing,
    tune_cancellation,
)
from cdreadout.system import TWO_PI

KAPPA = 1e7
ZETA = TWO_PI * 1.28e6
WINDOW = 870e-9


def test_dephasing_snr_identity():
    """Measurement back-action equals a quarter of the ideal SNR squared."""
    rng = np.random.default_rng(1)
    for _ in range(5):
        kap = 10 ** rng.uniform(6.5, 7.5)
        dur = rng.uniform(3, 25) / kap
        dt = dur / int(rng.integers(800, 1500))
        eps = TWO_PI * rng.uniform(0.3e6, 2e6)
        zeta_rate = TWO_PI * rng.uniform(0.3e6, 2e6)
        chi = kap * rng.uniform(0.3, 1.5)
        traj = evolve_combined(eps, constant_zeta(zeta_rate, dur, dt), chi, kap, dt)
        res = measurement_dephasing(traj)
        snr = snr_numeric(traj, optimal_envelope(traj)).snr[-1]
        assert abs(snr ** 2 - 4 * res.gamma_m) / (4 * res.gamma_m) < 1e-9


def test_longitudinal_gamma_closed_form():
    """The displacement-readout dephasing integral has an exact expression."""
    traj = trajectory_from_closed_form("longitudinal", KAPPA, WINDOW, 0.5e-9, zeta=ZETA)
    res = measurement_dephasing(traj)
    closed = gamma_m_longitudinal(ZETA, KAPPA, WINDOW)
    assert abs(res.gamma_m - closed) / closed < 1e-9
    assert res.coherence_factor == pytest.approx(math.exp(-closed), rel=1e-9)


def test_efficiency_inference_from_reference_snr():
    """Supplying a finite-efficiency SNR recovers that efficiency."""
    traj = trajectory_from_closed_form("longitudinal", KAPPA, WINDOW, 1e-9, zeta=ZETA)
    res = measurement_dephasing(traj, eta=0.36)
    assert abs(res.eta_inferred - 0.36) < 1e-9


def test_efficiency_closed_loop():
    """Synthetic calibration data returns the efficiency it was built with."""
    rng = np.random.default_rng(1)
    amps = np.linspace(0.2, 2.0, 10)
    zeta_unit = TWO_PI * 0.32e6
    from cdreadout.demod import snr_longitudinal_optimal

    for eta_true in (0.3, 0.6, 1.0):
        snr_rows, ram_rows = [], []
        for a in amps:
            snr = a * snr_longitudinal_optimal(zeta_unit, KAPPA, np.array([WINDOW]), eta=eta_true)[0]
            gamma = gamma_m_longitudinal(a * zeta_unit, KAPPA, WINDOW)
            snr_rows.append((a, snr * (1 + 0.005 * rng.standard_normal())))
            ram_rows.append((a, math.exp(-gamma) * (1 + 0.005 * rng.standard_normal())))
        fit = extract_efficiency(ram_rows, snr_rows)
        assert abs(fit.eta - eta_true) < 0.02
        assert fit.r_squared > 0.99


def test_efficiency_fit_guards():
    """Short, non-decaying, or non-physical inputs are rejected."""
    amps = [0.5, 1.0, 1.5, 2.0, 2.5]
    good_snr = [(a, 2.0 * a) for a in amps]
    with pytest.raises(ValueError):
        extract_efficiency([(1.0, 0.5)], good_snr)
    with pytest.raises(ValueError):
        extract_efficiency([(a, 1.2) for a in amps], good_snr)
    with pytest.raises(ValueError):
        extract_efficiency([(a, math.exp(+0.3 * a ** 2)) for a in amps], good_snr)
    rising = [(a, math.exp(-0.3 * a ** 2)) for a in amps]
    noisy_snr = [(a, 2.0 * a * (1 + 0.8 * math.sin(9 * a))) for a in amps]
    with pytest.raises(ValueError):
        extract_efficiency(rising, noisy_snr)


def spectator_traj():
    """Design-point window used by the spectator tests."""
    return trajectory_from_closed_form("longitudinal", KAPPA, WINDOW, 1e-9, zeta=ZETA)


def test_spectator_mc_matches_analytic():
    """Monte Carlo contrast agrees with the Gaussian propagator at every echo order."""
    traj = spectator_traj()
    for n_echo in (0, 2, 4):
        cfg = SpectatorConfig(
            chi_spectator=TWO_PI * 0.1e6, n_echo=n_echo, sequence_length=1.2e-6,
            traj=traj, n_paths=20_000, seed=5,
        )
        mc = spectator_dephasing(cfg, method="mc")
        an = spectator_dephasing(cfg, method="analytic")
        assert mc.stderr < 0.005
        assert abs(mc.contrast_ratio - an.contrast_ratio_analytic) < 4 * mc.stderr + 1e-4


def test_spectator_echo_order_recovers_contrast():
    """More echo pulses monotonically recover spectator coherence."""
    traj = spectator_traj()
    ratios = []
    for n_echo in (0, 1, 2, 3, 4, 6):
        cfg = SpectatorConfig(
            chi_spectator=TWO_PI * 0.1e6, n_echo=n_echo, sequence_length=1.2e-6,
            traj=traj, n_paths=2000, seed=3,
        )
        ratios.append(spectator_dephasing(cfg, method="analytic").contrast_ratio_analytic)
    assert all(b > a - 1e-6 for a, b in zip(ratios, ratios[1:]))
    assert ratios[0] > 0.9
    assert ratios[3] >= 0.99


def test_spectator_measurement_off():
    """With the readout drive off the sequence adds no dephasing."""
    cfg = SpectatorConfig(
        chi_spectator=TWO_PI * 0.1e6, n_echo=1, sequence_length=1.2e-6,
        traj=spectator_traj(), measurement_on=False, n_paths=100, seed=0,
    )
    res = spectator_dephasing(cfg)
    assert res.contrast_ratio == 1.0


def test_spectator_static_phase_cancels_under_echo():
    """Odd echo orders null the deterministic phase accumulated from the mean field."""
    traj = spectator_traj()
    cfg0 = SpectatorConfig(
        chi_spectator=TWO_PI * 0.1e6, n_echo=0, sequence_length=1.2e-6,
        traj=traj, n_paths=100, seed=0,
    )
    cfg1 = SpectatorConfig(
        chi_spectator=TWO_PI * 0.1e6, n_echo=1, sequence_length=1.2e-6,
        traj=traj, n_paths=100, seed=0,
    )
    phi0 = abs(spectator_dephasing(cfg0, method="analytic").phi_static)
    phi1 = abs(spectator_dephasing(cfg1, method="analytic").phi_static)
    assert phi1 < phi0


def test_cancellation_unit_leakage():
    """Unit leakage is nulled at matched amplitude and opposite phase."""
    amps = np.linspace(0.0, 2.0, 81)
    phases = np.arange(64) * 2 * math.pi / 64
    res = tune_cancellation(1.0 + 0j, amps, phases)
    assert res.best_amp == pytest.approx(1.0)
    assert res.best_phase == pytest.approx(math.pi)
    i = int(np.argmin(np.abs(res.amps - res.best_amp)))
    j = int(np.argmin(np.abs(res.phases - res.best_phase)))
    assert res.residual_map[i, j] < 1e-10
    assert res.response_scale > 0


def test_cancellation_complex_leakage():
    """A rotated leakage moves the optimal phase accordingly."""
    amps = np.linspace(0.0, 2.0, 81)
    phases = np.arange(128) * 2 * math.pi / 128
    leak = 0.5 * np.exp(1j * 0.75)
    res = tune_cancellation(leak, amps, phases)
    assert res.best_amp == pytest.approx(0.5)
    target = (0.75 + math.pi) % (2 * math.pi)
    assert res.best_phase == pytest.approx(target, abs=2 * math.pi / 128)


def test_cancellation_zero_leakage_silent():
    """Nothing to cancel puts the optimum at zero amplitude without warnings."""
    amps = np.linspace(0.0, 1.0, 21)
    phases = np.arange(16) * 2 * math.pi / 16
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = tune_cancellation(0.0 + 0j, amps, phases)
    assert res.best_amp == 0.0


def test_cancellation_boundary_warning():
    """An optimum pinned to the amplitude edge is flagged."""
    amps = np.linspace(0.0, 2.0, 41)
    phases = np.arange(32) * 2 * math.pi / 32
    with pytest.warns(UserWarning):
        tune_cancellation(3.0 + 0j, amps, phases)


def test_residual_map_csv():
    """The residual map serializes one row per grid point."""
    amps = np.linspace(0.0, 1.0, 5)
    phases = np.arange(4) * 2 * math.pi / 4
    res = tune_cancellation(0.5 + 0j, amps, phases)
    text = residual_map_to_csv(res)
    lines = text.strip().splitlines()
    assert lines[0] == "amp,phase,residual"
    assert len(lines) == 1 + 5 * 4

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdreadout.system import (
    TWO_PI,
    DerivedCouplings,
    SystemParams,
    derive_couplings,
    fit_participations,
    system_from_couplings,
    zeta_prefactor,
)

EJ = TWO_PI * 25e9
ALPHA = TWO_PI * 221e6
CHI_QC = TWO_PI * 0.1e6
CHI_QF = TWO_PI * 2.5e6


def reference_system():
    """Build the reference operating point used throughout the suite."""
    with pytest.warns(UserWarning):
        return system_from_couplings(
            alpha_hz=221e6, chi_qc_hz=0.1e6, chi_qf_hz=2.5e6, kappa_hz=1591549.4309189535
        )


def test_roundtrip_couplings():
    """fit_participations then derive_couplings reproduces the targets to 1e-12."""
    phi_q, phi_c, phi_f = fit_participations(ALPHA, CHI_QC, CHI_QF, EJ)
    params = reference_system()
    derived = derive_couplings(params)
    assert abs(derived.alpha - ALPHA) / ALPHA < 1e-12
    assert abs(derived.chi_qc - CHI_QC) / CHI_QC < 1e-12
    assert abs(derived.chi_qf - CHI_QF) / CHI_QF < 1e-12
    assert abs(params.phi_q - phi_q) < 1e-15


def test_participation_values():
    """Fitted participations match the analytic inversion."""
    phi_q, phi_c, phi_f = fit_participations(ALPHA, CHI_QC, CHI_QF, EJ)
    assert abs(phi_q - (2 * ALPHA / EJ) ** 0.25) < 1e-15
    assert abs(phi_c - math.sqrt(CHI_QC / EJ) / phi_q) < 1e-15
    assert abs(phi_f - math.sqrt(CHI_QF / EJ) / phi_q) < 1e-15
    assert abs(phi_q - 0.36464525) < 1e-7


def test_purcell_limit():
    """Filter decay time times alpha/chi_qf gives the protection limit."""
    params = reference_system()
    derived = derive_couplings(params)
    expected = 19e-6 * 221.0 / 2.5
    assert abs(derived.purcell_limit - expected) / expected < 1e-12
    assert derived.purcell_limit > 1e-3


def test_vanishing_participation():
    """phi_q -> 0 kills every nonlinear coupling."""
    params = SystemParams(
        e_j=EJ,
        phi_q=1e-9,
        phi_c=0.005,
        phi_f=0.027,
        omega_q=TWO_PI * 4.982e9,
        omega_c=TWO_PI * 7.995e9,
        omega_f=TWO_PI * 6.339e9,
        kappa=1e7,
        kappa_filter_decay=1.0 / 19e-6,
    )
    derived = derive_couplings(params)
    assert derived.alpha < 1e-20 * EJ
    assert derived.chi_qc < 1e-10 * EJ
    assert derived.chi_qf < 1e-10 * EJ


def test_degenerate_participation_warns():
    """alpha == e_j/2 puts phi_q at unity, which is flagged."""
    with pytest.warns(UserWarning):
        phi_q, _, _ = fit_participations(EJ / 2, CHI_QC, CHI_QF, EJ)
    assert abs(phi_q - 1.0) < 1e-12


def test_ej_scaling():
    """Doubling the Josephson energy scales phi_q by 2^(-1/4)."""
    phi_1, _, _ = fit_participations(ALPHA, CHI_QC, CHI_QF, EJ)
    phi_2, _, _ = fit_participations(ALPHA, CHI_QC, CHI_QF, 2 * EJ)
    assert abs(phi_2 / phi_1 - 2 ** -0.25) < 1e-12


@settings(max_examples=30, deadline=None)
@given(
    alpha_hz=st.floats(1e6, 1e9),
    chi_qc_hz=st.floats(1e3, 1e6),
    chi_qf_hz=st.floats(1e4, 1e7),
    e_j_hz=st.floats(5e9, 100e9),
)
def test_roundtrip_property(alpha_hz, chi_qc_hz, chi_qf_hz, e_j_hz):
    """Round-trip inversion holds across the physical parameter range."""
    alpha, chi_qc, chi_qf = TWO_PI * alpha_hz, TWO_PI * chi_qc_hz, TWO_PI * chi_qf_hz
    e_j = TWO_PI * e_j_hz
    if alpha >= e_j / 2:
        return
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        phi_q, phi_c, phi_f = fit_participations(alpha, chi_qc, chi_qf, e_j)
    assert abs(e_j * phi_q ** 4 / 2 - alpha) / alpha < 1e-12
    assert abs(e_j * phi_q ** 2 * phi_c ** 2 - chi_qc) / chi_qc < 1e-12
    assert abs(e_j * phi_q ** 2 * phi_f ** 2 - chi_qf) / chi_qf < 1e-12


def test_zeta_prefactor_identity():
    """sqrt(2*alpha*chi_qc) equals e_j*phi_q^3*phi_c for any valid system."""
    params = reference_system()
    derived = derive_couplings(params)
    pref = zeta_prefactor(params)
    expected = math.sqrt(2 * derived.alpha * derived.chi_qc)
    direct = params.e_j * params.phi_q ** 3 * params.phi_c
    assert abs(pref - expected) / expected < 1e-12
    assert abs(pref - direct) / direct < 1e-12
    assert abs(pref - 4.1772554e7) / 4.1772554e7 < 1e-7


def test_zeta_prefactor_filtered():
    """With the filter route the prefactor becomes sqrt(chi_qf*chi_qc)."""
    params = reference_system()
    derived = derive_couplings(params)
    pref = zeta_prefactor(params, use_filter=True)
    expected = math.sqrt(derived.chi_qf * derived.chi_qc)
    assert abs(pref - expected) / expected < 1e-12


def test_validation_names_field():
    """Invalid entries raise errors that name the offending field."""
    with pytest.raises(ValueError, match="kappa"):
        system_from_couplings(
            alpha_hz=221e6, chi_qc_hz=0.1e6, chi_qf_hz=2.5e6, kappa_hz=-1.0
        )
    with pytest.raises(ValueError, match="eta"):
        system_from_couplings(
            alpha_hz=221e6, chi_qc_hz=0.1e6, chi_qf_hz=2.5e6,
            kappa_hz=1.59e6, eta=1.5,
        )
    with pytest.raises(ValueError, match="e_j"):
        fit_participations(ALPHA, CHI_QC, CHI_QF, 0.0)


def test_degenerate_frequencies_rejected():
    """Cavity frequency must differ from both qubit and filter."""
    with pytest.raises(ValueError, match="omega"):
        system_from_couplings(
            alpha_hz=221e6, chi_qc_hz=0.1e6, chi_qf_hz=2.5e6, kappa_hz=1.59e6,
            omega_q_hz=7.995e9, omega_c_hz=7.995e9,
        )


def test_participation_hard_limit():
    """phi_q at or beyond 0.5 is outside quartic validity and rejected."""
    with pytest.raises(ValueError, match="phi_q"):
        SystemParams(
            e_j=EJ,
            phi_q=0.6,
            phi_c=0.005,
            phi_f=0.027,
            omega_q=TWO_PI * 4.982e9,
            omega_c=TWO_PI * 7.995e9,
            omega_f=TWO_PI * 6.339e9,
            kappa=1e7,
            kappa_filter_decay=1.0 / 19e-6,
        )


def test_rates_stored():
    """Decay and dephasing times convert to rates on the parameter object."""
    params = reference_system()
    assert abs(params.gamma1 - 1.0 / 90e-6) / (1.0 / 90e-6) < 1e-12
    assert abs(params.gamma_phi - 1.0 / 120e-6) / (1.0 / 120e-6) < 1e-12
    assert abs(params.kappa_filter_decay - 1.0 / 19e-6) / (1.0 / 19e-6) < 1e-12
    assert isinstance(derive_couplings(params), DerivedCouplings)

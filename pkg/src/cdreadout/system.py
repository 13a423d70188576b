"""Device parameters and the Josephson-potential couplings derived from them."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi

PHI_WARN = 0.2   # fourth-order expansion gets marginal past this participation
PHI_MAX = 0.5    # hard validity limit for the quartic treatment


def _require_positive(name, value, allow_zero=False):
    if value < 0 or (value == 0 and not allow_zero):
        kind = "nonnegative" if allow_zero else "positive"
        raise ValueError(f"{name} must be {kind}, got {value!r}")


@dataclass(frozen=True)
class SystemParams:
    """Mode frequencies, decay rates and zero-point phase participations (rad/s units)."""

    e_j: float                  # Josephson energy over hbar
    phi_q: float                # qubit zero-point phase across the junction
    phi_c: float                # readout-cavity participation
    phi_f: float                # filter-mode participation
    omega_q: float              # qubit frequency
    omega_c: float              # readout-cavity frequency
    omega_f: float              # filter-mode frequency
    kappa: float                # readout-cavity energy decay rate
    kappa_filter_decay: float   # filter-mode energy decay rate
    gamma1: float = 0.0         # qubit energy relaxation rate (1/T1)
    gamma_phi: float = 0.0      # qubit pure dephasing rate
    eta: float = 1.0            # measurement efficiency

    def __post_init__(self):
        _require_positive("e_j", self.e_j)
        _require_positive("kappa", self.kappa)
        _require_positive("kappa_filter_decay", self.kappa_filter_decay)
        _require_positive("gamma1", self.gamma1, allow_zero=True)
        _require_positive("gamma_phi", self.gamma_phi, allow_zero=True)
        for name in ("omega_q", "omega_c", "omega_f"):
            _require_positive(name, getattr(self, name))
        for name in ("phi_q", "phi_c", "phi_f"):
            phi = getattr(self, name)
            if phi < 0:
                raise ValueError(f"{name} must be nonnegative, got {phi!r}")
            if phi >= PHI_MAX:
                raise ValueError(
                    f"{name}={phi!r} is outside the quartic-expansion validity range "
                    f"(must be < {PHI_MAX})"
                )
            if phi > PHI_WARN:
                warnings.warn(
                    f"{name}={phi:.3g} exceeds {PHI_WARN}; quartic expansion is marginal",
                    stacklevel=3,
                )
        if not (0.0 < self.eta <= 1.0):
            raise ValueError(f"eta must be in (0, 1], got {self.eta!r}")
        if self.omega_c == self.omega_q:
            raise ValueError("omega_c equals omega_q: cavity-qubit detuning must be nonzero")
        if self.omega_c == self.omega_f:
            raise ValueError("omega_c equals omega_f: cavity-filter detuning must be nonzero")


@dataclass(frozen=True)
class DerivedCouplings:
    """Quartic-expansion couplings and the filtered relaxation bound."""

    alpha: float            # qubit anharmonicity (rad/s)
    chi_qc: float           # qubit-cavity cross-Kerr (rad/s)
    chi_qf: float           # qubit-filter cross-Kerr (rad/s)
    purcell_limit: float    # decay-time lower bound set by the filter (s)


def derive_couplings(params):
    """Expand the junction cosine to fourth order and collect the cross-mode terms."""
    alpha = 0.5 * params.e_j * params.phi_q**4
    chi_qc = params.e_j * params.phi_q**2 * params.phi_c**2
    chi_qf = params.e_j * params.phi_q**2 * params.phi_f**2
    if chi_qf > 0:
        purcell = (1.0 / params.kappa_filter_decay) * (alpha / chi_qf)
    else:
        purcell = math.inf
    return DerivedCouplings(alpha=alpha, chi_qc=chi_qc, chi_qf=chi_qf, purcell_limit=purcell)


def fit_participations(alpha_target, chi_qc_target, chi_qf_target, e_j):
    """Invert the quartic couplings for the participations that produce them."""
    _require_positive("e_j", e_j)
    _require_positive("alpha_target", alpha_target)
    _require_positive("chi_qc_target", chi_qc_target, allow_zero=True)
    _require_positive("chi_qf_target", chi_qf_target, allow_zero=True)
    phi_q = (2.0 * alpha_target / e_j) ** 0.25
    if phi_q >= 1.0:
        warnings.warn(
            f"fitted phi_q={phi_q:.3g} >= 1: target anharmonicity is degenerate with e_j",
            stacklevel=2,
        )
    elif phi_q > PHI_WARN:
        warnings.warn(
            f"fitted phi_q={phi_q:.3g} exceeds {PHI_WARN}; quartic expansion is marginal",
            stacklevel=2,
        )
    phi_c = math.sqrt(chi_qc_target / e_j) / phi_q
    phi_f = math.sqrt(chi_qf_target / e_j) / phi_q
    return phi_q, phi_c, phi_f


def zeta_prefactor(params, use_filter=False):
    """Rate scale converting a displaced-frame amplitude into a conditional drive."""
    d = derive_couplings(params)
    if use_filter:
        return math.sqrt(d.chi_qf * d.chi_qc)
    return math.sqrt(2.0 * d.alpha * d.chi_qc)


def system_from_couplings(
    alpha_hz,
    chi_qc_hz,
    chi_qf_hz,
    kappa_hz,
    eta=1.0,
    e_j_hz=25e9,
    omega_q_hz=4.982e9,
    omega_c_hz=7.995e9,
    omega_f_hz=6.339e9,
    t1_s=90e-6,
    t_phi_s=120e-6,
    t_f_s=19e-6,
):
    """Build SystemParams from measured couplings (Hz) by fitting participations."""
    e_j = TWO_PI * e_j_hz
    phi_q, phi_c, phi_f = fit_participations(
        TWO_PI * alpha_hz, TWO_PI * chi_qc_hz, TWO_PI * chi_qf_hz, e_j
    )
    return SystemParams(
        e_j=e_j,
        phi_q=phi_q,
        phi_c=phi_c,
        phi_f=phi_f,
        omega_q=TWO_PI * omega_q_hz,
        omega_c=TWO_PI * omega_c_hz,
        omega_f=TWO_PI * omega_f_hz,
        kappa=TWO_PI * kappa_hz,
        kappa_filter_decay=1.0 / t_f_s,
        gamma1=1.0 / t1_s,
        gamma_phi=1.0 / t_phi_s,
        eta=eta,
    )

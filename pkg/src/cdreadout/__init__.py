"""Simulation and metrology toolkit for conditional-displacement qubit readout."""

__version__ = "0.1.0"

from .system import (  # noqa: E402,F401
    DerivedCouplings,
    SystemParams,
    derive_couplings,
    fit_participations,
    system_from_couplings,
    zeta_prefactor,
)

"""Request and response models for the readout service."""

from __future__ import annotations

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel


class HealthResponse(BaseModel):
    status: str
    version: str


class DeriveRequest(BaseModel):
    system: dict


class DeriveResponse(BaseModel):
    alpha_hz: float
    chi_qc_hz: float
    chi_qf_hz: float
    purcell_limit_s: float
    phi_q: float
    phi_c: float
    phi_f: float
    zeta_prefactor_hz: float


class SnrAnalyticRequest(BaseModel):
    family: str
    kappa_hz: float
    zeta_hz: float = 1.28e6
    eps_hz: Optional[float] = None
    chi_hz: Optional[float] = None
    eta: float = 1.0
    tau_max_s: float = 2e-6
    n_tau: int = 400


class SnrAnalyticResponse(BaseModel):
    family: str
    tau_s: List[float]
    snr: List[float]


class RunRequest(BaseModel):
    config: dict
    seed: Optional[int] = None
    threads: int = 1
    format: Optional[Literal["csv", "json"]] = None


class RunResponse(BaseModel):
    files: Dict[str, str]
    manifest: dict


class CompareRequest(BaseModel):
    csv_a: str
    csv_b: str
    label_a: str = "a"
    label_b: str = "b"


class CompareResponse(BaseModel):
    tau_s: List[float]
    ratio: List[Optional[float]]
    crossover_tau_s: List[float]
    ratio_final: float
    ratio_max: float
    ratio_min: float
    report: str

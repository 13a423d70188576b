"""Run-configuration models shared by the CLI and the service."""

from __future__ import annotations

import hashlib
import json
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict

from .system import system_from_couplings


class SystemConfig(BaseModel):
    """Measured device numbers, all frequencies in Hz and times in seconds."""

    model_config = ConfigDict(extra="forbid")

    kappa_hz: float
    alpha_hz: float = 221e6
    chi_qc_hz: float = 0.1e6
    chi_qf_hz: float = 2.5e6
    eta: float = 1.0
    e_j_hz: float = 25e9
    omega_q_hz: float = 4.982e9
    omega_c_hz: float = 7.995e9
    omega_f_hz: float = 6.339e9
    t1_s: float = 90e-6
    t_phi_s: float = 120e-6
    t_f_s: float = 19e-6

    def to_params(self):
        return system_from_couplings(
            alpha_hz=self.alpha_hz,
            chi_qc_hz=self.chi_qc_hz,
            chi_qf_hz=self.chi_qf_hz,
            kappa_hz=self.kappa_hz,
            eta=self.eta,
            e_j_hz=self.e_j_hz,
            omega_q_hz=self.omega_q_hz,
            omega_c_hz=self.omega_c_hz,
            omega_f_hz=self.omega_f_hz,
            t1_s=self.t1_s,
            t_phi_s=self.t_phi_s,
            t_f_s=self.t_f_s,
        )


class ExperimentBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    params: dict = {}


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: str = "out"
    format: Literal["csv", "json"] = "csv"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    system: SystemConfig
    experiment: ExperimentBlock
    output: OutputConfig = OutputConfig()
    seed: int = 0


def parse_config(data, seed=None, fmt=None):
    """Validate a raw config dict (or a manifest embedding one) into a RunConfig."""
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    if "config" in data and "config_hash" in data:
        data = data["config"]   # accept a manifest for exact re-runs
    cfg = RunConfig.model_validate(data)
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    if fmt is not None:
        cfg = cfg.model_copy(update={"output": cfg.output.model_copy(update={"format": fmt})})
    return cfg


def config_hash(cfg):
    """Stable hash of the fully resolved configuration."""
    canon = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()

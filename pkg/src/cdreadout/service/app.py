"""FastAPI application wrapping the readout toolkit."""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import ValidationError

from .. import __version__
from ..config import SystemConfig, parse_config
from ..demod import (
    snr_dispersive_boxcar,
    snr_dispersive_optimal,
    snr_longitudinal_boxcar,
    snr_longitudinal_optimal,
)
from ..experiments import SNR_FAMILIES, NumericalError, compare_runs, run_experiment
from ..system import TWO_PI, derive_couplings, zeta_prefactor
from .schemas import (
    CompareRequest,
    CompareResponse,
    DeriveRequest,
    DeriveResponse,
    HealthResponse,
    RunRequest,
    RunResponse,
    SnrAnalyticRequest,
    SnrAnalyticResponse,
)


def create_app():
    app = FastAPI(title="cdreadout service", version=__version__)

    @app.get(path="/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post(path="/system/derive", response_model=DeriveResponse)
    def derive(req: DeriveRequest):
        try:
            cfg = SystemConfig.model_validate(req.system)
            params = cfg.to_params()
        except (ValidationError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        d = derive_couplings(params)
        return DeriveResponse(
            alpha_hz=d.alpha / TWO_PI,
            chi_qc_hz=d.chi_qc / TWO_PI,
            chi_qf_hz=d.chi_qf / TWO_PI,
            purcell_limit_s=d.purcell_limit,
            phi_q=params.phi_q,
            phi_c=params.phi_c,
            phi_f=params.phi_f,
            zeta_prefactor_hz=zeta_prefactor(params) / TWO_PI,
        )

    @app.post(path="/snr/analytic", response_model=SnrAnalyticResponse)
    def snr_analytic(req: SnrAnalyticRequest):
        if req.family not in SNR_FAMILIES:
            raise HTTPException(
                status_code=422,
                detail=f"family must be one of {sorted(SNR_FAMILIES)}, got {req.family!r}",
            )
        kappa = TWO_PI * req.kappa_hz
        zeta = TWO_PI * req.zeta_hz
        chi = TWO_PI * req.chi_hz if req.chi_hz is not None else kappa
        eps = (
            TWO_PI * req.eps_hz
            if req.eps_hz is not None
            else zeta * (kappa**2 + chi**2) / (2 * chi * kappa)
        )
        tau = np.linspace(0.0, req.tau_max_s, req.n_tau + 1)
        try:
            if req.family == "longitudinal-boxcar":
                snr = snr_longitudinal_boxcar(zeta, kappa, tau, eta=req.eta)
            elif req.family == "longitudinal-optimal":
                snr = snr_longitudinal_optimal(zeta, kappa, tau, eta=req.eta)
            elif req.family == "dispersive-boxcar":
                snr = snr_dispersive_boxcar(eps, chi, kappa, tau, eta=req.eta)
            else:
                snr = snr_dispersive_optimal(eps, chi, kappa, tau, eta=req.eta)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return SnrAnalyticResponse(family=req.family, tau_s=tau.tolist(), snr=snr.tolist())

    @app.post(path="/experiments/run", response_model=RunResponse)
    def run(req: RunRequest):
        try:
            cfg = parse_config(req.config, seed=req.seed, fmt=req.format)
        except (ValidationError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        try:
            files, manifest = run_experiment(cfg, threads=req.threads)
        except NumericalError as exc:
            raise HTTPException(
                status_code=500,
                detail={
                    "module": exc.module,
                    "operation": exc.operation,
                    "message": exc.message,
                },
            )
        except (ValidationError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return RunResponse(files=files, manifest=manifest)

    @app.post(path="/compare", response_model=CompareResponse)
    def compare(req: CompareRequest):
        try:
            result = compare_runs(req.csv_a, req.csv_b, req.label_a, req.label_b)
        except NumericalError as exc:
            raise HTTPException(
                status_code=500,
                detail={
                    "module": exc.module,
                    "operation": exc.operation,
                    "message": exc.message,
                },
            )
        return CompareResponse(
            tau_s=result["tau_s"],
            ratio=result["ratio"],
            crossover_tau_s=result["crossover_tau_s"],
            ratio_final=result["ratio_final"],
            ratio_max=result["ratio_max"],
            ratio_min=result["ratio_min"],
            report=result["report"],
        )

    return app


app = create_app()

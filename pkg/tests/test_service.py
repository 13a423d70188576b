import asyncio
import math

import httpx
import pytest
from httpx import ASGITransport

from cdreadout.service.app import create_app


def call(method, path, payload=None):
    """Drive the service in-process through its ASGI interface."""

    async def _go():
        transport = ASGITransport(app=create_app())
        async with httpx.AsyncClient(transport=transport, base_url="http://test") as client:
            if method == "get":
                return await client.get(path)
            return await client.post(path, json=payload)

    return asyncio.run(_go())


def test_health():
    """The service reports its version."""
    resp = call("get", "/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["version"]


def test_derive_endpoint():
    """System derivation returns the design-point couplings."""
    resp = call("post", "/system/derive", {"system": {"kappa_hz": 1591549.4309189535}})
    assert resp.status_code == 200
    body = resp.json()
    assert body["alpha_hz"] == pytest.approx(221e6, rel=1e-9)
    assert body["chi_qc_hz"] == pytest.approx(0.1e6, rel=1e-9)
    assert body["chi_qf_hz"] == pytest.approx(2.5e6, rel=1e-9)
    assert body["purcell_limit_s"] == pytest.approx(19e-6 * 221 / 2.5, rel=1e-9)
    assert body["phi_q"] == pytest.approx(0.36464514, rel=1e-6)
    assert body["zeta_prefactor_hz"] == pytest.approx(6648308.055, rel=1e-6)


def test_derive_validation_error():
    """Invalid system parameters surface as 422 with the field named."""
    resp = call("post", "/system/derive", {"system": {"kappa_hz": -1.0}})
    assert resp.status_code == 422
    assert "kappa" in str(resp.json()["detail"])


def test_snr_analytic_endpoint():
    """Closed-form SNR evaluation matches the frozen design value."""
    resp = call(
        "post", "/snr/analytic",
        {"family": "longitudinal-optimal", "kappa_hz": 1591549.4309189535,
         "zeta_hz": 1.28e6, "eta": 0.6, "tau_max_s": 870e-9, "n_tau": 1},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["snr"][-1] == pytest.approx(4.225708486586451, rel=1e-9)
    assert body["tau_s"][-1] == pytest.approx(870e-9)


def test_snr_unknown_family():
    """Unknown SNR families are rejected."""
    resp = call(
        "post", "/snr/analytic",
        {"family": "sideways", "kappa_hz": 1.59e6, "zeta_hz": 1.0},
    )
    assert resp.status_code == 422


def test_run_endpoint():
    """Experiments run over HTTP and return files plus a manifest."""
    payload = {
        "config": {
            "system": {"kappa_hz": 1591549.4309189535, "eta": 0.6},
            "experiment": {
                "name": "snr-sweep",
                "params": {"families": ["longitudinal-boxcar"], "n_tau": 10},
            },
            "output": {"dir": "remote"},
        },
        "seed": 3,
    }
    resp = call("post", "/experiments/run", payload)
    assert resp.status_code == 200
    body = resp.json()
    assert "snr_longitudinal-boxcar.csv" in body["files"]
    assert body["manifest"]["experiment"] == "snr-sweep"
    assert body["manifest"]["config_hash"]
    assert body["manifest"]["outputs"] == sorted(body["files"])


def test_run_config_error():
    """Bad configs come back as 422, not 500."""
    payload = {
        "config": {"system": {"kappa_hz": -1.0},
                   "experiment": {"name": "snr-sweep", "params": {}},
                   "output": {"dir": "x"}}
    }
    resp = call("post", "/experiments/run", payload)
    assert resp.status_code == 422
    assert "kappa" in str(resp.json()["detail"])


def test_run_numerical_failure():
    """Runtime numerical failures map to 500 with module context."""
    payload = {
        "config": {
            "system": {"kappa_hz": 1591549.4309189535, "eta": 0.6},
            "experiment": {"name": "efficiency-calib", "params": {"noise_rel": 0.9}},
            "output": {"dir": "x"},
            "seed": 2,
        }
    }
    resp = call("post", "/experiments/run", payload)
    assert resp.status_code == 500
    detail = resp.json()["detail"]
    assert detail["module"] == "dephasing"
    assert detail["operation"] == "extract_efficiency"


def test_compare_endpoint():
    """Curve comparison runs over HTTP on shared grids."""
    csv = "tau_s,snr\n1e-9,0.0\n2e-9,1.0\n3e-9,2.0\n"
    csv_b = "tau_s,snr\n1e-9,0.0\n2e-9,2.0\n3e-9,1.0\n"
    resp = call(
        "post", "/compare",
        {"csv_a": csv, "csv_b": csv_b, "label_a": "a", "label_b": "b"},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["crossover_tau_s"]
    assert 2e-9 < body["crossover_tau_s"][0] < 3e-9


def test_compare_grid_mismatch():
    """Comparing curves on different grids is a numerical failure."""
    csv = "tau_s,snr\n1e-9,1.0\n2e-9,2.0\n"
    csv_b = "tau_s,snr\n1e-9,1.0\n2e-9,2.0\n3e-9,3.0\n"
    resp = call("post", "/compare", {"csv_a": csv, "csv_b": csv_b})
    assert resp.status_code == 500
    assert resp.json()["detail"]["module"] == "demod"

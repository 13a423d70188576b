"""Command-line client for the readout service (in-process by default)."""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

import httpx

from . import __version__
from .service.app import create_app


def _request(path, payload, server):
    """POST to a remote server, or to the in-process application."""
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.post(path, json=payload)

    async def go():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://service.local", timeout=600.0
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _fail_from_response(resp):
    """Map an error response onto the exit-code contract (1 config, 2 numerical)."""
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    if resp.status_code in (400, 422):
        print(f"config error: {detail}", file=sys.stderr)
        return 1
    if isinstance(detail, dict):
        module = detail.get("module", "?")
        operation = detail.get("operation", "?")
        message = detail.get("message", "")
        print(f"numerical failure in {module}.{operation}: {message}", file=sys.stderr)
    else:
        print(f"numerical failure: {detail}", file=sys.stderr)
    return 2


def _cmd_run(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"config error: {args.config} is not valid JSON: {exc}", file=sys.stderr)
        return 1
    payload = {
        "config": data,
        "seed": args.seed,
        "threads": args.threads,
        "format": args.format,
    }
    try:
        resp = _request("/experiments/run", payload, args.server)
    except httpx.HTTPError as exc:
        print(f"numerical failure: cannot reach server: {exc}", file=sys.stderr)
        return 2
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    manifest = body["manifest"]
    out_dir = args.out or manifest["config"]["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    for name in sorted(body["files"]):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(body["files"][name])
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"{manifest['experiment']}: wrote {len(body['files'])} files to {out_dir}")
    for key in sorted(manifest.get("summary", {})):
        print(f"  {key}: {manifest['summary'][key]}")
    return 0


def _find_curve(run_dir, override):
    if override:
        path = os.path.join(run_dir, override)
        if not os.path.exists(path):
            raise FileNotFoundError(f"{override} not found in {run_dir}")
        return override
    names = sorted(
        f for f in os.listdir(run_dir) if f.startswith("snr") and f.endswith(".csv")
    )
    if not names:
        raise FileNotFoundError(f"no snr*.csv files in {run_dir}")
    return names[0]


def _cmd_compare(args):
    try:
        name_a = _find_curve(args.run_a, args.curve_a)
        name_b = _find_curve(args.run_b, args.curve_b)
        common = None
        if not args.curve_a and not args.curve_b:
            shared = sorted(
                set(os.listdir(args.run_a)) & set(os.listdir(args.run_b))
            )
            common = next(
                (f for f in shared if f.startswith("snr") and f.endswith(".csv")), None
            )
        if common:
            name_a = name_b = common
        with open(os.path.join(args.run_a, name_a), encoding="utf-8") as fh:
            text_a = fh.read()
        with open(os.path.join(args.run_b, name_b), encoding="utf-8") as fh:
            text_b = fh.read()
    except (OSError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    base_a = os.path.basename(os.path.normpath(args.run_a)) or args.run_a
    base_b = os.path.basename(os.path.normpath(args.run_b)) or args.run_b
    if base_a == base_b:
        base_a, base_b = f"{base_a}/{name_a}", f"{base_b}/{name_b}"
    payload = {
        "csv_a": text_a,
        "csv_b": text_b,
        "label_a": base_a,
        "label_b": base_b,
    }
    try:
        resp = _request("/compare", payload, args.server)
    except httpx.HTTPError as exc:
        print(f"numerical failure: cannot reach server: {exc}", file=sys.stderr)
        return 2
    if resp.status_code != 200:
        return _fail_from_response(resp)
    body = resp.json()
    print(body["report"])
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "compare.json"), "w", encoding="utf-8", newline="") as fh:
            fh.write(json.dumps(body, sort_keys=True, indent=2) + "\n")
    return 0


def _cmd_serve(args):
    import uvicorn

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cdreadout",
        description="conditional-displacement readout experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True, help="JSON config (or manifest) path")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--threads", type=int, default=1, help="worker threads")
    p_run.add_argument("--format", choices=["csv", "json"], default=None,
                       help="tabular output format")
    p_run.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="compare SNR curves from two runs")
    p_cmp.add_argument("run_a", help="first run directory")
    p_cmp.add_argument("run_b", help="second run directory")
    p_cmp.add_argument("--curve-a", default=None, help="curve filename in run_a")
    p_cmp.add_argument("--curve-b", default=None, help="curve filename in run_b")
    p_cmp.add_argument("--out", default=None, help="directory for compare.json")
    p_cmp.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    p_cmp.set_defaults(func=_cmd_compare)

    p_srv = sub.add_parser("serve", help="start the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""`cf` command line: a thin client over the HTTP service.

By default requests run against an in-process application; `--server URL`
points the same commands at a remote instance. Exit codes: 0 success,
1 user error, 2 verification falsified, 3 inconclusive, 4 internal error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional

import httpx

EXIT_OK, EXIT_USER, EXIT_FALSIFIED, EXIT_INCONCLUSIVE, EXIT_INTERNAL = 0, 1, 2, 3, 4


def load_config(path: Optional[str]) -> dict:
    """cf.toml-style key/value settings; flags override file values."""
    candidates = [path] if path else ["cf.toml"]
    out: dict = {}
    for cand in candidates:
        if cand and Path(cand).is_file():
            for line in Path(cand).read_text().splitlines():
                line = line.split("#", 1)[0].strip()
                if not line or "=" not in line:
                    continue
                key, value = (part.strip() for part in line.split("=", 1))
                value = value.strip("\"'")
                out[key] = value
            break
    return out


class Client:
    def __init__(self, server: Optional[str]):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient
            from .service import app
            self._client = TestClient(app)

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        resp.raise_for_status()
        return resp.json()


def _read_source(path: str) -> str:
    return Path(path).read_text()


def _print_diagnostics(diags: list) -> None:
    for d in diags:
        print(f"{d['filename']}:{d['line']}:{d['col']}: "
              f"error[{d['rule']}]: {d['message']}", file=sys.stderr)


def cmd_check(args, client: Client, cfg: dict) -> int:
    try:
        source = _read_source(args.program)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    data = client.post("/check", {"source": source, "filename": args.program})
    if not data["ok"]:
        _print_diagnostics(data["diagnostics"])
        return EXIT_USER
    return EXIT_OK


def cmd_run(args, client: Client, cfg: dict) -> int:
    try:
        source = _read_source(args.program)
        network = json.loads(Path(args.network).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    data = client.post("/run", {
        "source": source, "filename": args.program, "network": network,
        "check_value_types": args.check_types,
        "solver_timeout_s": float(cfg.get("timeout", args.timeout)),
    })
    if not data["ok"]:
        _print_diagnostics(data["diagnostics"])
        if data.get("error"):
            print(f"error: {data['error']}", file=sys.stderr)
        return EXIT_USER
    text = json.dumps(data["shapes"], indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_verify(args, client: Client, cfg: dict) -> int:
    if args.nprev < 1 or (args.nsym is not None and args.nsym < 1):
        print("error: bounds must be at least 1", file=sys.stderr)
        return EXIT_USER
    try:
        source = _read_source(args.program)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    data = client.post("/verify", {
        "source": source, "filename": args.program,
        "n_prev": args.nprev, "n_sym": args.nsym,
        "ops": args.op or None,
        "timeout_s": float(cfg.get("timeout", args.timeout)),
        "workers": int(cfg.get("workers", args.workers)),
        "keep_queries": args.keep_queries,
        "trace": args.trace,
    })
    if data.get("diagnostics"):
        _print_diagnostics(data["diagnostics"])
        return EXIT_USER
    if data.get("error"):
        print(f"error: {data['error']}", file=sys.stderr)
        return EXIT_USER
    for line in data.get("trace", []):
        print(f"trace: {line}", file=sys.stderr)
    report = data["report"]
    if args.human:
        for case, status in report["summary"].items():
            print(f"{case:40s} {status}")
    else:
        print(json.dumps(report, indent=2))
    return data["exit_code"]


def cmd_fuzz(args, client: Client, cfg: dict) -> int:
    try:
        source = _read_source(args.program)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    data = client.post("/fuzz", {
        "source": source, "filename": args.program,
        "nets": args.seeds, "points": args.points,
        "max_neurons": args.max_neurons, "seed": args.seed,
        "solver_timeout_s": float(cfg.get("timeout", args.timeout)),
        "check_value_types": args.check_types,
    })
    if data.get("diagnostics"):
        _print_diagnostics(data["diagnostics"])
        return EXIT_USER
    out = {"nets": data["nets"], "points": data["points"],
           "violations": data["violations"], "errors": data["errors"]}
    print(json.dumps(out, indent=2))
    if data["violations"] or data["errors"]:
        return EXIT_FALSIFIED
    return EXIT_OK


def cmd_serve(args, client: Client, cfg: dict) -> int:
    import uvicorn
    from .service import app
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cf", description=__doc__)
    ap.add_argument("--server", help="remote service URL (default: in-process)")
    ap.add_argument("--config", help="key/value config file (default: ./cf.toml)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and type-check a program")
    p.add_argument("program")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("run", help="run a certifier over a network")
    p.add_argument("program")
    p.add_argument("network")
    p.add_argument("--out", help="write the shape table to a file")
    p.add_argument("--check-types", action="store_true",
                   help="assert value types against declared member types")
    p.add_argument("--timeout", type=float, default=60.0)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("verify", help="verify transformer soundness")
    p.add_argument("program")
    p.add_argument("--op", action="append", help="restrict to an operation")
    p.add_argument("--nprev", type=int, default=4)
    p.add_argument("--nsym", type=int, default=None)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--keep-queries", help="dump queries into this directory")
    p.add_argument("--trace", action="store_true",
                   help="log one line per symbolic rule application")
    p.add_argument("--human", action="store_true", help="table output")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("fuzz", help="randomized soundness check")
    p.add_argument("program")
    p.add_argument("--seeds", type=int, default=20, help="number of networks")
    p.add_argument("--points", type=int, default=20, help="samples per network")
    p.add_argument("--max-neurons", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--check-types", action="store_true")
    p.set_defaults(fn=cmd_fuzz)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    if "solver" in cfg and not os.environ.get("CF_SOLVER"):
        os.environ["CF_SOLVER"] = cfg["solver"]
    try:
        client = Client(args.server) if args.command != "serve" else None
        return args.fn(args, client, cfg)
    except httpx.HTTPError as exc:
        print(f"service error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:                      # noqa: BLE001
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

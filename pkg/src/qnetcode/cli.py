"""Command line client. Runs the shared handlers in-process, or posts the same
request to a running service with --server.

Exit codes: 0 all checks pass, 1 a check failed, 2 bad input.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from . import handlers

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise handlers.InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise handlers.InputError(f"{path} is not valid JSON: {exc}") from exc


def _unitary_arg(arg: str):
    # a built-in gate name, or a JSON file holding a matrix document
    if arg.lower() in handlers.BUILTIN_UNITARIES and not Path(arg).exists():
        return arg.lower()
    return _load_json(arg)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise handlers.InputError(f"expected comma separated numbers, got {text!r}") from exc


def build_request(args) -> dict:
    cmd = args.command
    if cmd == "kc":
        return {"unitary": _unitary_arg(args.unitary)}
    if cmd == "verify":
        req = {"network": args.network, "unitary": _unitary_arg(args.unitary), "seed": args.seed,
               "n_random": args.n_random}
        if args.tol is not None:
            req["tol"] = args.tol
        return req
    if cmd == "scan-fourqubit":
        req = _load_json(args.grid) if args.grid else {}
        if not isinstance(req, dict):
            raise handlers.InputError("grid file must hold a JSON object")
        if args.families:
            req["families"] = [int(v) for v in _floats(args.families)]
        if args.magnitudes:
            req["magnitudes"] = _floats(args.magnitudes)
        if args.phases:
            req["phases"] = _floats(args.phases)
        return req
    if cmd == "trace":
        req = {"x": args.x, "y": args.y, "z": args.z, "j": args.j, "include_states": args.states}
        if args.tol is not None:
            req["tol"] = args.tol
        return req
    if cmd == "convert":
        req = {"circuit": _load_json(args.circuit), "seed": args.seed, "compile": not args.no_compile}
        if args.tol is not None:
            req["tol"] = args.tol
        return req
    if cmd == "simulate":
        req = {"protocol": _load_json(args.protocol), "seed": args.seed, "merge": not args.no_merge}
        if args.input:
            req["input_state"] = _load_json(args.input)
        if args.target:
            req["target_unitary"] = _unitary_arg(args.target)
        if args.tol is not None:
            req["tol"] = args.tol
        return req
    raise handlers.InputError(f"unknown command {cmd!r}")


def run_local(command: str, payload: dict) -> dict:
    model, fn = handlers.HANDLERS[command]
    try:
        req = model.model_validate(payload)
    except ValidationError as exc:
        raise handlers.InputError(str(exc)) from exc
    return fn(req).model_dump(mode="json")


def run_remote(server: str, command: str, payload: dict) -> dict:
    import httpx

    try:
        r = httpx.post(f"{server.rstrip('/')}/{command}", json=payload, timeout=600)
    except httpx.HTTPError as exc:
        raise handlers.InputError(f"cannot reach {server}: {exc}") from exc
    if r.status_code in (400, 422):
        raise handlers.InputError(str(r.json().get("detail", r.text)))
    r.raise_for_status()
    return r.json()


def to_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _flatten(doc, prefix=""):
    if isinstance(doc, dict):
        for k in sorted(doc):
            yield from _flatten(doc[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(doc, list):
        if not doc:
            yield prefix, "[]"
        for i, v in enumerate(doc):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, json.dumps(doc)


def to_text(doc) -> str:
    return "".join(f"{k} = {v}\n" for k, v in _flatten(doc))


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed for random test inputs")
    common.add_argument("--tol", type=float, default=None, help="override the pass tolerance")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("--server", help="base URL of a running qnetcode service")

    p = argparse.ArgumentParser(prog="qnetcode", description="Distributed two-qubit gates over Bell-pair networks.")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("kc", parents=[common], help="Kraus-Cirac form and KC number of a 4x4 unitary")
    q.add_argument("unitary", help="matrix JSON file or a built-in gate name")

    q = sub.add_parser("verify", parents=[common], help="build and check a protocol for U on a network")
    q.add_argument("network", help="butterfly | grail | ladder:N | cluster:k,N")
    q.add_argument("unitary", help="matrix JSON file or a built-in gate name")
    q.add_argument("--n-random", type=int, default=20, help="random inputs besides the basis and Choi states")

    q = sub.add_parser("scan-fourqubit", parents=[common], help="Schmidt-rank triples over the nine families")
    q.add_argument("grid", nargs="?", help='grid JSON {"families": [...], "magnitudes": [...], "phases": [...]}')
    q.add_argument("--families", help="comma separated family indices (default 1..9)")
    q.add_argument("--magnitudes", help="comma separated magnitudes")
    q.add_argument("--phases", help="comma separated phases in radians")

    q = sub.add_parser("trace", parents=[common], help="step-by-step check of the butterfly walk")
    for name in ("x", "y", "z"):
        q.add_argument(name, type=float)
    q.add_argument("j", type=int, help="eigenvector index 0..3")
    q.add_argument("--states", action="store_true", help="include the amplitudes of every step")

    q = sub.add_parser("convert", parents=[common], help="check and compile a converted circuit")
    q.add_argument("circuit", help="circuit JSON file")
    q.add_argument("--dot", help="also write a Graphviz rendering here")
    q.add_argument("--no-compile", action="store_true", help="skip the LOCC compile check")

    q = sub.add_parser("simulate", parents=[common], help="run an LOCC protocol over all branches")
    q.add_argument("protocol", help="protocol JSON file")
    q.add_argument("--input", help="input state JSON (default: seeded random state)")
    q.add_argument("--target", help="unitary the protocol should implement")
    q.add_argument("--no-merge", action="store_true", help="keep every branch separate")
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        payload = build_request(args)
        if args.server:
            doc = run_remote(args.server, args.command, payload)
        else:
            doc = run_local(args.command, payload)
    except handlers.InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "convert" and args.dot:
        Path(args.dot).write_text(doc.get("dot", ""))
    text = to_json(doc) if args.format == "json" else to_text(doc)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if doc.get("passed") else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

"""Command handlers shared by the HTTP service and the CLI.

Each handler takes a request model and returns a response model. Bad input
raises InputError; a check that runs but does not hold comes back with
passed=False.
"""
from __future__ import annotations

import numpy as np

from . import schemas as s
from .conversion import (
    ConversionError,
    circuit_from_json,
    circuit_to_dot,
    compile_circuit_protocol,
    control_sets_and_ranges,
    simulate_by_standard_form,
    validate_segment,
)
from .decompositions import DecompositionError, kraus_cirac, op_rank
from .implementability import swap_impossibility_scan
from .linalg import (
    CNOT,
    CZ,
    SWAP,
    LinalgError,
    Qubit,
    StateVector,
    gate_distance,
    is_unitary,
    matrix_from_json,
    matrix_to_json,
    random_state,
)
from .locc import ProtocolError, execute, protocol_from_json, translate, validate, verify_unitary
from .network import NetworkError, build_cluster
from .protocols import (
    NotImplementable,
    appendix_d_trace,
    grail_protocol,
    implement_full_two_qubit,
    ladder_protocol,
)


class InputError(ValueError):
    pass


BUILTIN_UNITARIES = {
    "identity": np.eye(4, dtype=complex),
    "swap": SWAP,
    "cnot": CNOT,
    "cz": CZ,
    "iswap": np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


def parse_unitary(doc, dim: int = 4) -> np.ndarray:
    if isinstance(doc, str):
        key = doc.lower()
        if key not in BUILTIN_UNITARIES:
            raise InputError(f"unknown gate {doc!r}; built-ins: {', '.join(sorted(BUILTIN_UNITARIES))}")
        U = np.eye(dim, dtype=complex) if key == "identity" else BUILTIN_UNITARIES[key]
        if U.shape != (dim, dim):
            raise InputError(f"{doc!r} is a two-qubit gate, expected dimension {dim}")
        return U
    try:
        U = matrix_from_json(doc)
    except LinalgError as exc:
        raise InputError(str(exc)) from exc
    if U.shape != (dim, dim):
        raise InputError(f"expected a {dim}x{dim} matrix, got shape {U.shape}")
    if not is_unitary(U, 1e-10):
        raise InputError("matrix is not unitary to 1e-10")
    return U


def _r(v: float, nd: int = 15) -> float:
    # fixed number of significant digits keeps JSON output stable
    return float(f"{float(v):.{nd}g}")


def _vec(v) -> dict:
    # drop sub-1e-14 noise and negative zeros
    return matrix_to_json(np.round(np.asarray(v, dtype=complex), 14) + 0.0)


# -- kc ------------------------------------------------------------------------


def kc(req: s.KcRequest) -> s.KcResponse:
    U = parse_unitary(req.unitary)
    try:
        form = kraus_cirac(U)
    except DecompositionError as exc:
        raise InputError(str(exc)) from exc
    err = gate_distance(form.reconstruct(), U)
    return s.KcResponse(
        passed=bool(err <= 1e-10), x=_r(form.x), y=_r(form.y), z=_r(form.z),
        kc=int(form.kc_number), op_rank=op_rank(U), reconstruction_error=_r(err, 3),
        u=_vec(form.u), u_prime=_vec(form.u_prime), w=_vec(form.w), w_prime=_vec(form.w_prime),
    )


# -- verify --------------------------------------------------------------------


def _parse_network(name: str) -> tuple[str, tuple]:
    kind, _, arg = name.strip().lower().partition(":")
    try:
        if kind in ("butterfly", "grail") and not arg:
            return kind, ()
        if kind == "ladder":
            return kind, (int(arg),)
        if kind == "cluster":
            k, N = (int(v) for v in arg.split(","))
            return kind, (k, N)
    except ValueError:
        pass
    raise InputError(f"network must be butterfly, grail, ladder:N or cluster:k,N; got {name!r}")


def _verify_protocol(name: str, U: np.ndarray, kc_num: int):
    """Protocol for U on the named network, or the reason there is none."""
    kind, args = _parse_network(name)
    if kind == "butterfly":
        return implement_full_two_qubit(U), ""
    if kind == "grail":
        return grail_protocol(U), ""
    if kind == "ladder":
        if args[0] < 1:
            raise InputError("ladder needs N >= 1")
        try:
            return ladder_protocol(U, args[0]), ""
        except NotImplementable as exc:
            return None, str(exc)
    k, N = args
    if k < 2 or N < 1:
        raise InputError("cluster needs k >= 2 and N >= 1")
    if k * N > 64:
        raise InputError("cluster too large (k*N > 64)")
    net = build_cluster(k, N)
    if kc_num <= N:
        # controlled ladder on rows 1, 2
        return translate(ladder_protocol(U, N), net, {}, {}), ""
    if k >= 3 and N >= 2:
        # butterfly block on rows 1..3, columns 1..2
        return translate(implement_full_two_qubit(U, on_cluster=True), net, {}, {}), ""
    return None, f"KC#={kc_num} exceeds N={N} and the cluster has fewer than 3 rows"


def verify(req: s.VerifyRequest) -> s.VerifyResponse:
    U = parse_unitary(req.unitary)
    kc_num = int(kraus_cirac(U).kc_number)
    proto, reason = _verify_protocol(req.network, U, kc_num)
    if proto is None:
        return s.VerifyResponse(passed=False, verdict="refused", network=req.network, kc=kc_num, reason=reason)
    rep = validate(proto)
    if not rep.ok:
        return s.VerifyResponse(passed=False, verdict="failed", network=req.network, kc=kc_num,
                                reason="; ".join(map(str, rep.violations)))
    res = verify_unitary(proto, U, np.random.default_rng(req.seed), n_random=req.n_random)
    ok = res["min_fidelity"] >= 1 - req.tol and res["max_probability_defect"] <= req.tol
    return s.VerifyResponse(
        passed=bool(ok), verdict="implemented" if ok else "failed", network=req.network, kc=kc_num,
        reason="" if ok else "branch fidelity or probability outside tolerance",
        min_fidelity=_r(res["min_fidelity"], 12), max_probability_defect=_r(res["max_probability_defect"], 3),
        n_inputs=res["n_inputs"], consumed_edges=sorted(rep.consumed_edges),
        branch_counts=sorted({len(bs.branches) for bs in res["branch_sets"]}),
        branch_probabilities=sorted({_r(b.probability, 10) for bs in res["branch_sets"] for b in bs.branches}),
    )


# -- scan ----------------------------------------------------------------------


def scan(req: s.ScanRequest) -> s.ScanResponse:
    grid = {"families": req.families}
    if req.magnitudes is not None:
        grid["magnitudes"] = req.magnitudes
    if req.phases is not None:
        grid["phases"] = req.phases
    try:
        rep = swap_impossibility_scan(grid).to_json()
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return s.ScanResponse(passed=rep.pop("ok"), **rep)


# -- trace ---------------------------------------------------------------------


def trace(req: s.TraceRequest) -> s.TraceResponse:
    steps = appendix_d_trace(req.x, req.y, req.z, req.j)
    out, worst = [], 0.0
    for st in steps:
        row = {"step": st["step"], "error": _r(st["error"], 3)}
        worst = max(worst, st["error"])
        if "branches" in st:
            worst = max(worst, st["probability_error"])
            row["probability_error"] = _r(st["probability_error"], 3)
            row["branches"] = []
            for b in st["branches"]:
                br = {"outcome": b["outcome"], "probability": _r(b["probability"], 12), "error": _r(b["error"], 3)}
                if req.include_states:
                    br["state"] = _vec(b["state"])
                row["branches"].append(br)
        elif req.include_states:
            row["state"] = _vec(st["state"])
            row["expected"] = _vec(st["expected"])
        out.append(row)
    lam = np.exp(1j * np.array([req.x - req.y + req.z, -req.x + req.y + req.z,
                                req.x + req.y - req.z, -req.x - req.y - req.z]))[req.j]
    return s.TraceResponse(passed=bool(worst <= req.tol), eigenvalue=_vec([lam]), steps=out,
                           max_error=_r(worst, 3))


# -- convert -------------------------------------------------------------------


def convert(req: s.ConvertRequest) -> s.ConvertResponse:
    try:
        circ = circuit_from_json(req.circuit)
    except (ConversionError, LinalgError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad circuit: {exc}") from exc
    cols, ok, pairs = [], True, 0
    for j, col in enumerate(circ.columns, start=1):
        rep = validate_segment(col.gates, circ.k)
        row = {"column": j, "gates": [repr(g) for g in col.gates], "legal": rep.ok,
               "violations": rep.to_json()["violations"]}
        if rep.ok:
            rng_info = control_sets_and_ranges(col.gates)
            row["controls"] = {str(i): {"range": list(v["range"]), "targets": sorted(v["targets"])}
                               for i, v in sorted(rng_info.items())}
            row["bell_pairs"] = sum(v["pairs"] for v in rng_info.values())
            pairs += row["bell_pairs"]
        ok &= rep.ok
        cols.append(row)
    resp = s.ConvertResponse(passed=bool(ok), wires=circ.k, columns=cols, bell_pairs=pairs,
                             dot=circuit_to_dot(circ))
    if not ok:
        return resp
    U = circ.unitary()
    if circ.k in (2, 3):
        try:
            sf = simulate_by_standard_form(circ, tol=req.tol)
            err = gate_distance(sf.matrix(), U)
            resp.standard_form = {"N": sf.N, "cases": list(sf.cases), "error": _r(err, 3)}
        except (ConversionError, DecompositionError) as exc:
            resp.standard_form = {"error": None, "reason": str(exc)}
            resp.passed = False
    if req.compile and circ.k * circ.N <= 12:
        proto = compile_circuit_protocol(circ, build_cluster(circ.k, circ.N))
        res = verify_unitary(proto, U, np.random.default_rng(req.seed), n_random=req.n_random,
                             include_choi=False)
        good = res["min_fidelity"] >= 1 - req.tol and res["max_probability_defect"] <= req.tol
        resp.compiled = {"min_fidelity": _r(res["min_fidelity"], 12), "n_inputs": res["n_inputs"],
                         "consumed_edges": sorted(proto.consumed_edges), "passed": bool(good)}
        resp.passed = resp.passed and bool(good)
    return resp


# -- simulate ------------------------------------------------------------------


def simulate(req: s.SimulateRequest) -> s.SimulateResponse:
    try:
        proto = protocol_from_json(req.protocol)
    except (ProtocolError, NetworkError) as exc:
        raise InputError(str(exc)) from exc
    rep = validate(proto)
    resp = s.SimulateResponse(passed=rep.ok, valid=rep.ok, violations=[str(v) for v in rep.violations],
                              consumed_edges=sorted(rep.consumed_edges))
    if not rep.ok:
        return resp
    n = len(proto.inputs)
    reg = [Qubit(l, nd) for l, nd in proto.inputs]
    if req.input_state is None:
        vec = random_state(n, np.random.default_rng(req.seed)) if n else np.ones(1, dtype=complex)
    else:
        try:
            vec = matrix_from_json(req.input_state).reshape(-1)
        except LinalgError as exc:
            raise InputError(str(exc)) from exc
        if vec.size != 2**n or abs(np.linalg.norm(vec) - 1) > 1e-10:
            raise InputError(f"input state must be a normalised vector of length {2**n}")
    try:
        bs = execute(proto, StateVector(reg, vec), merge=req.merge)
    except ProtocolError as exc:
        raise InputError(str(exc)) from exc
    fids = None
    if req.target_unitary is not None:
        U = parse_unitary(req.target_unitary, dim=2**n)
        if len(proto.outputs) != n:
            raise InputError("target unitary needs as many outputs as inputs")
        fids = bs.fidelities(StateVector(list(proto.outputs), U @ vec))
    branches = []
    for i, b in enumerate(bs.branches):
        row = {"outcomes": {k: int(v) for k, v in sorted(b.outcomes.items())},
               "probability": _r(b.probability, 12), "multiplicity": int(b.multiplicity)}
        if fids is not None:
            row["fidelity"] = _r(fids[i], 12)
        branches.append(row)
    resp.total_probability = _r(bs.total_probability(), 12)
    resp.leaf_count = bs.leaf_count()
    resp.branches = branches
    if fids is not None:
        resp.min_fidelity = _r(min(fids), 12)
        resp.passed = bool(min(fids) >= 1 - req.tol and abs(bs.total_probability() - 1) <= req.tol)
    return resp


HANDLERS = {
    "kc": (s.KcRequest, kc),
    "verify": (s.VerifyRequest, verify),
    "scan-fourqubit": (s.ScanRequest, scan),
    "trace": (s.TraceRequest, trace),
    "convert": (s.ConvertRequest, convert),
    "simulate": (s.SimulateRequest, simulate),
}

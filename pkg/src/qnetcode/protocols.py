"""Two-qubit gates over the butterfly, grail and ladder networks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conversion import Column, ConvertedCircuit, compile_circuit, compile_circuit_protocol, gate
from .decompositions import (
    KC_ZERO_TOL,
    NotDecomposable,
    as_controlled,
    controlled_sequence,
    kraus_cirac,
    three_cnot_decompose,
    u_global,
)
from .linalg import (
    H,
    PHI_PLUS,
    X,
    Z,
    as_matrix,
    dagger,
    gate_distance,
    is_unitary,
    kron,
)
from .locc import LoccProtocol, ProtocolBuilder, ProtocolError, translate
from .network import (
    BUTTERFLY_NODES,
    GRAIL_NODES,
    build_butterfly,
    build_cluster,
    build_grail,
    cluster_relabeling,
)

_I2 = np.eye(2, dtype=complex)
BELL = tuple(np.kron(u, _I2) @ PHI_PLUS for u in (_I2, Z, X, Z @ X))  # Phi+, Phi-, Psi+, Psi-


class NotImplementable(ValueError):
    def __init__(self, msg: str, kc_number: int | None = None):
        super().__init__(msg)
        self.kc_number = kc_number


def _check_unitary(U) -> np.ndarray:
    U = as_matrix(U)
    if U.shape != (4, 4) or not is_unitary(U, 1e-10):
        raise ValueError("expected a 4x4 unitary")
    return U


# -- eigen table ---------------------------------------------------------------


@dataclass(frozen=True)
class EigenTable:
    x: float
    y: float
    z: float

    @property
    def eigenvalues(self) -> np.ndarray:
        x, y, z = self.x, self.y, self.z
        return np.exp(1j * np.array([x - y + z, -x + y + z, x + y - z, -x - y - z]))

    @property
    def eigenvectors(self) -> tuple:
        return BELL

    def residual(self) -> float:
        G = u_global(self.x, self.y, self.z)
        return max(float(np.max(np.abs(G @ v - lam * v))) for v, lam in zip(BELL, self.eigenvalues))


# -- butterfly -------------------------------------------------------------------


def _u_x(x: float) -> np.ndarray:
    return H @ np.diag([np.exp(1j * x), -1j * np.exp(-1j * x)])


def butterfly_gates(x: float, y: float, z: float) -> dict:
    """Target unitaries of the two fully controlled gates and the final local gate."""
    w_same = np.diag([np.exp(1j * (z - y)), -1j * np.exp(1j * (z + y))])
    w_diff = np.diag([np.exp(-1j * (z - y)), -1j * np.exp(-1j * (z + y))])
    return {
        "first": (_I2, Z, Z, _I2),  # indexed by 2*bit1 + bit3
        "second": (w_same, w_diff, w_diff, w_same),
        "u_x": _u_x(x),
    }


def butterfly_circuit(x: float, y: float, z: float, pre=(_I2, _I2)) -> ConvertedCircuit:
    """U_3 on the (3,2)-cluster: wires 1 and 3 carry the data, wire 2 starts in |0>."""
    g = butterfly_gates(x, y, z)
    col1 = Column((H @ pre[0], H, H @ pre[1]), (gate(1, 3, 2, g["first"]),), (X @ H, H, X @ H))
    col2 = Column((_I2, _I2, _I2), (gate(1, 3, 2, g["second"]),), (_I2, g["u_x"], _I2))
    return ConvertedCircuit(3, (col1, col2))


@dataclass(frozen=True, eq=False)
class ButterflyProgram:
    x: float
    y: float
    z: float
    protocol: LoccProtocol
    target: np.ndarray
    cluster_protocol: LoccProtocol


def _butterfly_build(x, y, z, pre=(_I2, _I2), post=(_I2, _I2), name="butterfly") -> tuple:
    circ = butterfly_circuit(x, y, z, pre)
    b = compile_circuit(circ, build_cluster(3, 2), ancilla_wires=(2,))
    w = b.wires
    # final LOCC step: measure wire 2 at v_{2,2}, flip both data wires on outcome 1
    m = b.measure(w[2])
    for i in (1, 3):
        b.send((2, 2), (i, 2), m)
        b.conditional((i, 2), [m], [((w[i],), X, "X")])
    for i, u in ((1, post[0]), (3, post[1])):
        if gate_distance(u, _I2) > 0:
            b.local((w[i],), u, "post")
    cp = b.build([w[1], w[3]])
    cp = LoccProtocol(cp.network, cp.instructions, (("in1", (1, 1)), ("in2", (3, 1))), cp.outputs,
                      cp.consumed_edges, name)
    cp = translate(cp, cp.network, {}, {"q1": "in1", "q3": "in2"})
    net = build_butterfly()
    to_name = {c: n for n, c in BUTTERFLY_NODES.items()}
    to_label = {c: n for n, c in cluster_relabeling(net).items()}
    return translate(cp, net, to_name, to_label), cp


def butterfly_protocol(x: float, y: float, z: float) -> ButterflyProgram:
    """Deterministic U_global(x, y, z) from inputs i1, i2 to outputs o1, o2."""
    x, y, z = float(x), float(y), float(z)
    proto, cp = _butterfly_build(x, y, z)
    return ButterflyProgram(x, y, z, proto, u_global(x, y, z), cp)


def implement_full_two_qubit(U, on_cluster: bool = False) -> LoccProtocol:
    """Any two-qubit unitary over the butterfly network via its Kraus-Cirac form.

    on_cluster=True returns the same protocol on (3,2)-cluster labels.
    """
    U = _check_unitary(U)
    kc = kraus_cirac(U)
    proto, cp = _butterfly_build(kc.x, kc.y, kc.z, pre=(kc.w, kc.w_prime),
                                 post=(kc.u, kc.u_prime), name="butterfly-full")
    return cp if on_cluster else proto


# -- step-by-step trace ------------------------------------------------------------


def _embed13(v13: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """State on wires (1,2,3) from a two-qubit vector on (1,3) and a qubit-2 vector."""
    return np.einsum("ac,b->abc", v13.reshape(2, 2), v2).reshape(-1)


_KET0, _KET1 = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
_PLUS, _MINUS = H @ _KET0, H @ _KET1
_PHI_P, _PHI_M, _PSI_P, _PSI_M = BELL


def _closed_forms(x, y, z, j) -> list:
    """Expected 3-qubit states after steps (i)..(vi) and the two step-(vii) branches."""
    lam = EigenTable(x, y, z).eigenvalues[j]
    after_h = [(1, _PHI_P), (1, _PSI_P), (1, _PHI_M), (-1, _PSI_M)][j]
    q2_iii = [_PLUS, _MINUS, _PLUS, _MINUS][j]
    sign_iv, q2_iv = [(1, _KET0), (-1, _KET1), (1, _KET0), (-1, _KET1)][j]
    phase_v = [np.exp(1j * (z - y)), 1j * np.exp(1j * (z + y)),
               np.exp(-1j * (z - y)), 1j * np.exp(-1j * (z + y))][j]
    q2_vi = [_PLUS, _MINUS, _PLUS, _MINUS][j]
    v = BELL[j]
    return [
        _embed13(v, _KET0),
        after_h[0] * _embed13(after_h[1], _PLUS),
        after_h[0] * _embed13(after_h[1], q2_iii),
        sign_iv * _embed13(v, q2_iv),
        phase_v * _embed13(v, q2_iv),
        lam * _embed13(v, q2_vi),
        [lam * _embed13(v, _KET0), lam * _embed13(v, _KET1)],
    ]


STEP_NAMES = ("i", "ii", "iii", "iv", "v", "vi", "vii")


def appendix_d_trace(x: float, y: float, z: float, j: int) -> list[dict]:
    """Ideal three-qubit walk through the butterfly construction on eigenvector j."""
    if j not in (0, 1, 2, 3):
        raise ValueError("eigenvector index must be 0..3")
    g = butterfly_gates(x, y, z)
    H3 = kron(H, H, H)
    C1 = gate(1, 3, 2, g["first"]).matrix(3)
    C2 = gate(1, 3, 2, g["second"]).matrix(3)
    XIX = kron(X, _I2, X)
    ops = [None, H3, C1, XIX @ H3, C2, kron(_I2, g["u_x"], _I2)]
    expected = _closed_forms(x, y, z, j)
    steps, psi = [], None
    for n, op in enumerate(ops):
        psi = _embed13(BELL[j], _KET0) if op is None else op @ psi
        err = float(np.max(np.abs(psi - expected[n])))
        steps.append({"step": STEP_NAMES[n], "state": psi, "expected": expected[n], "error": err})
    # step (vii): measure wire 2, apply X on wires 1 and 3 after outcome 1
    branches = []
    t = psi.reshape(2, 2, 2)
    for m in (0, 1):
        proj = np.zeros_like(t)
        proj[:, m, :] = t[:, m, :]
        prob = float(np.sum(np.abs(proj) ** 2))
        out = proj.reshape(-1) / np.sqrt(prob)
        if m == 1:
            out = XIX @ out
        err = float(np.max(np.abs(out - expected[6][m])))
        branches.append({"outcome": m, "probability": prob, "state": out, "error": err})
    steps.append({"step": "vii", "branches": branches,
                  "error": max(b["error"] for b in branches),
                  "probability_error": max(abs(b["probability"] - 0.5) for b in branches)})
    return steps


# -- decomposability of the second gate ----------------------------------------------


def pairwise_split_residual(us) -> dict:
    """How far a fully controlled gate (controls 1, 3) is from a product of two
    two-qubit controlled gates C_{1;2} C_{3;2} in either order.

    u^{(ac)} = A_a B_c forces u00^dag u01 = u10^dag u11; u^{(ac)} = B_c A_a forces
    u00 u01^dag = u10 u11^dag. Both residuals must vanish for a split to exist.
    """
    u00, u01, u10, u11 = (np.asarray(u) for u in us)
    r1 = float(np.linalg.norm(dagger(u00) @ u01 - dagger(u10) @ u11))
    r2 = float(np.linalg.norm(u00 @ dagger(u01) - u10 @ dagger(u11)))
    r3 = float(np.linalg.norm(dagger(u00) @ u10 - dagger(u01) @ u11))
    r4 = float(np.linalg.norm(u00 @ dagger(u10) - u01 @ dagger(u11)))
    return {"target_after_1": min(r1, r3), "target_before_1": min(r2, r4),
            "splittable": min(r1, r2, r3, r4) < 1e-9}


# -- grail ------------------------------------------------------------------------------


def _cnot_columns(circ3) -> ConvertedCircuit:
    L = circ3.layers
    cx = gate(1, 1, 2, [_I2, X])
    cols = [Column(tuple(L[0]), (cx,), tuple(L[1])),
            Column((_I2, _I2), (cx,), tuple(L[2])),
            Column((_I2, _I2), (cx,), tuple(L[3]))]
    return ConvertedCircuit(2, tuple(cols))


def grail_protocol(U) -> LoccProtocol:
    """Teleport i1 in over E1, run three CNOT columns on the (2,3) core, teleport out over E2."""
    U = _check_unitary(U)
    circ = _cnot_columns(three_cnot_decompose(U))
    if gate_distance(circ.unitary(), U) > 1e-9:
        raise ProtocolError("internal: three-CNOT circuit does not match U")
    net = build_grail()
    core = compile_circuit_protocol(circ, build_cluster(2, 3))
    to_name = {c: n for n, c in GRAIL_NODES.items()}
    to_label = {c: n for n, c in cluster_relabeling(net).items()}
    b = ProtocolBuilder(net, [("in1", "i1"), ("in2", "i2")], "grail")
    arrived = b.teleport("in1", "E:1")
    to_label.update({"q1": arrived, "q2": "in2"})
    core = translate(core, net, to_name, to_label)
    b.extend(core)
    out2 = b.teleport(core.outputs[1], "E:2")
    return b.build([core.outputs[0], out2])


# -- ladder -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LadderDecision:
    implementable: bool
    kc_number: int
    N: int
    factors: tuple = ()  # U = F_1 F_2 ... F_N (F_N acts first)
    reason: str = ""

    def to_json(self) -> dict:
        return {"implementable": self.implementable, "kc": self.kc_number, "N": self.N, "reason": self.reason}


def ladder_circuit(factors, tol: float = KC_ZERO_TOL) -> ConvertedCircuit:
    """One controlled-gate column per factor; factors act right to left."""
    cols = []
    for F in reversed(factors):
        cf = as_controlled(F)
        if gate_distance(cf.u0, cf.u1) < tol:
            cols.append(Column(tuple(cf.pre), (), (cf.post[0], cf.post[1] @ cf.u0)))
        else:
            cols.append(Column(tuple(cf.pre), (gate(1, 1, 2, [cf.u0, cf.u1]),), tuple(cf.post)))
    return ConvertedCircuit(2, tuple(cols))


def ladder_factors(U, N: int) -> tuple:
    """Controlled-sequence certificate of length N (identity-padded above three)."""
    n = min(N, 3)
    fs = controlled_sequence(U, n)
    return tuple(fs) + (np.eye(4, dtype=complex),) * (N - n)


def ladder_protocol(U, N: int) -> LoccProtocol:
    """Protocol over the (2,N)-cluster; raises NotImplementable when KC#(U) > N."""
    U = _check_unitary(U)
    if int(N) < 1:
        raise ValueError("N must be at least 1")
    try:
        fs = ladder_factors(U, int(N))
    except NotDecomposable as exc:
        raise NotImplementable(f"KC#={exc.kc_number} exceeds N={N}", exc.kc_number) from exc
    return compile_circuit_protocol(ladder_circuit(fs), build_cluster(2, int(N)))

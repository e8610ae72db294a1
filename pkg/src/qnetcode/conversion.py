"""Converted circuits: legality of column segments, parallel LOCC compilation
and the standard forms for two and three wires.

Wires are numbered from 1. A gate (a, b; c) is controlled by wires a and b and
targets wire c; a == b is the two-qubit gate controlled by a alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .linalg import (
    CNOT,
    H,
    Z,
    dagger,
    embed_operator,
    gate_distance,
    is_unitary,
    kron,
    matrix_from_json,
    matrix_to_json,
    random_unitary,
)
from .locc import LoccProtocol, ProtocolBuilder, controlled_matrix
from .network import Network, build_cluster

_I2 = np.eye(2, dtype=complex)


class ConversionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ControlledGateDesc:
    a: int
    b: int
    c: int
    us: tuple  # 2 matrices when a == b, else 4 indexed by 2*bit_a + bit_b

    def __post_init__(self):
        if self.c in (self.a, self.b):
            raise ConversionError(f"gate ({self.a},{self.b};{self.c}) targets one of its controls")
        need = 2 if self.a == self.b else 4
        if len(self.us) != need:
            raise ConversionError(f"gate ({self.a},{self.b};{self.c}) needs {need} target unitaries")
        for u in self.us:
            if np.shape(u) != (2, 2) or not is_unitary(u, 1e-10):
                raise ConversionError("target unitaries must be 2x2 unitary")

    @property
    def controls(self) -> tuple:
        return (self.a,) if self.a == self.b else (self.a, self.b)

    @property
    def triple(self) -> tuple:
        return (self.a, self.b, self.c)

    def local_matrix(self) -> np.ndarray:
        """Matrix on (controls..., target) in that order."""
        return controlled_matrix(list(self.us))

    def matrix(self, k: int) -> np.ndarray:
        pos = [w - 1 for w in self.controls] + [self.c - 1]
        return embed_operator(self.local_matrix(), pos, k)

    def __repr__(self):
        return f"({self.a},{self.b};{self.c})"


def gate(a: int, b: int, c: int, us=None) -> ControlledGateDesc:
    """Convenience constructor; missing target unitaries default to identities."""
    if us is None:
        us = [_I2] * (2 if a == b else 4)
    return ControlledGateDesc(int(a), int(b), int(c), tuple(np.asarray(u, dtype=complex) for u in us))


@dataclass(frozen=True, eq=False)
class Column:
    pre: tuple  # k single-qubit unitaries
    gates: tuple
    post: tuple

    def matrix(self, k: int) -> np.ndarray:
        m = kron(*self.pre)
        for g in self.gates:
            m = g.matrix(k) @ m
        return kron(*self.post) @ m


@dataclass(frozen=True, eq=False)
class ConvertedCircuit:
    k: int
    columns: tuple

    @property
    def N(self) -> int:
        return len(self.columns)

    def unitary(self) -> np.ndarray:
        m = np.eye(2**self.k, dtype=complex)
        for col in self.columns:
            m = col.matrix(self.k) @ m
        return m


def make_circuit(k: int, segments: Sequence[Sequence[ControlledGateDesc]], locals_=None) -> ConvertedCircuit:
    cols = []
    for j, G in enumerate(segments):
        pre = post = tuple([_I2] * k)
        if locals_ is not None:
            pre, post = (tuple(x) for x in locals_[j])
        cols.append(Column(pre, tuple(G), post))
    return ConvertedCircuit(k, tuple(cols))


# -- legality ----------------------------------------------------------------


@dataclass
class SegmentReport:
    ok: bool
    violations: list = field(default_factory=list)  # (gate index, rule, message)

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": [
            {"gate": i, "rule": r, "message": m} for i, r, m in self.violations]}


def _regions(g: ControlledGateDesc):
    """(region, index) pairs; region r lies between wires r and r+1."""
    for x in g.controls:
        lo, hi = sorted((x, g.c))
        for r in range(lo, hi):
            yield r, x


def validate_segment(G: Sequence[ControlledGateDesc], k: int | None = None) -> SegmentReport:
    """Check a column's gate sequence against the drawing rules.

    order: a three-qubit gate's target lies strictly between its controls.
    region: each gap between adjacent wires carries at most one control index.
    box-between-dots: no gate targets a wire between two gates that use it as control.
    """
    viol = []
    label: dict[int, tuple[int, int]] = {}
    for t, g in enumerate(G):
        wires = set(g.controls) | {g.c}
        if k is not None and not all(1 <= w <= k for w in wires):
            viol.append((t, "range", f"{g!r} uses a wire outside 1..{k}"))
            continue
        if g.a != g.b and not (min(g.a, g.b) < g.c < max(g.a, g.b)):
            viol.append((t, "order", f"{g!r}: target must lie between the two controls"))
        for r, x in _regions(g):
            if r in label and label[r][1] != x:
                viol.append((t, "region", f"{g!r}: gap {r}|{r + 1} already carries index "
                                          f"{label[r][1]} from gate {label[r][0]}"))
            else:
                label.setdefault(r, (t, x))
    roles: dict[int, list] = {}
    for t, g in enumerate(G):
        for x in g.controls:
            roles.setdefault(x, []).append(("dot", t))
        roles.setdefault(g.c, []).append(("box", t))
    for w, seq in roles.items():
        dots = [t for kind, t in seq if kind == "dot"]
        if len(dots) < 2:
            continue
        for kind, t in seq:
            if kind == "box" and dots[0] < t < dots[-1]:
                viol.append((t, "box-between-dots", f"{G[t]!r} targets wire {w} between two of its control dots"))
    viol.sort(key=lambda v: v[0])
    return SegmentReport(not viol, viol)


def control_sets_and_ranges(G: Sequence[ControlledGateDesc]) -> dict[int, dict]:
    rep = validate_segment(G)
    if not rep.ok:
        raise ConversionError("invalid segment: " + "; ".join(m for _, _, m in rep.violations))
    out: dict[int, dict] = {}
    for t, g in enumerate(G):
        for x in g.controls:
            out.setdefault(x, {"gates": [], "targets": set()})
            out[x]["gates"].append(t)
            out[x]["targets"].add(g.c)
    for i, d in out.items():
        d["range"] = (min(i, min(d["targets"])), max(i, max(d["targets"])))
        d["targets"] = sorted(d["targets"])
        d["pairs"] = d["range"][1] - d["range"][0]
    return dict(sorted(out.items()))


# -- LOCC compilation ----------------------------------------------------------


def _copy_tree(b: ProtocolBuilder, wire_label: str, i: int, targets: Sequence[int], j: int) -> dict:
    """Copy wire i's computational value to every target node of column j.

    One ancilla per direction leaves v_{i,j}; every target it passes keeps a copy
    and forwards a fresh one, so each gap in the range is crossed once.
    """
    copies = {}
    for side in (sorted(t for t in targets if t > i), sorted((t for t in targets if t < i), reverse=True)):
        if not side:
            continue
        a = b.add_ancilla((i, j), "cp")
        b.local((wire_label, a), CNOT, "CNOT")
        step = 1 if side[0] > i else -1
        row, cur = i, a
        for n_t, t in enumerate(side):
            cur = b.teleport_path(cur, [(r, j) for r in range(row, t + step, step)])
            row = t
            copies[t] = cur
            if n_t + 1 < len(side):
                nxt = b.add_ancilla((t, j), "cp")
                b.local((cur, nxt), CNOT, "CNOT")
                cur = nxt
    return copies


def _decouple(b: ProtocolBuilder, wire_label: str, i: int, copies: dict, j: int):
    vars_ = []
    for t, lab in sorted(copies.items()):
        b.local((lab,), H, "H")
        v = b.measure(lab)
        b.send((t, j), (i, j), v)
        vars_.append(v)
    b.conditional((i, j), vars_, [((wire_label,), Z, "Z")])


def compile_segment_into(b: ProtocolBuilder, G: Sequence[ControlledGateDesc], j: int,
                         wires: dict[int, str]):
    """Append the parallel implementation of segment G on column j to builder b.

    wires maps wire index -> label of the qubit currently at v_{i,j}.
    """
    info = control_sets_and_ranges(G)
    last_dot = {i: max(d["gates"]) for i, d in info.items()}
    copies: dict[int, dict] = {}
    for t, g in enumerate(G):
        for x in g.controls:
            if x not in copies:
                copies[x] = _copy_tree(b, wires[x], x, info[x]["targets"], j)
        labels = [copies[x][g.c] for x in g.controls] + [wires[g.c]]
        b.local(labels, g.local_matrix(), repr(g))
        for x in g.controls:
            if last_dot[x] == t and x in copies:
                _decouple(b, wires[x], x, copies.pop(x), j)


def compile_segment(G: Sequence[ControlledGateDesc], k: int, j: int = 1,
                    network: Network | None = None) -> LoccProtocol:
    """Stand-alone protocol for one column segment; inputs q1..qk at v_{i,j}."""
    net = network or build_cluster(k, max(j, 1))
    wires = {i: f"q{i}" for i in range(1, k + 1)}
    b = ProtocolBuilder(net, [(wires[i], (i, j)) for i in range(1, k + 1)], "segment")
    compile_segment_into(b, G, j, wires)
    return b.build([wires[i] for i in range(1, k + 1)])


def compile_circuit(circ: ConvertedCircuit, network: Network | None = None,
                    ancilla_wires: Sequence[int] = ()) -> ProtocolBuilder:
    """Column-by-column protocol; wires move right by teleportation over row edges.

    Wires listed in ancilla_wires start in |0> at their column-1 node instead of
    being inputs. Returns the builder so callers can append a final LOCC step;
    `.build(outputs)` finishes it, the current wire labels are in `.wires`.
    """
    k, N = circ.k, circ.N
    net = network or build_cluster(k, N)
    wires = {i: f"q{i}" for i in range(1, k + 1)}
    b = ProtocolBuilder(net, [(wires[i], (i, 1)) for i in range(1, k + 1) if i not in ancilla_wires],
                        "converted-circuit")
    for i in ancilla_wires:
        wires[i] = b.add_ancilla((i, 1), f"q{i}_")
    for j, col in enumerate(circ.columns, start=1):
        for i in range(1, k + 1):
            if gate_distance(col.pre[i - 1], _I2) > 0:
                b.local((wires[i],), col.pre[i - 1], "pre")
        compile_segment_into(b, col.gates, j, wires)
        for i in range(1, k + 1):
            if gate_distance(col.post[i - 1], _I2) > 0:
                b.local((wires[i],), col.post[i - 1], "post")
        if j < N:
            for i in range(1, k + 1):
                wires[i] = b.teleport(wires[i], f"K:{i},{j}")
    b.wires = wires
    return b


def compile_circuit_protocol(circ: ConvertedCircuit, network: Network | None = None) -> LoccProtocol:
    b = compile_circuit(circ, network)
    return b.build([b.wires[i] for i in range(1, circ.k + 1)])


# -- standard forms ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Slot:
    pre: tuple  # k locals
    us: tuple  # k=2: (u0, u1) controlled by wire 1 on wire 2; k=3: u^{(ac)} controlled by wires 1, 3
    post: tuple

    def core(self, k: int) -> np.ndarray:
        if k == 2:
            return controlled_matrix(list(self.us))
        return embed_operator(controlled_matrix(list(self.us)), [0, 2, 1], 3)

    def matrix(self, k: int) -> np.ndarray:
        return kron(*self.post) @ self.core(k) @ kron(*self.pre)


@dataclass(frozen=True, eq=False)
class StandardForm:
    k: int
    slots: tuple
    cases: tuple = ()  # which reduction produced each slot

    @property
    def N(self) -> int:
        return len(self.slots)

    def matrix(self) -> np.ndarray:
        m = np.eye(2**self.k, dtype=complex)
        for s in self.slots:
            m = s.matrix(self.k) @ m
        return m

    def to_circuit(self) -> ConvertedCircuit:
        g = (lambda s: gate(1, 1, 2, s.us)) if self.k == 2 else (lambda s: gate(1, 3, 2, s.us))
        return ConvertedCircuit(self.k, tuple(Column(s.pre, (g(s),), s.post) for s in self.slots))


def standard_form(k: int, N: int) -> StandardForm:
    """Identity-parameterised template: one C_{1;2} per column for k=2, one C_{1,3;2} for k=3."""
    if k not in (2, 3):
        raise ConversionError(f"no standard form is known for k={k}")
    if N < 1:
        raise ConversionError("N must be at least 1")
    us = (_I2,) * (2 if k == 2 else 4)
    return StandardForm(k, tuple(Slot((_I2,) * k, us, (_I2,) * k) for _ in range(N)))


def _wire_products(G, k: int, ctrl: int):
    """For a segment whose only control wire is `ctrl`: per control value, the
    ordered product acting on each other wire."""
    prods = {w: [_I2.copy(), _I2.copy()] for w in range(1, k + 1) if w != ctrl}
    for g in G:
        for v in (0, 1):
            prods[g.c][v] = g.us[v] @ prods[g.c][v]
    return prods


def _diag_eig(u: np.ndarray):
    """u = s diag(d) s^dag with s unitary (u normal)."""
    t, s = scipy.linalg.schur(u, output="complex")
    return s, np.diag(t)


def _diag_to_slot(D: np.ndarray) -> tuple:
    """Diagonal 8x8 (wire order 1,2,3) as the C_{1,3;2} target list."""
    d = np.diag(D).reshape(2, 2, 2)
    return tuple(np.diag(d[a, :, c]) for a in (0, 1) for c in (0, 1))


def _reduce_k2(G) -> tuple[Slot, str]:
    if not G:
        return Slot((_I2, _I2), (_I2, _I2), (_I2, _I2)), "empty"
    ctrl = G[0].a
    p = _wire_products(G, 2, ctrl)
    if ctrl == 1:
        u0, u1 = p[2]
        return Slot((_I2, _I2), (u0, u1), (_I2, _I2)), "merged (1,1;2)"
    # (2,2;1): sum_b x_b (x) |b><b| = (s (x) I) [sum_a |a><a| (x) diag(..)] (s^dag x0 (x) I)
    x0, x1 = p[1]
    s, d = _diag_eig(x1 @ dagger(x0))
    # middle factor is 1 when b=0 and d_a when b=1: read it as wire 1 controlling wire 2
    us = (np.diag([1, d[0]]), np.diag([1, d[1]]))
    return Slot((dagger(s) @ x0, _I2), us, (s, _I2)), "(2,2;1) relabelled"


def _reduce_k3(G) -> tuple[Slot, str]:
    eye3 = (_I2,) * 3
    if not G:
        return Slot(eye3, (_I2,) * 4, eye3), "empty"
    ctrls = {x for g in G for x in g.controls}
    tgts = {g.c for g in G}
    if ctrls <= {1, 3} and tgts == {2}:
        # already fully controlled by wires 1 and 3
        us = []
        for a in (0, 1):
            for c in (0, 1):
                u = _I2
                for g in G:
                    bits = {1: a, 3: c}
                    idx = bits[g.a] if g.a == g.b else 2 * bits[g.a] + bits[g.b]
                    u = g.us[idx] @ u
                us.append(u)
        return Slot(eye3, tuple(us), eye3), "iii: direct"
    if len(ctrls) == 1 and not (ctrls & tgts):
        # one control wire fanning out to both others: diagonalise per target wire
        w = next(iter(ctrls))
        prods = _wire_products(G, 3, w)
        pre, post, diag_parts = [_I2] * 3, [_I2] * 3, {}
        for t, (v0, v1) in prods.items():
            s, d = _diag_eig(v1 @ dagger(v0))
            pre[t - 1] = dagger(s) @ v0
            post[t - 1] = s
            diag_parts[t] = (np.ones(2, dtype=complex), d)
        D = np.zeros(8, dtype=complex)
        for idx in range(8):
            bits = [(idx >> 2) & 1, (idx >> 1) & 1, idx & 1]
            val = 1.0 + 0j
            for t, parts in diag_parts.items():
                val *= parts[bits[w - 1]][bits[t - 1]]
            D[idx] = val
        return Slot(tuple(pre), _diag_to_slot(np.diag(D)), tuple(post)), f"i: single control wire {w}"
    if 2 in ctrls and 2 in tgts:
        # outer wire o controls 2, wire 2 controls outer wire t
        t = next(g.c for g in G if g.a == 2)
        o = 4 - t
        before, block, after = [], [], []
        dots = [n for n, g in enumerate(G) if g.a == 2]
        for n, g in enumerate(G):
            (before if n < dots[0] else after if n > dots[-1] else block).append(g)
        y0, y1 = _I2.copy(), _I2.copy()
        for g in block:
            y0, y1 = g.us[0] @ y0, g.us[1] @ y1
        s, d = _diag_eig(y1 @ dagger(y0))
        us = {}
        for ov in (0, 1):
            pb = pa = _I2
            for g in before:
                pb = g.us[ov] @ pb
            for g in after:
                pa = g.us[ov] @ pa
            for tv in (0, 1):
                E = np.diag([1, d[tv]])
                us[(ov, tv)] = pa @ E @ pb
        pre, post = [_I2] * 3, [_I2] * 3
        pre[t - 1], post[t - 1] = dagger(s) @ y0, s
        bits_of = (lambda a, c: (a, c)) if o == 1 else (lambda a, c: (c, a))
        slot_us = tuple(us[bits_of(a, c)] for a in (0, 1) for c in (0, 1))
        return Slot(tuple(pre), slot_us, tuple(post)), f"ii: relay {o}->2->{t}"
    raise ConversionError(f"segment {list(G)!r} does not fit a three-wire reduction")


def simulate_by_standard_form(circ: ConvertedCircuit, tol: float = 1e-9) -> StandardForm:
    """Template parameters reproducing circ (modulo global phase), one slot per column."""
    if circ.k not in (2, 3):
        raise ConversionError(f"no standard form is known for k={circ.k}")
    slots, cases = [], []
    for col in circ.columns:
        rep = validate_segment(col.gates, circ.k)
        if not rep.ok:
            raise ConversionError("invalid segment: " + "; ".join(m for _, _, m in rep.violations))
        slot, case = (_reduce_k2 if circ.k == 2 else _reduce_k3)(list(col.gates))
        pre = tuple(p @ q for p, q in zip(slot.pre, col.pre))
        post = tuple(q @ p for p, q in zip(slot.post, col.post))
        slots.append(Slot(pre, slot.us, post))
        cases.append(case)
    form = StandardForm(circ.k, tuple(slots), tuple(cases))
    err = gate_distance(form.matrix(), circ.unitary())
    if err > tol:
        raise ConversionError(f"internal: standard form mismatch {err:.3e}")
    return form


# -- random circuits -------------------------------------------------------------


def random_gate(k: int, rng: np.random.Generator) -> ControlledGateDesc:
    if k < 2:
        raise ConversionError("need at least two wires")
    three = k >= 3 and rng.random() < 0.4
    if three:
        a, c, b = sorted(rng.choice(np.arange(1, k + 1), size=3, replace=False))
        if rng.random() < 0.5:
            a, b = b, a
        return gate(a, b, c, [random_unitary(2, rng) for _ in range(4)])
    a, c = rng.choice(np.arange(1, k + 1), size=2, replace=False)
    return gate(a, a, c, [random_unitary(2, rng) for _ in range(2)])


def random_segment(k: int, rng: np.random.Generator, max_gates: int = 6, tries: int = 60) -> list:
    n = int(rng.integers(0, max_gates + 1))
    G: list = []
    for _ in range(tries):
        if len(G) >= n:
            break
        g = random_gate(k, rng)
        if validate_segment(G + [g], k).ok:
            G.append(g)
    return G


def random_circuit(k: int, N: int, rng: np.random.Generator, max_gates: int = 6) -> ConvertedCircuit:
    cols = []
    for _ in range(N):
        pre = tuple(random_unitary(2, rng) for _ in range(k))
        post = tuple(random_unitary(2, rng) for _ in range(k))
        cols.append(Column(pre, tuple(random_segment(k, rng, max_gates)), post))
    return ConvertedCircuit(k, tuple(cols))


# -- serialisation ----------------------------------------------------------------


def _u_keys(g: ControlledGateDesc) -> list[str]:
    return ["0", "1"] if g.a == g.b else ["00", "01", "10", "11"]


def gate_to_json(g: ControlledGateDesc) -> dict:
    return {"ctrl": [g.a, g.b], "tgt": g.c,
            "u": {key: matrix_to_json(u) for key, u in zip(_u_keys(g), g.us)}}


def gate_from_json(doc: dict) -> ControlledGateDesc:
    try:
        ctrl = doc["ctrl"]
        a, b = (ctrl[0], ctrl[-1]) if isinstance(ctrl, list) else (ctrl, ctrl)
        c = doc["tgt"]
        udoc = doc.get("u")
    except (KeyError, TypeError, IndexError) as exc:
        raise ConversionError(f"malformed gate: {exc}") from exc
    if udoc is None:
        return gate(a, b, c)
    keys = ["0", "1"] if a == b else ["00", "01", "10", "11"]
    try:
        us = [matrix_from_json(udoc[key]) for key in keys]
    except KeyError as exc:
        raise ConversionError(f"gate missing target unitary {exc}") from exc
    return gate(a, b, c, us)


def circuit_to_json(circ: ConvertedCircuit) -> dict:
    return {"wires": circ.k, "columns": [
        {"pre": [matrix_to_json(u) for u in col.pre],
         "gates": [gate_to_json(g) for g in col.gates],
         "post": [matrix_to_json(u) for u in col.post]} for col in circ.columns]}


def circuit_from_json(doc: dict) -> ConvertedCircuit:
    try:
        k = int(doc["wires"])
        cols_doc = doc["columns"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConversionError(f"malformed circuit: {exc}") from exc
    cols = []
    for cd in cols_doc:
        pre = tuple(matrix_from_json(u) for u in cd.get("pre", [])) or (_I2,) * k
        post = tuple(matrix_from_json(u) for u in cd.get("post", [])) or (_I2,) * k
        if len(pre) != k or len(post) != k:
            raise ConversionError("local layers must have one matrix per wire")
        cols.append(Column(pre, tuple(gate_from_json(g) for g in cd.get("gates", [])), post))
    return ConvertedCircuit(k, tuple(cols))


def circuit_to_dot(circ: ConvertedCircuit) -> str:
    """Graphviz sketch: one node per wire position, gates as labelled edges."""
    lines = ["digraph converted {", "  rankdir=LR;", "  node [shape=point];"]
    k = circ.k
    slot = 0
    for i in range(1, k + 1):
        lines.append(f'  w{i}_0 [shape=plaintext,label="q{i}"];')
    for j, col in enumerate(circ.columns, start=1):
        for g in col.gates:
            slot += 1
            for i in range(1, k + 1):
                lines.append(f"  w{i}_{slot - 1} -> w{i}_{slot} [arrowhead=none];")
            for x in g.controls:
                lines.append(f'  w{x}_{slot} -> w{g.c}_{slot} [label="col{j}:{x}",style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# the worked example with seven gates on six wires
PARALLEL_EXAMPLE = ((1, 1, 2), (4, 4, 2), (1, 4, 2), (4, 4, 5), (4, 4, 3), (5, 5, 6), (4, 4, 5))
FORBIDDEN_EXAMPLE = ((2, 2, 3), (1, 1, 2), (2, 2, 3))

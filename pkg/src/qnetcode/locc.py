"""Branch-exact execution of LOCC protocols over a network resource state.

A protocol is a flat list of node-local instructions. The executor carries
every measurement branch at once as a stacked amplitude array (branch axis
first), so classical control becomes boolean masks over that axis.

Bell pairs are materialised lazily: a pair enters the register the first time
one of its qubits is touched. Untouched pairs are tensor factors that no
instruction can see, so this is the same state as starting from the full
resource state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .linalg import (
    CNOT,
    H,
    NORM_TOL,
    PHI_PLUS,
    X,
    Z,
    Qubit,
    StateVector,
    apply_to_axes,
    is_unitary,
    partial_trace,
)
from .network import Network, node_name

_BELL_PAULIS = (np.eye(2), Z, X, Z @ X)  # outcome k <-> (u_k (x) I)|Phi+>, k = 2*x_bit + z_bit
_BELL_BRAS = [np.conj(np.kron(u, np.eye(2)) @ PHI_PLUS).reshape(2, 2) for u in _BELL_PAULIS]
_DROP = 1e-24
MERGE_TOL = 1e-12


class ProtocolError(ValueError):
    pass


# -- instructions ----------------------------------------------------------


@dataclass(frozen=True)
class AddAncilla:
    node: Hashable
    label: str


@dataclass(frozen=True, eq=False)
class LocalUnitary:
    node: Hashable
    labels: tuple
    matrix: np.ndarray
    name: str = ""


@dataclass(frozen=True)
class Measure:
    node: Hashable
    labels: tuple  # one qubit (computational) or two (Bell)
    basis: str  # "z" | "bell"
    vars: tuple  # one var, or (z_bit, x_bit) for Bell outcomes


@dataclass(frozen=True)
class ClassicalSend:
    src: Hashable
    dst: Hashable
    var: str


@dataclass(frozen=True)
class Predicate:
    op: str  # "xor" | "and"
    vars: tuple

    def evaluate(self, bits: np.ndarray, index: dict) -> np.ndarray:
        cols = bits[:, [index[v] for v in self.vars]]
        if self.op == "xor":
            return (np.sum(cols, axis=1) % 2) == 1
        if self.op == "and":
            return np.all(cols == 1, axis=1)
        raise ProtocolError(f"unknown predicate op {self.op!r}")


@dataclass(frozen=True, eq=False)
class Conditional:
    node: Hashable
    predicate: Predicate
    body: tuple  # LocalUnitary instructions at the same node


@dataclass(frozen=True)
class DiscardQubit:
    node: Hashable
    label: str


Instruction = AddAncilla | LocalUnitary | Measure | ClassicalSend | Conditional | DiscardQubit


@dataclass(frozen=True, eq=False)
class LoccProtocol:
    network: Network
    instructions: tuple
    inputs: tuple  # ((label, node), ...) in logical input order
    outputs: tuple  # output labels in logical order
    consumed_edges: tuple  # declared
    name: str = ""

    @property
    def input_labels(self) -> list[str]:
        return [l for l, _ in self.inputs]

    def measurement_count(self) -> int:
        return sum(1 for ins in self.instructions if isinstance(ins, Measure))


def _touched(ins) -> list[str]:
    if isinstance(ins, (LocalUnitary, Measure)):
        return list(ins.labels)
    if isinstance(ins, DiscardQubit):
        return [ins.label]
    if isinstance(ins, Conditional):
        return [l for b in ins.body for l in b.labels]
    return []


# -- validation ------------------------------------------------------------


@dataclass
class ValidationReport:
    ok: bool
    violations: list
    consumed_edges: list
    undeclared: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": self.violations, "consumed_edges": self.consumed_edges}


def validate(protocol: LoccProtocol, network: Network | None = None) -> ValidationReport:
    net = network or protocol.network
    qnode = net.qubit_nodes()
    edge_of = {}
    for e in net.edges:
        edge_of[e.qa] = e.id
        edge_of[e.qb] = e.id
    viol: list[str] = []
    for label, node in protocol.inputs:
        if label in qnode:
            viol.append(f"input label {label} collides with a resource qubit")
        qnode[label] = node
    live = {l for l, _ in protocol.inputs} | set(qnode)
    dead: set[str] = set()
    consumed: list[str] = []
    assigned: set[str] = set()
    known: dict = {}

    def use(label, node, where):
        if label in dead:
            viol.append(f"{where}: qubit {label} already measured or discarded")
            return
        if label not in live or label not in qnode:
            viol.append(f"{where}: unknown or foreign qubit {label}")
            return
        if qnode[label] != node:
            viol.append(f"{where}: locality violation, {label} sits at {node_name(qnode[label])}, "
                        f"instruction at {node_name(node)}")
        eid = edge_of.get(label)
        if eid is not None and eid not in consumed:
            consumed.append(eid)

    for pos, ins in enumerate(protocol.instructions):
        where = f"#{pos} {type(ins).__name__}"
        if isinstance(ins, AddAncilla):
            if ins.label in qnode or ins.label in dead:
                viol.append(f"{where}: label {ins.label} already exists")
            qnode[ins.label] = ins.node
            live.add(ins.label)
        elif isinstance(ins, LocalUnitary):
            if len(set(ins.labels)) != len(ins.labels):
                viol.append(f"{where}: repeated target qubits")
            if np.shape(ins.matrix) != (2 ** len(ins.labels),) * 2 or not is_unitary(ins.matrix, 1e-10):
                viol.append(f"{where}: gate is not a unitary of matching arity")
            for l in ins.labels:
                use(l, ins.node, where)
        elif isinstance(ins, Measure):
            nexp = 1 if ins.basis == "z" else 2
            if ins.basis not in ("z", "bell") or len(ins.labels) != nexp or len(ins.vars) != nexp:
                viol.append(f"{where}: malformed measurement")
            for l in ins.labels:
                use(l, ins.node, where)
            for l in ins.labels:
                dead.add(l)
                live.discard(l)
            for v in ins.vars:
                if v in assigned:
                    viol.append(f"{where}: classical variable {v} assigned twice")
                assigned.add(v)
                known.setdefault(ins.node, set()).add(v)
        elif isinstance(ins, ClassicalSend):
            if ins.var not in known.get(ins.src, set()):
                viol.append(f"{where}: {node_name(ins.src)} does not hold {ins.var}")
            known.setdefault(ins.dst, set()).add(ins.var)
        elif isinstance(ins, Conditional):
            missing = [v for v in ins.predicate.vars if v not in known.get(ins.node, set())]
            if missing:
                viol.append(f"{where}: {node_name(ins.node)} conditions on unknown bits {missing}")
            for b in ins.body:
                if not isinstance(b, LocalUnitary) or b.node != ins.node:
                    viol.append(f"{where}: conditional body must be local unitaries at its node")
                    continue
                for l in b.labels:
                    use(l, ins.node, where)
        elif isinstance(ins, DiscardQubit):
            use(ins.label, ins.node, where)
            dead.add(ins.label)
            live.discard(ins.label)
        else:
            viol.append(f"{where}: unknown instruction")
    for l in protocol.outputs:
        if l not in live:
            viol.append(f"output {l} is not live at the end")
    declared = list(protocol.consumed_edges)
    if sorted(declared) != sorted(consumed):
        viol.append(f"declared consumed edges {sorted(declared)} differ from used {sorted(consumed)}")
    return ValidationReport(not viol, viol, consumed)


# -- execution -------------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    outcomes: dict  # var -> bit (representative transcript when merged)
    probability: float
    state: StateVector  # unnormalised; squared norm = probability
    multiplicity: int = 1


@dataclass(frozen=True)
class BranchSet:
    branches: tuple
    outputs: tuple
    merged: bool = False

    def total_probability(self) -> float:
        return float(sum(b.probability for b in self.branches))

    def leaf_count(self) -> int:
        return int(sum(b.multiplicity for b in self.branches))

    def fidelities(self, target: StateVector) -> list[float]:
        """Fidelity of each branch's reduced state on target.labels with the target."""
        t = np.asarray(target.amplitudes)
        t = t / np.linalg.norm(t)
        out = []
        for b in self.branches:
            st = b.state
            norm = np.linalg.norm(st.amplitudes)
            if norm == 0:
                out.append(0.0)
                continue
            st = StateVector(st.register, st.amplitudes / norm)
            if sorted(target.labels) == sorted(st.labels):
                v = st.reorder(target.labels).amplitudes
                out.append(float(abs(np.vdot(t, v)) ** 2))
            else:
                rho = partial_trace(st, target.labels)
                out.append(float(np.real(np.conj(t) @ rho @ t)))
        return out


def _future_vars(instructions) -> list[set]:
    """fut[i] = classical variables read by predicates at or after instruction i."""
    fut = [set() for _ in range(len(instructions) + 1)]
    for i in range(len(instructions) - 1, -1, -1):
        fut[i] = set(fut[i + 1])
        ins = instructions[i]
        if isinstance(ins, Conditional):
            fut[i] |= set(ins.predicate.vars)
    return fut


class _Run:
    def __init__(self, protocol: LoccProtocol, state: StateVector):
        net = protocol.network
        self.pairs = {}
        for e in net.edges:
            self.pairs[e.qa] = (e.qa, e.qb)
            self.pairs[e.qb] = (e.qa, e.qb)
        self.qnode = dict(net.qubit_nodes())
        self.qnode.update(dict(protocol.inputs))
        for q in state.register:
            self.qnode.setdefault(q.label, q.node)
        self.labels = list(state.labels)
        self.psi = state.tensor()[None, ...].copy()
        varnames = []
        for ins in protocol.instructions:
            if isinstance(ins, Measure):
                varnames += list(ins.vars)
        self.var_index = {v: i for i, v in enumerate(varnames)}
        self.bits = -np.ones((1, len(varnames)), dtype=np.int8)
        self.mult = np.ones(1, dtype=np.int64)

    def axes(self, labels) -> list[int]:
        for l in labels:
            if l not in self.labels:
                pair = self.pairs.get(l)
                if pair is None:
                    raise ProtocolError(f"qubit {l} is not live")
                self.psi = np.multiply.outer(self.psi, PHI_PLUS.reshape(2, 2))
                self.labels += list(pair)
        return [self.labels.index(l) + 1 for l in labels]

    def apply(self, labels, mat, mask=None):
        ax = self.axes(labels)
        if mask is None:
            self.psi = apply_to_axes(self.psi, mat, ax)
        elif mask.any():
            self.psi[mask] = apply_to_axes(self.psi[mask], mat, ax)

    def _split(self, blocks, new_bits):
        self.psi = np.concatenate(blocks, axis=0)
        nb = len(blocks)
        self.bits = np.tile(self.bits, (nb, 1))
        self.mult = np.tile(self.mult, nb)
        for cols in new_bits:  # list of (var, per-block values)
            col = self.var_index[cols[0]]
            b = len(self.bits) // nb
            self.bits[:, col] = np.repeat(np.asarray(cols[1], dtype=np.int8), b)
        w = np.sum(np.abs(self.psi.reshape(len(self.psi), -1)) ** 2, axis=1)
        keep = w > _DROP
        self.psi, self.bits, self.mult = self.psi[keep], self.bits[keep], self.mult[keep]

    def measure(self, ins: Measure, rng=None):
        ax = self.axes(ins.labels)
        if ins.basis == "z":
            blocks = [np.take(self.psi, o, axis=ax[0]) for o in (0, 1)]
            new_bits = [(ins.vars[0], [0, 1])]
        else:
            blocks = [np.tensordot(bra, self.psi, axes=([0, 1], ax)) for bra in _BELL_BRAS]
            blocks = [np.moveaxis(b, 0, 0) for b in blocks]
            # tensordot puts the remaining axes in order, branch axis first (ax >= 1)
            new_bits = [(ins.vars[0], [0, 1, 0, 1]), (ins.vars[1], [0, 0, 1, 1])]
        for l in ins.labels:
            self.labels.remove(l)
        if rng is not None:
            w = np.array([np.sum(np.abs(b) ** 2) for b in blocks])
            pick = int(rng.choice(len(blocks), p=w / w.sum()))
            self.psi = blocks[pick]
            for var, vals in new_bits:
                self.bits[:, self.var_index[var]] = vals[pick]
            return
        self._split(blocks, new_bits)

    def discard(self, label: str):
        ax = self.axes([label])[0]
        t = np.moveaxis(self.psi, ax, -1)
        shp = t.shape
        flat = t.reshape(shp[0], -1, 2)
        out = np.empty(flat.shape[:2], dtype=complex)
        for b in range(shp[0]):
            u, s, vh = np.linalg.svd(flat[b], full_matrices=False)
            if s[0] > 0 and s[1] / s[0] > 1e-9:
                raise ProtocolError(f"discarding {label} which is entangled with the rest")
            out[b] = u[:, 0] * s[0]
        self.psi = out.reshape(shp[:-1])
        self.labels.remove(label)

    def merge(self, live_vars: set):
        b = len(self.psi)
        if b < 2:
            return
        cols = sorted(self.var_index[v] for v in live_vars if v in self.var_index)
        flat = self.psi.reshape(b, -1)
        w = np.sum(np.abs(flat) ** 2, axis=1)
        unit = flat / np.sqrt(w)[:, None]
        keys = [tuple(row) for row in self.bits[:, cols]]
        groups: dict = {}
        for i, k in enumerate(keys):
            groups.setdefault(k, []).append(i)
        keep, scale = [], []
        mult = self.mult.copy()
        for idx in groups.values():
            idx = np.array(idx)
            done = np.zeros(len(idx), dtype=bool)
            ov = np.abs(unit[idx].conj() @ unit[idx].T)
            for a in range(len(idx)):
                if done[a]:
                    continue
                same = (~done) & (ov[a] >= 1 - MERGE_TOL)
                same[a] = True
                done |= same
                members = idx[same]
                keep.append(idx[a])
                scale.append(np.sqrt(w[members].sum() / w[idx[a]]))
                mult[idx[a]] = self.mult[members].sum()
        order = np.argsort(keep, kind="stable")
        keep = np.array(keep)[order]
        scale = np.array(scale)[order]
        self.psi = self.psi[keep] * scale.reshape((-1,) + (1,) * (self.psi.ndim - 1))
        self.bits = self.bits[keep]
        self.mult = mult[keep]


def execute(protocol: LoccProtocol, state: StateVector, merge: bool = False,
            check: bool = True, rng: np.random.Generator | None = None,
            keep: Sequence[str] = ()) -> BranchSet:
    """Run every measurement branch of `protocol` on `state`.

    `state` must contain the protocol's input labels; extra qubits (for example
    a purifying reference) ride along untouched. With merge=True branches whose
    states agree up to a scalar and whose still-relevant classical bits agree
    are combined (their probabilities add, `multiplicity` counts the leaves).
    Variables in `keep` are never merged away, so their statistics survive.
    With `rng` one branch is sampled instead of enumerating all of them.
    """
    if check:
        rep = validate(protocol)
        if not rep.ok:
            raise ProtocolError("protocol failed validation: " + "; ".join(rep.violations))
    missing = [l for l in protocol.input_labels if l not in state.labels]
    if missing:
        raise ProtocolError(f"input state lacks protocol inputs {missing}")
    if abs(state.norm() - 1) > NORM_TOL:
        raise ProtocolError("input state is not normalized")
    run = _Run(protocol, state)
    fut = _future_vars(protocol.instructions)
    for pos, ins in enumerate(protocol.instructions):
        if isinstance(ins, AddAncilla):
            run.psi = np.multiply.outer(run.psi, np.array([1, 0], dtype=complex))
            run.labels.append(ins.label)
            run.qnode[ins.label] = ins.node
        elif isinstance(ins, LocalUnitary):
            run.apply(ins.labels, ins.matrix)
        elif isinstance(ins, Measure):
            run.measure(ins, rng)
            if merge and rng is None:
                run.merge(fut[pos + 1] | set(keep))
        elif isinstance(ins, Conditional):
            mask = ins.predicate.evaluate(run.bits, run.var_index)
            for b in ins.body:
                run.apply(b.labels, b.matrix, mask)
        elif isinstance(ins, DiscardQubit):
            run.discard(ins.label)
    if merge and rng is None:
        run.merge(set(keep))
    branches = []
    inv = {i: v for v, i in run.var_index.items()}
    for b in range(len(run.psi)):
        amps = run.psi[b].reshape(-1)
        reg = [Qubit(l, run.qnode.get(l)) for l in run.labels]
        outcomes = {inv[i]: int(v) for i, v in enumerate(run.bits[b]) if v >= 0}
        branches.append(Branch(outcomes, float(np.vdot(amps, amps).real),
                               StateVector(reg, amps), int(run.mult[b])))
    return BranchSet(tuple(branches), tuple(protocol.outputs), merge)


# -- protocol construction ---------------------------------------------------


def controlled_matrix(us: Sequence[np.ndarray]) -> np.ndarray:
    """sum_c |c><c| (x) us[c] for 2 or 4 target unitaries."""
    nc = len(us)
    m = np.zeros((2 * nc, 2 * nc), dtype=complex)
    for c, u in enumerate(us):
        m[2 * c: 2 * c + 2, 2 * c: 2 * c + 2] = u
    return m


class ProtocolBuilder:
    """Accumulates instructions while tracking where each logical wire lives."""

    def __init__(self, network: Network, inputs: Sequence[tuple[str, Hashable]], name: str = ""):
        self.network = network
        self.name = name
        self.inputs = tuple((l, n) for l, n in inputs)
        self.instructions: list = []
        self.node_of = dict(network.qubit_nodes())
        self.node_of.update(dict(self.inputs))
        self.used_edges: list[str] = []
        self.wires: dict = {}  # optional logical wire -> current label, kept by callers
        self._counter = 0

    def _fresh(self, stem: str) -> str:
        self._counter += 1
        return f"{stem}{self._counter}"

    def _touch(self, labels):
        for l in labels:
            for e in self.network.edges:
                if l in (e.qa, e.qb) and e.id not in self.used_edges:
                    self.used_edges.append(e.id)

    def add_ancilla(self, node, stem: str = "a") -> str:
        label = self._fresh(stem)
        self.instructions.append(AddAncilla(node, label))
        self.node_of[label] = node
        return label

    def local(self, labels: Sequence[str], matrix, name: str = ""):
        labels = tuple(labels)
        node = self.node_of[labels[0]]
        self._touch(labels)
        self.instructions.append(LocalUnitary(node, labels, np.asarray(matrix, dtype=complex), name))

    def measure(self, label: str) -> str:
        var = self._fresh("m")
        node = self.node_of[label]
        self._touch([label])
        self.instructions.append(Measure(node, (label,), "z", (var,)))
        return var

    def bell_measure(self, l1: str, l2: str) -> tuple[str, str]:
        vz, vx = self._fresh("bz"), self._fresh("bx")
        self._touch([l1, l2])
        self.instructions.append(Measure(self.node_of[l1], (l1, l2), "bell", (vz, vx)))
        return vz, vx

    def send(self, src, dst, var: str):
        if src != dst:
            self.instructions.append(ClassicalSend(src, dst, var))

    def conditional(self, node, vars: Sequence[str], body: Sequence[tuple], op: str = "xor"):
        items = []
        for labels, mat, *rest in body:
            self._touch(labels)
            items.append(LocalUnitary(node, tuple(labels), np.asarray(mat, dtype=complex),
                                      rest[0] if rest else ""))
        self.instructions.append(Conditional(node, Predicate(op, tuple(vars)), tuple(items)))

    def teleport(self, label: str, edge_id: str) -> str:
        """One hop over `edge_id`; returns the receiver-side label now holding the state."""
        if edge_id in self.used_edges:
            raise ProtocolError(f"edge {edge_id} already consumed")
        e = self.network.edge(edge_id)
        src = self.node_of[label]
        dst = e.other(src)
        qs, qd = e.qubit_at(src), e.qubit_at(dst)
        vz, vx = self.bell_measure(label, qs)
        self.send(src, dst, vz)
        self.send(src, dst, vx)
        self.conditional(dst, [vx], [((qd,), X, "X")])
        self.conditional(dst, [vz], [((qd,), Z, "Z")])
        return qd

    def teleport_path(self, label: str, nodes: Sequence) -> str:
        cur = label
        for a, b in zip(nodes[:-1], nodes[1:]):
            if self.node_of[cur] != a:
                raise ProtocolError(f"path starts at {node_name(a)} but {cur} is elsewhere")
            cur = self.teleport(cur, self.network.edge_between(a, b).id)
        return cur

    def fully_controlled(self, controls: Sequence[str], target: str, us: Sequence[np.ndarray],
                         paths: Sequence[Sequence] | None = None):
        """C_{l,m;n} (two controls, four target unitaries) or C_{l;n} (one control, two).

        Each control is copied onto a fresh ancilla, the copy is teleported to the
        target node along `paths` (default: straight column path), the gate acts
        locally, then the copies are measured in the X basis and a Z correction is
        sent back to the control.
        """
        n_node = self.node_of[target]
        if len(controls) not in (1, 2) or len(us) != 2 ** len(controls):
            raise ProtocolError("need 1 control with 2 unitaries or 2 controls with 4")
        copies = []
        for idx, c in enumerate(controls):
            c_node = self.node_of[c]
            a = self.add_ancilla(c_node, "anc")
            self.local((c, a), CNOT, "CNOT")
            path = paths[idx] if paths else column_path(c_node, n_node)
            copies.append(self.teleport_path(a, path))
        self.local(tuple(copies) + (target,), controlled_matrix(us), "C")
        for c, cp in zip(controls, copies):
            self.local((cp,), H, "H")
            v = self.measure(cp)
            self.send(n_node, self.node_of[c], v)
            self.conditional(self.node_of[c], [v], [((c,), Z, "Z")])

    def extend(self, protocol: LoccProtocol):
        """Append another protocol's instructions (same network, already renamed)."""
        for ins in protocol.instructions:
            if isinstance(ins, AddAncilla):
                self.node_of[ins.label] = ins.node
            self._touch(_touched(ins))
            self.instructions.append(ins)

    def build(self, outputs: Sequence[str]) -> LoccProtocol:
        return LoccProtocol(self.network, tuple(self.instructions), self.inputs, tuple(outputs),
                            tuple(self.used_edges), self.name)


def column_path(a, b) -> list:
    (i, j), (i2, j2) = a, b
    if j != j2:
        raise ProtocolError("column path needs nodes in the same column")
    step = 1 if i2 > i else -1
    return [(r, j) for r in range(i, i2 + step, step)]


def fully_controlled_gate(network: Network, l: int, m: int, n: int, us, column: int = 1,
                          ) -> LoccProtocol:
    """Stand-alone protocol for C_{l,m;n} (l == m gives C_{l;n}) on column `column`.

    Data qubits are inputs named q{l}, q{m}, q{n} at v_{l,j}, v_{m,j}, v_{n,j}.
    """
    if l == m:
        if l == n:
            raise ProtocolError("control and target coincide")
    elif not (l < n < m or m < n < l):
        raise ProtocolError("indices must satisfy l < n < m or m < n < l")
    wires = sorted({l, m, n})
    inputs = [(f"q{i}", (i, column)) for i in wires]
    b = ProtocolBuilder(network, inputs, f"C({l},{m};{n})")
    ctrls = [f"q{l}"] if l == m else [f"q{l}", f"q{m}"]
    b.fully_controlled(ctrls, f"q{n}", list(us))
    return b.build([f"q{i}" for i in wires])


def teleport_protocol(network: Network, path: Sequence) -> LoccProtocol:
    b = ProtocolBuilder(network, [("psi", path[0])], "teleport")
    out = b.teleport_path("psi", path)
    return b.build([out])


def translate(protocol: LoccProtocol, network: Network, node_map: dict, label_map: dict,
              ) -> LoccProtocol:
    """Rename nodes and qubits of a protocol (for named networks over a cluster)."""
    nm = lambda n: node_map.get(n, n)  # noqa: E731
    lm = lambda l: label_map.get(l, l)  # noqa: E731

    def tr(ins):
        if isinstance(ins, AddAncilla):
            return AddAncilla(nm(ins.node), lm(ins.label))
        if isinstance(ins, LocalUnitary):
            return LocalUnitary(nm(ins.node), tuple(map(lm, ins.labels)), ins.matrix, ins.name)
        if isinstance(ins, Measure):
            return Measure(nm(ins.node), tuple(map(lm, ins.labels)), ins.basis, ins.vars)
        if isinstance(ins, ClassicalSend):
            return ClassicalSend(nm(ins.src), nm(ins.dst), ins.var)
        if isinstance(ins, Conditional):
            return Conditional(nm(ins.node), ins.predicate, tuple(tr(b) for b in ins.body))
        if isinstance(ins, DiscardQubit):
            return DiscardQubit(nm(ins.node), lm(ins.label))
        raise ProtocolError("unknown instruction")

    inv_edges = {c: e for e, c in network.edge_map.items()}
    return LoccProtocol(
        network, tuple(tr(i) for i in protocol.instructions),
        tuple((lm(l), nm(n)) for l, n in protocol.inputs), tuple(map(lm, protocol.outputs)),
        tuple(inv_edges.get(e, e) for e in protocol.consumed_edges), protocol.name,
    )


# -- verification helpers ---------------------------------------------------


def choi_input(labels: Sequence[str], nodes: Sequence) -> StateVector:
    """Maximally entangled state of the inputs with reference qubits ref0.. at node 'ref'."""
    n = len(labels)
    dim = 2**n
    amps = np.eye(dim, dtype=complex).reshape(-1) / np.sqrt(dim)
    reg = [Qubit(l, nd) for l, nd in zip(labels, nodes)] + [Qubit(f"ref{i}", "ref") for i in range(n)]
    return StateVector(reg, amps)


def verify_unitary(protocol: LoccProtocol, U: np.ndarray, rng: np.random.Generator,
                   n_random: int = 20, merge: bool = True, include_choi: bool = True) -> dict:
    """Run basis inputs, `n_random` random inputs (and the Choi state) and compare
    every branch with U|psi> modulo global phase."""
    from .linalg import random_state

    U = np.asarray(U, dtype=complex)
    n = len(protocol.inputs)
    labels = protocol.input_labels
    nodes = [nd for _, nd in protocol.inputs]
    reg = [Qubit(l, nd) for l, nd in zip(labels, nodes)]
    cases = [np.eye(2**n, dtype=complex)[i] for i in range(2**n)]
    cases += [random_state(n, rng) for _ in range(n_random)]
    min_fid, probs, leaves, rows = 1.0, [], 0, []
    out_labels = list(protocol.outputs)
    for vec in cases:
        bs = execute(protocol, StateVector(reg, vec), merge=merge)
        fids = bs.fidelities(StateVector(out_labels, U @ vec))
        min_fid = min(min_fid, min(fids))
        probs.append(bs.total_probability())
        leaves += bs.leaf_count()
        rows.append(bs)
    if include_choi:
        ch = choi_input(labels, nodes)
        bs = execute(protocol, ch, merge=merge)
        target = np.kron(U, np.eye(2**n)) @ ch.amplitudes
        fids = bs.fidelities(StateVector(out_labels + [f"ref{i}" for i in range(n)], target))
        min_fid = min(min_fid, min(fids))
        probs.append(bs.total_probability())
        rows.append(bs)
    return {
        "min_fidelity": float(min_fid),
        "max_probability_defect": float(max(abs(p - 1) for p in probs)),
        "n_inputs": len(cases),
        "branch_sets": rows,
    }


# -- JSON ---------------------------------------------------------------------

def _named_gates() -> dict:
    from . import linalg as la

    return {"I": np.eye(2, dtype=complex), "X": la.X, "Y": la.Y, "Z": la.Z, "H": la.H, "S": la.S,
            "CNOT": la.CNOT, "CZ": la.CZ, "SWAP": la.SWAP}


NAMED_GATES = _named_gates()


def _node_from_json(n):
    return tuple(int(v) for v in n) if isinstance(n, list) else n


def _node_to_json(n):
    return list(n) if isinstance(n, tuple) else n


def _gate_from_json(g) -> np.ndarray:
    from .linalg import matrix_from_json

    if isinstance(g, str):
        if g.upper() not in NAMED_GATES:
            raise ProtocolError(f"unknown gate name {g!r}")
        return NAMED_GATES[g.upper()]
    return matrix_from_json(g)


def _unitary_from_json(d) -> LocalUnitary:
    try:
        return LocalUnitary(_node_from_json(d["node"]), tuple(d["labels"]), _gate_from_json(d["gate"]),
                            d.get("name", ""))
    except KeyError as exc:
        raise ProtocolError(f"unitary instruction missing {exc}") from exc


def instruction_from_json(d: dict):
    try:
        op = d["op"]
        if op == "add_ancilla":
            return AddAncilla(_node_from_json(d["node"]), d["label"])
        if op == "unitary":
            return _unitary_from_json(d)
        if op == "measure":
            labels = tuple(d["labels"])
            basis = d.get("basis", "z")
            return Measure(_node_from_json(d["node"]), labels, basis, tuple(d["vars"]))
        if op == "send":
            return ClassicalSend(_node_from_json(d["from"]), _node_from_json(d["to"]), d["var"])
        if op == "conditional":
            pred = d["predicate"]
            return Conditional(_node_from_json(d["node"]), Predicate(pred.get("op", "xor"), tuple(pred["vars"])),
                               tuple(_unitary_from_json(b) for b in d["then"]))
        if op == "discard":
            return DiscardQubit(_node_from_json(d["node"]), d["label"])
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed instruction {d!r}: {exc}") from exc
    raise ProtocolError(f"unknown instruction op {d.get('op')!r}")


def instruction_to_json(ins) -> dict:
    from .linalg import matrix_to_json

    if isinstance(ins, AddAncilla):
        return {"op": "add_ancilla", "node": _node_to_json(ins.node), "label": ins.label}
    if isinstance(ins, LocalUnitary):
        return {"op": "unitary", "node": _node_to_json(ins.node), "labels": list(ins.labels),
                "gate": matrix_to_json(ins.matrix), "name": ins.name}
    if isinstance(ins, Measure):
        return {"op": "measure", "node": _node_to_json(ins.node), "labels": list(ins.labels),
                "basis": ins.basis, "vars": list(ins.vars)}
    if isinstance(ins, ClassicalSend):
        return {"op": "send", "from": _node_to_json(ins.src), "to": _node_to_json(ins.dst), "var": ins.var}
    if isinstance(ins, Conditional):
        return {"op": "conditional", "node": _node_to_json(ins.node),
                "predicate": {"op": ins.predicate.op, "vars": list(ins.predicate.vars)},
                "then": [instruction_to_json(b) for b in ins.body]}
    if isinstance(ins, DiscardQubit):
        return {"op": "discard", "node": _node_to_json(ins.node), "label": ins.label}
    raise ProtocolError("unknown instruction")


def protocol_to_json(p: LoccProtocol) -> dict:
    net = p.network
    ndoc = {"kind": net.kind, "k": net.k, "N": net.N}
    if net.kind == "generalized":
        ndoc["vertical_edges"] = [[e.a[0], e.b[0], e.a[1]] for e in net.vertical]
    return {
        "name": p.name,
        "network": ndoc,
        "inputs": [{"label": l, "node": _node_to_json(n)} for l, n in p.inputs],
        "outputs": list(p.outputs),
        "consumed_edges": list(p.consumed_edges),
        "instructions": [instruction_to_json(i) for i in p.instructions],
    }


def protocol_from_json(doc: dict) -> LoccProtocol:
    from .network import NetworkError, load_network

    try:
        net = load_network(doc["network"])
        inputs = tuple((d["label"], _node_from_json(d["node"])) for d in doc.get("inputs", []))
        ins = tuple(instruction_from_json(d) for d in doc.get("instructions", []))
        return LoccProtocol(net, ins, inputs, tuple(doc.get("outputs", [])),
                            tuple(doc.get("consumed_edges", [])), doc.get("name", ""))
    except (KeyError, TypeError, NetworkError) as exc:
        raise ProtocolError(f"malformed protocol document: {exc}") from exc

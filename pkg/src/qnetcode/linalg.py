"""Dense state vectors over labeled qubit registers and the small amount of
linear algebra the rest of the package is built on.

Bit order is big-endian everywhere: the first qubit of a register is the most
significant bit of the amplitude index.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

UNITARY_TOL = 1e-12
NORM_TOL = 1e-12
RECON_TOL = 1e-10
RANK_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j]).astype(complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)

Node = Hashable


class LinalgError(ValueError):
    pass


def kron(*ops) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def ket(bits: str) -> np.ndarray:
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.asarray(m).T)


def unitarity_error(m) -> float:
    m = np.asarray(m, dtype=complex)
    return float(np.max(np.abs(dagger(m) @ m - np.eye(m.shape[0]))))


def is_unitary(m, tol: float = UNITARY_TOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return unitarity_error(m) <= tol


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary (QR of a Ginibre matrix with phase fix)."""
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_state(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(2**n_qubits) + 1j * rng.standard_normal(2**n_qubits)
    return v / np.linalg.norm(v)


def svd(m):
    """SVD with singular values sorted descending: m = u @ diag(s) @ vh."""
    u, s, vh = np.linalg.svd(np.asarray(m, dtype=complex), full_matrices=False)
    return u, s, vh


def numerical_rank(values, rel_tol: float = RANK_TOL) -> int:
    values = np.asarray(values, dtype=float)
    if values.size == 0 or values.max() <= 0:
        return 0
    return int(np.sum(values / values.max() > rel_tol))


def state_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>|^2 / (|a|^2 |b|^2); insensitive to global phase and scale."""
    a = np.ravel(a)
    b = np.ravel(b)
    na, nb = np.vdot(a, a).real, np.vdot(b, b).real
    if na == 0 or nb == 0:
        return 0.0
    return float(abs(np.vdot(a, b)) ** 2 / (na * nb))


def global_phase_between(a: np.ndarray, b: np.ndarray) -> complex:
    """Unit phase c minimising |a - c b|."""
    ov = np.vdot(np.ravel(b), np.ravel(a))
    if abs(ov) == 0:
        return 1.0 + 0j
    return complex(ov / abs(ov))


def gate_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max-entry distance between two operators after optimal global phase."""
    c = global_phase_between(a, b)
    return float(np.max(np.abs(np.asarray(a) - c * np.asarray(b))))


def proportional_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius distance between a/|a| and b/|b| after optimal phase."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return float("inf") if na != nb else 0.0
    a, b = a / na, b / nb
    c = global_phase_between(a, b)
    return float(np.linalg.norm(a - c * b))


# -- registers and states ---------------------------------------------------


@dataclass(frozen=True)
class Qubit:
    label: str
    node: Node = None


@dataclass(frozen=True)
class Gate:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] & (m.shape[0] - 1):
            raise LinalgError(f"gate must be a square 2^a matrix, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def arity(self) -> int:
        return int(self.matrix.shape[0]).bit_length() - 1

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return is_unitary(self.matrix, tol)


def as_matrix(g) -> np.ndarray:
    return g.matrix if isinstance(g, Gate) else np.asarray(g, dtype=complex)


class StateVector:
    """Amplitudes over an ordered register of labeled qubits (immutable)."""

    __slots__ = ("register", "amplitudes")

    def __init__(self, register: Sequence[Qubit | str], amplitudes, check_norm: bool = False):
        reg = tuple(q if isinstance(q, Qubit) else Qubit(str(q)) for q in register)
        labels = [q.label for q in reg]
        if len(set(labels)) != len(labels):
            raise LinalgError(f"duplicate qubit labels in register: {labels}")
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2 ** len(reg):
            raise LinalgError(f"{amps.size} amplitudes for {len(reg)} qubits")
        if check_norm and abs(np.vdot(amps, amps).real - 1) > NORM_TOL:
            raise LinalgError("state is not normalized")
        amps.setflags(write=False)
        object.__setattr__(self, "register", reg)
        object.__setattr__(self, "amplitudes", amps)

    def __setattr__(self, *_):
        raise AttributeError("StateVector is immutable")

    @property
    def labels(self) -> list[str]:
        return [q.label for q in self.register]

    @property
    def n_qubits(self) -> int:
        return len(self.register)

    def index(self, label: str) -> int:
        for i, q in enumerate(self.register):
            if q.label == label:
                return i
        raise LinalgError(f"unknown qubit label {label!r}")

    def qubit(self, label: str) -> Qubit:
        return self.register[self.index(label)]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)

    def reorder(self, labels: Sequence[str]) -> "StateVector":
        perm = [self.index(l) for l in labels]
        if len(perm) != self.n_qubits:
            raise LinalgError("reorder needs every register label exactly once")
        t = np.transpose(self.tensor(), perm) if perm else self.tensor()
        return StateVector([self.register[p] for p in perm], t.reshape(-1))

    def __repr__(self):
        return f"StateVector({self.labels}, norm={self.norm():.6g})"


def product_state(states: Iterable[tuple[Qubit | str, np.ndarray]]) -> StateVector:
    reg, vecs = [], []
    for q, v in states:
        reg.append(q)
        vecs.append(np.asarray(v, dtype=complex))
    amps = np.ones(1, dtype=complex)
    for v in vecs:
        amps = np.kron(amps, v)
    return StateVector(reg, amps)


def tensor_states(a: StateVector, b: StateVector) -> StateVector:
    return StateVector(a.register + b.register, np.kron(a.amplitudes, b.amplitudes))


def apply_to_axes(t: np.ndarray, mat: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply a 2^a x 2^a matrix to the given axes of a (..., 2, 2, ...) tensor."""
    a = len(axes)
    m = np.asarray(mat, dtype=complex).reshape((2,) * (2 * a))
    out = np.tensordot(m, t, axes=(list(range(a, 2 * a)), list(axes)))
    return np.moveaxis(out, list(range(a)), list(axes))


def apply_gate(state: StateVector, gate, targets: Sequence[str], require_unitary: bool = True) -> StateVector:
    m = as_matrix(gate)
    targets = list(targets)
    if len(set(targets)) != len(targets):
        raise LinalgError("targets must be distinct")
    if m.shape != (2 ** len(targets), 2 ** len(targets)):
        raise LinalgError(f"gate of shape {m.shape} does not match {len(targets)} targets")
    if require_unitary and not is_unitary(m):
        raise LinalgError("non-unitary gate in a unitary-only context")
    axes = [state.index(t) for t in targets]
    out = apply_to_axes(state.tensor(), m, axes)
    return StateVector(state.register, out.reshape(-1))


def density_matrix(state: StateVector) -> np.ndarray:
    return np.outer(state.amplitudes, np.conj(state.amplitudes))


def partial_trace(state: StateVector, keep: Sequence[str]) -> np.ndarray:
    """Reduced density matrix on `keep` (in the given order)."""
    keep = list(keep)
    if not keep:
        raise LinalgError("keep set is empty")
    keep_ax = [state.index(l) for l in keep]
    rest = [i for i in range(state.n_qubits) if i not in keep_ax]
    t = np.transpose(state.tensor(), keep_ax + rest).reshape(2 ** len(keep), -1)
    return t @ dagger(t)


def bipartite_matrix(state: StateVector, left: Sequence[str], right: Sequence[str]) -> np.ndarray:
    """Coefficient matrix psi[(left), (right)] used for Schmidt decompositions."""
    left, right = list(left), list(right)
    if not left or not right:
        raise LinalgError("both sides of a partition must be non-empty")
    if sorted(left + right) != sorted(state.labels) or len(set(left + right)) != len(left + right):
        raise LinalgError("partition must cover the register with disjoint sides")
    perm = [state.index(l) for l in left + right]
    return np.transpose(state.tensor(), perm).reshape(2 ** len(left), 2 ** len(right))


def embed_operator(mat: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Full 2^n matrix of an operator acting on qubit positions `targets`."""
    dim = 2**n
    eye = np.eye(dim, dtype=complex).reshape((2,) * n + (dim,))
    out = apply_to_axes(eye, mat, list(targets))
    return out.reshape(dim, dim)


# -- JSON ------------------------------------------------------------------


def matrix_to_json(m) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"dims": list(m.shape), "re": m.real.ravel().tolist(), "im": m.imag.ravel().tolist()}


def matrix_from_json(doc: dict) -> np.ndarray:
    try:
        dims = [int(d) for d in doc["dims"]]
        re = np.asarray(doc["re"], dtype=float)
        im = np.asarray(doc.get("im", [0.0] * re.size), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise LinalgError(f"malformed matrix document: {exc}") from exc
    if re.size != int(np.prod(dims)) or im.size != re.size:
        raise LinalgError("matrix document size does not match dims")
    return (re + 1j * im).reshape(dims)


def state_to_json(state: StateVector) -> dict:
    doc = matrix_to_json(state.amplitudes)
    doc["labels"] = state.labels
    return doc


def state_from_json(doc: dict) -> StateVector:
    amps = matrix_from_json(doc).reshape(-1)
    labels = doc.get("labels") or [f"q{i}" for i in range(int(np.log2(amps.size)))]
    return StateVector(labels, amps)

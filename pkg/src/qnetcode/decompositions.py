"""Schmidt, operator Schmidt and Kraus-Cirac decompositions, plus the two
constructive two-qubit syntheses built on them (controlled sequences and the
fixed three-CNOT template)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import (
    CNOT,
    H,
    I2,
    RANK_TOL,
    UNITARY_TOL,
    X,
    Y,
    Z,
    StateVector,
    as_matrix,
    bipartite_matrix,
    dagger,
    gate_distance,
    global_phase_between,
    is_unitary,
    kron,
    matrix_to_json,
    numerical_rank,
    random_unitary,
    partial_trace,
    svd,
)

KC_ZERO_TOL = 1e-9  # radians
_SNAP = 1e-12
_QUARTER = np.pi / 4
_HALF = np.pi / 2

XX, YY, ZZ = kron(X, X), kron(Y, Y), kron(Z, Z)

# Magic basis (columns). Local SU(2)xSU(2) becomes SO(4) and XX, YY, ZZ are
# diagonal in it.
MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=complex
) / np.sqrt(2)
MAGIC_DAG = dagger(MAGIC)
_PAULI_DIAG = np.array([np.real(np.diag(MAGIC_DAG @ P @ MAGIC)) for P in (XX, YY, ZZ)])
_PHASE_SYSTEM = np.column_stack([np.ones(4), _PAULI_DIAG.T])  # theta = g + x a + y b + z c

_PAULIS = (X, Y, Z)
# Cliffords that exchange a pair of Pauli axes (up to sign) when applied as C P C^dag.
_SWAPPERS = {
    (0, 1): np.diag([1, 1j]).astype(complex),  # S: X -> Y, Y -> -X
    (0, 2): H,  # X <-> Z
    (1, 2): (I2 - 1j * X) / np.sqrt(2),  # Rx(pi/2): Y -> Z, Z -> -Y
}


class DecompositionError(ValueError):
    pass


class NotDecomposable(DecompositionError):
    """Raised when a requested decomposition provably does not exist."""

    def __init__(self, message: str, kc_number: int | None = None):
        super().__init__(message)
        self.kc_number = kc_number


# -- Schmidt ---------------------------------------------------------------


@dataclass(frozen=True)
class SchmidtData:
    coefficients: np.ndarray
    left: np.ndarray  # columns are left Schmidt vectors
    right: np.ndarray  # rows are right Schmidt vectors
    rank: int

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.coefficients) @ self.right


def schmidt_decompose(state: StateVector, partition: tuple[Sequence[str], Sequence[str]],
                      rel_tol: float = RANK_TOL) -> SchmidtData:
    left, right = partition
    psi = bipartite_matrix(state, left, right)
    u, s, vh = svd(psi)
    return SchmidtData(s, u, vh, numerical_rank(s, rel_tol))


def schmidt_rank(state: StateVector, partition, rel_tol: float = RANK_TOL) -> int:
    return schmidt_decompose(state, partition, rel_tol).rank


def reduced_spectrum_check(state: StateVector, partition) -> float:
    """Max deviation between Schmidt coefficients and sqrt of reduced eigenvalues."""
    sd = schmidt_decompose(state, partition)
    ev = np.linalg.eigvalsh(partial_trace(state, list(partition[0])))[::-1]
    ev = np.sqrt(np.clip(ev, 0, None))[: sd.coefficients.size]
    return float(np.max(np.abs(ev - sd.coefficients)))


# -- operator Schmidt ------------------------------------------------------


@dataclass(frozen=True)
class OperatorSchmidtData:
    coefficients: np.ndarray
    P: list  # factors on side A, orthonormal under tr(M^dag N)/dim
    Q: list
    rank: int
    partition: tuple
    n_qubits: int

    def reconstruct(self) -> np.ndarray:
        a, b = self.partition
        n = self.n_qubits
        total = sum(c * np.kron(p, q) for c, p, q in zip(self.coefficients, self.P, self.Q))
        # total acts on (a + b) ordering; permute back to the natural order
        order = list(a) + list(b)
        t = np.asarray(total).reshape((2,) * (2 * n))
        inv = np.argsort(order)
        t = np.transpose(t, list(inv) + [n + i for i in inv])
        return t.reshape(2**n, 2**n)


def _realign(m: np.ndarray, a: Sequence[int], b: Sequence[int]) -> np.ndarray:
    n = len(a) + len(b)
    t = np.asarray(m, dtype=complex).reshape((2,) * (2 * n))
    perm = list(a) + [n + i for i in a] + list(b) + [n + i for i in b]
    return np.transpose(t, perm).reshape(4 ** len(a), 4 ** len(b))


def operator_schmidt(M, partition: tuple[Sequence[int], Sequence[int]] | None = None,
                     rel_tol: float = RANK_TOL) -> OperatorSchmidtData:
    """Operator Schmidt decomposition M = sum_i c_i P_i (x) Q_i.

    `partition` lists qubit positions of each side; default splits 4x4 as 0|1.
    """
    m = as_matrix(M)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DecompositionError("operator must be square")
    n = int(m.shape[0]).bit_length() - 1
    if 2**n != m.shape[0]:
        raise DecompositionError("operator dimension is not a power of two")
    if partition is None:
        if n != 2:
            raise DecompositionError("partition required for operators on more than two qubits")
        partition = ([0], [1])
    a, b = [int(i) for i in partition[0]], [int(i) for i in partition[1]]
    if not a or not b or sorted(a + b) != list(range(n)):
        raise DecompositionError(f"partition {partition} does not match a {n}-qubit operator")
    da, db = 2 ** len(a), 2 ** len(b)
    u, s, vh = svd(_realign(m, a, b))
    r = numerical_rank(s, rel_tol)
    keep = max(r, 1)
    P = [u[:, i].reshape(da, da) * np.sqrt(da) for i in range(keep)]
    Q = [vh[i].reshape(db, db) * np.sqrt(db) for i in range(keep)]
    coeffs = s[:keep] / np.sqrt(da * db)
    return OperatorSchmidtData(coeffs, P, Q, r, (tuple(a), tuple(b)), n)


def op_rank(M, partition=None) -> int:
    return operator_schmidt(M, partition).rank


def split_product(m: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Factor a 4x4 operator of operator Schmidt rank one into a (x) b."""
    u, s, vh = svd(_realign(m, [0], [1]))
    if s[0] == 0 or (s.size > 1 and s[1] / s[0] > tol):
        raise DecompositionError("operator is not a tensor product")
    a = u[:, 0].reshape(2, 2) * np.sqrt(s[0])
    b = vh[0].reshape(2, 2) * np.sqrt(s[0])
    # rebalance so each factor is unitary when m is
    ra = np.sqrt(abs(np.linalg.det(a))) or 1.0
    return a / ra, b * ra


# -- Kraus-Cirac -----------------------------------------------------------


def u_global(x: float, y: float, z: float) -> np.ndarray:
    """exp(i(x XX + y YY + z ZZ))."""
    phases = np.exp(1j * (_PAULI_DIAG.T @ np.array([x, y, z], dtype=float)))
    return MAGIC @ np.diag(phases) @ MAGIC_DAG


@dataclass(frozen=True)
class KrausCiracForm:
    u: np.ndarray
    u_prime: np.ndarray
    x: float
    y: float
    z: float
    w: np.ndarray
    w_prime: np.ndarray
    phase: complex = 1.0 + 0j
    kc_number: int = field(default=0)

    @property
    def params(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def core(self) -> np.ndarray:
        return u_global(self.x, self.y, self.z)

    def reconstruct(self, with_phase: bool = True) -> np.ndarray:
        m = kron(self.u, self.u_prime) @ self.core() @ kron(self.w, self.w_prime)
        return self.phase * m if with_phase else m

    def to_json(self) -> dict:
        return {
            "x": float(self.x), "y": float(self.y), "z": float(self.z), "kc": int(self.kc_number),
            "u": matrix_to_json(self.u), "u'": matrix_to_json(self.u_prime),
            "w": matrix_to_json(self.w), "w'": matrix_to_json(self.w_prime),
        }


def _simultaneous_real_diagonalizer(m: np.ndarray) -> np.ndarray:
    """Real orthogonal O with O^T m O diagonal, for symmetric unitary m.

    m = A + iB with A, B real symmetric and commuting; eigenvectors of a generic
    combination A + rB diagonalise both. A few fixed ratios are tried and the
    best one kept so that accidental degeneracies of one combination do not
    matter.
    """
    a, b = m.real, m.imag
    a = (a + a.T) / 2
    b = (b + b.T) / 2
    best, best_err = None, np.inf
    for r in (0.6180339887498949, -1.4142135623730951, 2.718281828459045, 0.0, 1e3):
        _, o = np.linalg.eigh(a + r * b)
        d = o.T @ m @ o
        err = np.max(np.abs(d - np.diag(np.diag(d))))
        if err < best_err:
            best, best_err = o, err
        if err < 1e-13:
            break
    return best


def _canonicalize(v, left, right):
    """Fold (x, y, z) into the Weyl chamber used here, tracking locals.

    Invariant: U ~ (left[0] (x) left[1]) G(v) (right[0] (x) right[1]) up to phase.
    """
    v = [float(t) for t in v]
    l0, l1 = left
    r0, r1 = right

    def shift(k, m):
        nonlocal r0, r1
        if m == 0:
            return
        v[k] -= m * _HALF
        if m % 2:
            p = _PAULIS[k]
            r0, r1 = p @ r0, p @ r1

    def negate(k1, k2):
        nonlocal l0, r0
        q = _PAULIS[3 - k1 - k2]
        v[k1], v[k2] = -v[k1], -v[k2]
        l0, r0 = l0 @ q, q @ r0

    def swap(k1, k2):
        nonlocal l0, l1, r0, r1
        c = _SWAPPERS[(min(k1, k2), max(k1, k2))]
        v[k1], v[k2] = v[k2], v[k1]
        cd = dagger(c)
        l0, l1, r0, r1 = l0 @ cd, l1 @ cd, c @ r0, c @ r1

    for k in range(3):
        shift(k, int(np.ceil((v[k] - _QUARTER) / _HALF)))
    # order by magnitude, largest first
    for _ in range(3):
        for k in range(2):
            if abs(v[k]) < abs(v[k + 1]) - _SNAP:
                swap(k, k + 1)
    if v[0] < 0:
        negate(0, 2)
    if v[1] < 0:
        negate(1, 2)
    v = [0.0 if abs(t) < _SNAP else t for t in v]
    if v[2] < 0:
        # (x, y, -|z|) ~ (pi/2 - x, y, |z|)
        negate(0, 2)
        shift(0, -1)
    return v, (l0, l1), (r0, r1)


def kraus_cirac(U, tol: float = UNITARY_TOL) -> KrausCiracForm:
    """Kraus-Cirac form U = phase (u (x) u') exp(i(xXX+yYY+zZZ)) (w (x) w').

    Parameters land in 0 <= x < pi/2 (x <= pi/4 when z = 0),
    0 <= y <= min(x, pi/2 - x), 0 <= z <= y.
    """
    u = as_matrix(U)
    if u.shape != (4, 4):
        raise DecompositionError(f"expected a 4x4 unitary, got shape {u.shape}")
    if not is_unitary(u, tol):
        raise DecompositionError("input is not unitary")
    us = u / np.linalg.det(u) ** 0.25
    up = MAGIC_DAG @ us @ MAGIC
    o = _simultaneous_real_diagonalizer(up.T @ up)
    if np.linalg.det(o) < 0:
        o[:, 0] *= -1
    d2 = np.diag(o.T @ up.T @ up @ o)
    d = np.exp(0.5j * np.angle(d2))
    k1 = up @ o @ np.diag(np.conj(d))
    if np.linalg.det(k1).real < 0:
        d[0] *= -1
        k1[:, 0] *= -1
    k1 = k1.real
    left = split_product(MAGIC @ k1 @ MAGIC_DAG)
    right = split_product(MAGIC @ o.T @ MAGIC_DAG)
    sol = np.linalg.solve(_PHASE_SYSTEM, np.angle(d))
    v, left, right = _canonicalize(sol[1:], left, right)
    x, y, z = v
    core = u_global(x, y, z)
    recon = kron(*left) @ core @ kron(*right)
    phase = global_phase_between(u, recon)
    # scale residual magnitudes into the phase so that reconstruct() is exact
    err = gate_distance(u, recon)
    if err > 1e-9:
        raise DecompositionError(f"internal: Kraus-Cirac reconstruction error {err:.3e}")
    kc = int(sum(t > KC_ZERO_TOL for t in v))
    return KrausCiracForm(left[0], left[1], x, y, z, right[0], right[1], phase, kc)


def kc_number(U) -> int:
    return kraus_cirac(U).kc_number


def in_weyl_chamber(x: float, y: float, z: float, tol: float = 1e-12) -> bool:
    if not (-tol <= x < _HALF + tol):
        return False
    if abs(z) <= tol and x > _QUARTER + tol:
        return False
    if not (-tol <= y <= min(x, _HALF - x) + tol):
        return False
    return -tol <= z <= y + tol


def random_chamber_point(rng: np.random.Generator) -> tuple[float, float, float]:
    """Uniform point of the open chamber by rejection (z > 0, so KC# = 3)."""
    while True:
        x, y, z = rng.uniform(0, _HALF), rng.uniform(0, _QUARTER), rng.uniform(0, _QUARTER)
        if 0 < z <= y <= min(x, _HALF - x):
            return float(x), float(y), float(z)


def random_unitary_with_kc(kc: int, rng: np.random.Generator) -> np.ndarray:
    """Random locals around a random core with exactly `kc` nonzero chamber parameters."""
    if kc == 3:
        x, y, z = random_chamber_point(rng)
    elif kc == 2:
        x = rng.uniform(0.05, _QUARTER)
        x, y, z = x, rng.uniform(0.02, 1) * x, 0.0
    elif kc == 1:
        x, y, z = rng.uniform(0.05, _HALF - 0.05), 0.0, 0.0
    elif kc == 0:
        x = y = z = 0.0
    else:
        raise ValueError("kc must be 0..3")
    a, b, c, d = (random_unitary(2, rng) for _ in range(4))
    return kron(a, b) @ u_global(x, y, z) @ kron(c, d)


# -- controlled sequences ---------------------------------------------------


def controlled_sequence(U, N: int) -> list[np.ndarray]:
    """Factors F_1..F_N, each local or locally equivalent to a controlled gate,
    with U = F_1 F_2 ... F_N up to global phase.

    Raises NotDecomposable when KC#(U) > N.
    """
    if N not in (1, 2, 3):
        raise DecompositionError("sequence length must be 1, 2 or 3")
    kc = kraus_cirac(U)
    return _controlled_factors(kc, N)


def _controlled_factors(kc: KrausCiracForm, N: int) -> list[np.ndarray]:
    if kc.kc_number > N:
        raise NotDecomposable(f"KC#={kc.kc_number} exceeds sequence length {N}", kc.kc_number)
    pre = kron(kc.u, kc.u_prime) * kc.phase
    post = kron(kc.w, kc.w_prime)
    cores = [(t, P) for t, P in ((kc.z, ZZ), (kc.y, YY), (kc.x, XX)) if t > KC_ZERO_TOL]
    if not cores:
        factors = [pre @ post]
    else:
        factors = [np.cos(t) * np.eye(4) + 1j * np.sin(t) * P for t, P in cores]
        factors[0] = pre @ factors[0]
        factors[-1] = factors[-1] @ post
    factors += [np.eye(4, dtype=complex)] * (N - len(factors))
    return factors


@dataclass(frozen=True)
class ControlledForm:
    """F = (a0 (x) b0)^-1-free layout: F ~ post @ C(u0, u1) @ pre, control on qubit 1."""

    pre: tuple[np.ndarray, np.ndarray]
    u0: np.ndarray
    u1: np.ndarray
    post: tuple[np.ndarray, np.ndarray]

    def matrix(self) -> np.ndarray:
        c = kron(np.diag([1, 0]), self.u0) + kron(np.diag([0, 1]), self.u1)
        return kron(*self.post) @ c @ kron(*self.pre)


def as_controlled(F) -> ControlledForm:
    """Write a two-qubit unitary with KC# <= 1 as locals around |0><0|(x)u0 + |1><1|(x)u1."""
    kc = kraus_cirac(F)
    if kc.kc_number > 1:
        raise NotDecomposable("operator is not locally equivalent to a controlled gate", kc.kc_number)
    t = kc.x
    # exp(i t XX) = (H (x) H) (|0><0| (x) e^{itZ} + |1><1| (x) e^{-itZ}) (H (x) H)
    u0 = np.diag(np.exp([1j * t, -1j * t]))
    u1 = np.diag(np.exp([-1j * t, 1j * t]))
    pre = (H @ kc.w, H @ kc.w_prime)
    post = (kc.phase * kc.u @ H, kc.u_prime @ H)
    return ControlledForm(pre, u0, u1, post)


# -- three CNOTs -----------------------------------------------------------


@dataclass(frozen=True)
class ThreeCnotCircuit:
    """U = L3 CNOT L2 CNOT L1 CNOT L0 (up to phase); every CNOT has qubit 1 as control.

    layers[i] = (a_i, b_i) single-qubit unitaries on qubits 1 and 2.
    """

    layers: tuple
    phase: complex = 1.0 + 0j

    n_cnots = 3

    def matrix(self) -> np.ndarray:
        m = kron(*self.layers[0])
        for a, b in self.layers[1:]:
            m = kron(a, b) @ CNOT @ m
        return self.phase * m

    @property
    def single_qubit_gates(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer]


def _rz(t):
    return np.diag(np.exp([-0.5j * t, 0.5j * t]))


def _ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _template_angles(x: float, y: float, z: float) -> tuple[float, float, float]:
    # CNOT21 (Rz(a) (x) Ry(b)) CNOT12 (I (x) Ry(c)) CNOT21 ~ G(x, y, z)
    return np.pi / 2 - 2 * z, 2 * x - np.pi / 2, np.pi / 2 - 2 * y


def three_cnot_decompose(U, tol: float = UNITARY_TOL) -> ThreeCnotCircuit:
    """Exactly three CNOTs (control on qubit 1) and eight single-qubit gates."""
    ku = kraus_cirac(U, tol)
    a, b, c = _template_angles(*ku.params)
    hh = (H, H)
    # the template with its reversed CNOTs rewritten as H-conjugated CNOT12
    inner = ThreeCnotCircuit(((H, H), (H, _ry(c) @ H), (H @ _rz(a), H @ _ry(b)), hh))
    kt = kraus_cirac(inner.matrix())
    if max(abs(p - q) for p, q in zip(ku.params, kt.params)) > 1e-9:
        raise DecompositionError("internal: three-CNOT template does not match the target class")
    # U = pu Lu G Ru,  T = pt Lt G Rt  =>  U = (pu/pt) Lu Lt^dag T Rt^dag Ru
    left = (ku.u @ dagger(kt.u), ku.u_prime @ dagger(kt.u_prime))
    right = (dagger(kt.w) @ ku.w, dagger(kt.w_prime) @ ku.w_prime)
    layers = list(inner.layers)
    layers[0] = (layers[0][0] @ right[0], layers[0][1] @ right[1])
    layers[3] = (left[0] @ layers[3][0], left[1] @ layers[3][1])
    circ = ThreeCnotCircuit(tuple(layers))
    return ThreeCnotCircuit(circ.layers, global_phase_between(as_matrix(U), circ.matrix()))

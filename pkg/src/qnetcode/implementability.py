"""Chain-form factors, ladder decisions and the four-qubit Schmidt-number scan."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .decompositions import (
    DecompositionError,
    NotDecomposable,
    _realign,
    kc_number,
    op_rank,
    operator_schmidt,
)
from .linalg import (
    RANK_TOL,
    StateVector,
    as_matrix,
    dagger,
    gate_distance,
    is_unitary,
    kron,
    numerical_rank,
    proportional_distance,
)
from .protocols import LadderDecision, ladder_factors

_I2 = np.eye(2, dtype=complex)


class ChainError(ValueError):
    pass


# -- chain factors -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChainFactor:
    """sum over a_1..a_{k-1} of E_1^{(a_1)} (x) E_2^{(a_1,a_2)} (x) ... (x) E_k^{(a_{k-1})}.

    sites[0] has shape (2, 2, 2) indexed [a_1, out, in]; interior sites (2, 2, 2, 2)
    indexed [a_{i-1}, a_i, out, in]; the last site (2, 2, 2) indexed [a_{k-1}, out, in].
    """

    sites: tuple
    unitary: bool = True

    @property
    def k(self) -> int:
        return len(self.sites)


def make_chain_factor(sites: Sequence, unitary: bool = True) -> ChainFactor:
    sites = tuple(np.asarray(s, dtype=complex) for s in sites)
    k = len(sites)
    if k < 2:
        raise ChainError("a chain factor needs at least two sites")
    for i, s in enumerate(sites):
        want = (2, 2, 2) if i in (0, k - 1) else (2, 2, 2, 2)
        if s.shape != want:
            raise ChainError(f"site {i + 1} has shape {s.shape}, expected {want}")
    cf = ChainFactor(sites, unitary)
    if unitary and not is_unitary(assemble_chain_factor(cf), 1e-9):
        raise ChainError("factor declared unitary but its matrix is not")
    return cf


def assemble_chain_factor(cf: ChainFactor) -> np.ndarray:
    sites = cf.sites
    k = len(sites)
    acc = sites[0]  # [bond, out, in]
    dim = 2
    for s in sites[1:-1]:
        acc = np.einsum("aoi,abpj->bopij", acc, s).reshape(2, dim * 2, dim * 2)
        dim *= 2
    out = np.einsum("aoi,apj->opij", acc, sites[-1])
    return out.reshape(dim * 2, dim * 2) if k > 1 else out


def chain_factor_from_matrix(V, k: int | None = None, rel_tol: float = RANK_TOL,
                             unitary: bool | None = None) -> ChainFactor:
    """Sequential operator-Schmidt split; fails if any bond needs more than two terms."""
    m = as_matrix(V)
    n = int(m.shape[0]).bit_length() - 1
    if k is None:
        k = n
    if 2**k != m.shape[0] or m.shape[0] != m.shape[1]:
        raise ChainError("matrix size does not match k")
    t = m.reshape((2,) * (2 * k))
    t = np.transpose(t, [x for i in range(k) for x in (i, k + i)]).reshape(-1)
    sites, left = [], 1
    rest = t.reshape(1, -1)
    for i in range(k - 1):
        mat = rest.reshape(left * 4, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        r = numerical_rank(s, rel_tol)
        if r > 2:
            raise ChainError(f"bond {i + 1}|{i + 2} needs {r} terms, a chain factor allows 2")
        site = np.zeros((left, 2, 2, 2), dtype=complex)
        site[:, :r] = (u[:, :r] * s[:r]).reshape(left, 2, 2, r).transpose(0, 3, 1, 2)
        if left == 1:
            sites.append(site[0])
        else:
            padded = np.zeros((2, 2, 2, 2), dtype=complex)
            padded[:left] = site
            sites.append(padded)
        rest = np.zeros((2, vh.shape[1]), dtype=complex)
        rest[:r] = vh[:r]
        left = 2
    sites.append(rest.reshape(2, 2, 2))
    if unitary is None:
        unitary = is_unitary(m, 1e-9)
    return ChainFactor(tuple(sites), unitary)


def chain_compose(factors: Sequence[ChainFactor | np.ndarray]) -> np.ndarray:
    """V_1 V_2 ... V_N."""
    if not factors:
        raise ChainError("need at least one factor")
    mats = [assemble_chain_factor(f) if isinstance(f, ChainFactor) else as_matrix(f) for f in factors]
    dims = {m.shape for m in mats}
    if len(dims) != 1:
        raise ChainError(f"factor dimensions differ: {sorted(dims)}")
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return out


def probabilistic_chain_verify(U, factors: Sequence, tol: float = 1e-9) -> dict:
    """Pass iff the ordered product is proportional to U (free overall scale and phase)."""
    prod = chain_compose(factors)
    U = as_matrix(U)
    if prod.shape != U.shape:
        return {"pass": False, "distance": float("inf"), "reason": "dimension mismatch"}
    d = proportional_distance(prod, U)
    return {"pass": d <= tol, "distance": d}


# -- controlled-form certificates -----------------------------------------------------


def _control_frame(Ps: Sequence[np.ndarray], tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Unitaries (alpha, gamma) with span(Ps) = span{alpha |a><a| gamma}."""
    if len(Ps) == 1:
        p = Ps[0]
        g = p / np.sqrt(abs(np.linalg.det(p)))
        if not is_unitary(g, 1e-8):
            raise DecompositionError("rank-one factor is not proportional to a unitary")
        return _I2.copy(), g
    if len(Ps) != 2:
        raise DecompositionError("operator Schmidt rank above two")
    P0, P1 = Ps
    w = scipy.linalg.eig(P0, -P1, right=False, homogeneous_eigvals=True)
    us, vs = [], []
    for al, be in zip(w[0], w[1]):
        M = be * P0 + al * P1
        u, s, vh = np.linalg.svd(M)
        us.append(u[:, 0])
        vs.append(np.conj(vh[0]))
    alpha = np.column_stack(us)
    gamma = dagger(np.column_stack(vs))
    if not (is_unitary(alpha, tol) and is_unitary(gamma, tol)):
        raise DecompositionError("no orthogonal control basis; operator is not controlled-equivalent")
    return alpha, gamma


@dataclass(frozen=True, eq=False)
class ControlledCertificate:
    """V = kron(left) C kron(right) with C block diagonal on its control wires."""

    left: tuple
    right: tuple
    blocks: tuple  # two-qubit: (u0, u1); three-qubit: W^{(ac)} for controls 1, 3
    residual: float

    def core(self) -> np.ndarray:
        if len(self.blocks) == 2:
            return scipy.linalg.block_diag(*self.blocks)
        C = np.zeros((8, 8), dtype=complex)
        for a in (0, 1):
            for c in (0, 1):
                idx = [4 * a + 2 * b + c for b in (0, 1)]
                C[np.ix_(idx, idx)] = self.blocks[2 * a + c]
        return C

    def matrix(self) -> np.ndarray:
        return kron(*self.left) @ self.core() @ kron(*self.right)


def controlled_certificate(V) -> ControlledCertificate:
    """Two-qubit V of operator Schmidt rank <= 2 as locals around |0><0| u0 + |1><1| u1."""
    V = as_matrix(V)
    osd = operator_schmidt(V, ([0], [1]))
    alpha, gamma = _control_frame(osd.P[: osd.rank])
    Vp = kron(dagger(alpha), _I2) @ V @ kron(dagger(gamma), _I2)
    off = float(max(np.max(np.abs(Vp[:2, 2:])), np.max(np.abs(Vp[2:, :2]))))
    return ControlledCertificate((alpha, _I2), (gamma, _I2), (Vp[:2, :2], Vp[2:, 2:]), off)


def fully_controlled_certificate(V) -> ControlledCertificate:
    """Three-qubit chain factor as locals on wires 1, 3 around sum |ac><ac| (x) W^{(ac)}."""
    V = as_matrix(V)
    if V.shape != (8, 8):
        raise ChainError("expected an 8x8 operator")
    o1 = operator_schmidt(V, ([0], [1, 2]))
    a1, g1 = _control_frame(o1.P[: o1.rank])
    V1 = kron(dagger(a1), _I2, _I2) @ V @ kron(dagger(g1), _I2, _I2)
    o3 = operator_schmidt(V1, ([2], [0, 1]))
    a3, g3 = _control_frame(o3.P[: o3.rank])
    V2 = kron(_I2, _I2, dagger(a3)) @ V1 @ kron(_I2, _I2, dagger(g3))
    t = V2.reshape(2, 2, 2, 2, 2, 2)
    blocks, mask = [], np.ones_like(t, dtype=bool)
    for a in (0, 1):
        for c in (0, 1):
            blocks.append(t[a, :, c, a, :, c].copy())
            mask[a, :, c, a, :, c] = False
    off = float(np.max(np.abs(t[mask])))
    return ControlledCertificate((a1, _I2, a3), (g1, _I2, g3), tuple(blocks), off)


# -- ladder decision ---------------------------------------------------------------------


def decide_ladder(U, N: int) -> LadderDecision:
    """Exact yes/no: U is deterministically implementable on the N-bridge ladder iff KC#(U) <= N."""
    U = as_matrix(U)
    if U.shape != (4, 4) or not is_unitary(U, 1e-10):
        raise ValueError("expected a 4x4 unitary")
    kc = kc_number(U)
    if kc > N:
        return LadderDecision(False, kc, N, (), f"KC#={kc} exceeds N={N}")
    try:
        fs = ladder_factors(U, N)
    except NotDecomposable as exc:  # pragma: no cover - kc check above already covers this
        return LadderDecision(False, exc.kc_number, N, (), str(exc))
    err = gate_distance(chain_compose(list(fs)), U)
    if err > 1e-9:
        raise DecompositionError(f"internal: controlled sequence residual {err:.3e}")
    return LadderDecision(True, kc, N, tuple(fs), f"KC#={kc} <= N={N}")


# -- four-qubit families --------------------------------------------------------------------

CUTS = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))
CUT_NAMES = ("12|34", "13|24", "14|23")
FAMILY_PARAMS = {1: "abcd", 2: "abc", 3: "ab", 4: "ab", 5: "a", 6: "a", 7: "", 8: "", 9: ""}


def _amps(terms: dict) -> np.ndarray:
    v = np.zeros(16, dtype=complex)
    for bits, coef in terms.items():
        v[int(bits, 2)] += coef
    return v



def family_vector(index: int, params: dict | Sequence = ()) -> np.ndarray:
    """Unnormalised amplitude vector of family `index` (1..9)."""
    if index not in FAMILY_PARAMS:
        raise ValueError(f"family index must be 1..9, got {index}")
    names = FAMILY_PARAMS[index]
    if isinstance(params, dict):
        extra = set(params) - set(names)
        missing = [n for n in names if n not in params]
        if extra or missing:
            raise ValueError(f"family {index} takes parameters {list(names)}; "
                             f"missing {missing}, unexpected {sorted(extra)}")
        p = {n: complex(params[n]) for n in names}
    else:
        params = list(params)
        if len(params) != len(names):
            raise ValueError(f"family {index} takes {len(names)} parameters, got {len(params)}")
        p = {n: complex(v) for n, v in zip(names, params)}
    a, b, c, d = (p.get(n, 0j) for n in "abcd")
    r2 = 1 / np.sqrt(2)
    t: dict[str, complex] = {}

    def add(coef, *kets):
        for k in kets:
            t[k] = t.get(k, 0) + coef

    if index == 1:
        add((a + d) / 2, "0000", "1111"); add((a - d) / 2, "0011", "1100")  # noqa: E702
        add((b + c) / 2, "0101", "1010"); add((b - c) / 2, "0110", "1001")  # noqa: E702
    elif index == 2:
        add((a + b) / 2, "0000", "1111"); add((a - b) / 2, "0011", "1100")  # noqa: E702
        add(c, "0101", "1010"); add(1, "0110")  # noqa: E702
    elif index == 3:
        add(a, "0000", "1111"); add(b, "0101", "1010"); add(1, "0110", "0011")  # noqa: E702
    elif index == 4:
        add(a, "0000", "1111"); add((a + b) / 2, "0101", "1010")  # noqa: E702
        add((a - b) / 2, "0110", "1001"); add(1j * r2, "0001", "0010", "0111", "1011")  # noqa: E702
    elif index == 5:
        add(a, "0000", "0101", "1010", "1111"); add(1j, "0001"); add(1, "0110"); add(-1j, "1011")  # noqa: E702
    elif index == 6:
        add(a, "0000", "1111"); add(1, "0011", "0101", "0110")  # noqa: E702
    elif index == 7:
        add(1, "0000", "0101", "1000", "1110")
    elif index == 8:
        add(1, "0000", "1011", "1101", "1110")
    else:
        add(1, "0000", "0111")
    return _amps(t)


def family_state(index: int, params: dict | Sequence = ()) -> StateVector:
    v = family_vector(index, params)
    n = np.linalg.norm(v)
    if n < 1e-14:
        raise ValueError(f"family {index} with these parameters is the zero vector")
    return StateVector(["1", "2", "3", "4"], v / n)


def _triples(vs: np.ndarray, rel_tol: float = RANK_TOL) -> np.ndarray:
    """Schmidt ranks of a batch of 4-qubit vectors (B, 16) on the three cuts."""
    t = vs.reshape(-1, 2, 2, 2, 2)
    out = np.zeros((len(vs), 3), dtype=int)
    for ci, (left, right) in enumerate(CUTS):
        m = np.transpose(t, (0,) + tuple(1 + q for q in left + right)).reshape(-1, 4, 4)
        s = np.linalg.svd(m, compute_uv=False)
        top = s[:, :1]
        out[:, ci] = np.sum(s > rel_tol * np.where(top > 0, top, 1), axis=1)
    return out


def schmidt_triple(state: StateVector | np.ndarray) -> tuple[int, int, int]:
    """(Sch# on 12|34, 13|24, 14|23)."""
    v = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, dtype=complex)
    if v.size != 16:
        raise ValueError("schmidt_triple needs a four-qubit state")
    n = np.linalg.norm(v)
    if abs(n - 1) > 1e-10:
        raise ValueError("state must be normalized")
    return tuple(int(r) for r in _triples(v.reshape(1, 16))[0])


DEFAULT_GRID = {
    "families": list(range(1, 10)),
    "magnitudes": [0.0, 0.3, 0.7, 1.2],
    "phases": [0.0, np.pi / 4, np.pi / 2, np.pi],
}


@dataclass
class ScanReport:
    families: dict = field(default_factory=dict)  # index -> {"points", "skipped", "histogram"}
    forbidden_ordered: int = 0  # (4, 2, 2) with the 4 on 12|34
    forbidden_any: int = 0  # any ordering of {4, 2, 2}
    examples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.forbidden_ordered == 0 and self.forbidden_any == 0

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "forbidden_ordered": self.forbidden_ordered,
            "forbidden_any_order": self.forbidden_any,
            "cuts": list(CUT_NAMES),
            "families": {str(k): v for k, v in sorted(self.families.items())},
            "examples": self.examples,
        }


def swap_impossibility_scan(grid: dict | None = None) -> ScanReport:
    grid = dict(DEFAULT_GRID if grid is None else grid)
    fams = [int(f) for f in grid.get("families", [])]
    mags = [float(m) for m in grid.get("magnitudes", DEFAULT_GRID["magnitudes"])]
    phs = [float(p) for p in grid.get("phases", DEFAULT_GRID["phases"])]
    values = [m * np.exp(1j * p) for m in mags for p in phs]
    rep = ScanReport()
    for f in fams:
        if f not in FAMILY_PARAMS:
            raise ValueError(f"family index must be 1..9, got {f}")
        npar = len(FAMILY_PARAMS[f])
        pts = list(itertools.product(values, repeat=npar))
        vs = np.array([family_vector(f, p) for p in pts]).reshape(len(pts), 16)
        norms = np.linalg.norm(vs, axis=1)
        keep = norms > 1e-14
        tri = _triples(vs[keep] / norms[keep, None])
        hist: dict[str, int] = {}
        for row in tri:
            key = "{" + ",".join(str(int(r)) for r in row) + "}"
            hist[key] = hist.get(key, 0) + 1
        ordered = (tri[:, 0] == 4) & (tri[:, 1] == 2) & (tri[:, 2] == 2)
        anyord = np.all(np.sort(tri, axis=1) == [2, 2, 4], axis=1)
        rep.forbidden_ordered += int(ordered.sum())
        rep.forbidden_any += int(anyord.sum())
        kept_pts = [p for p, k in zip(pts, keep) if k]
        for i in np.nonzero(anyord)[0][:5]:
            rep.examples.append({"family": f, "params": [[v.real, v.imag] for v in kept_pts[i]],
                                 "triple": tri[i].tolist()})
        rep.families[f] = {"points": len(pts), "skipped_zero": int((~keep).sum()),
                           "histogram": dict(sorted(hist.items()))}
    return rep


# -- operator Schmidt rank of inverses ----------------------------------------------------


def random_rank2_operator(rng: np.random.Generator) -> np.ndarray:
    g = lambda: rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))  # noqa: E731
    return np.kron(g(), g()) + np.kron(g(), g())


def inverse_rank_check(n: int, rng: np.random.Generator, cond_max: float = 1e8) -> dict:
    """Op#(P) = 2 and P invertible implies Op#(P^-1) = 2, on n random samples."""
    counts = {"samples": 0, "violations": 0, "skipped_singular": 0}
    for _ in range(n):
        P = random_rank2_operator(rng)
        if np.linalg.cond(P) > cond_max or op_rank(P) != 2:
            counts["skipped_singular"] += 1
            continue
        counts["samples"] += 1
        if op_rank(np.linalg.inv(P)) != 2:
            counts["violations"] += 1
    return counts


def realigned(P: np.ndarray) -> np.ndarray:
    """The 4x4 realignment used to read a two-qubit operator as a four-qubit state."""
    return _realign(P, [0], [1])

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnetcode.decompositions import (
    DecompositionError, NotDecomposable, as_controlled, controlled_sequence, in_weyl_chamber,
    kc_number, kraus_cirac, op_rank, operator_schmidt, random_chamber_point, random_unitary_with_kc,
    reduced_spectrum_check, schmidt_decompose, three_cnot_decompose, u_global,
)
from qnetcode.linalg import (
    CNOT, CZ, PHI_PLUS, SWAP, StateVector, gate_distance, kron, random_state, random_unitary,
)

seeds = st.integers(0, 2**32 - 1)
kcs = st.integers(0, 3)
QUARTER = np.pi / 4


def test_bell_pair_schmidt():
    sd = schmidt_decompose(StateVector(["a", "b"], PHI_PLUS), (["a"], ["b"]))
    assert np.allclose(sd.coefficients, [2**-0.5] * 2) and sd.rank == 2


def test_product_state_rank_one(rng):
    psi = np.kron([1, 0], random_state(1, rng))
    assert schmidt_decompose(StateVector(["a", "b"], psi), (["a"], ["b"])).rank == 1


def test_random_four_qubit_rank_four(rng):
    s = StateVector(list("abcd"), random_state(4, rng))
    sd = schmidt_decompose(s, (["a", "b"], ["c", "d"]))
    assert sd.rank == 4
    assert abs(np.sum(sd.coefficients**2) - 1) <= 1e-10
    assert np.allclose(sd.left.conj().T @ sd.left, np.eye(4), atol=1e-10)
    assert np.allclose(sd.right @ sd.right.conj().T, np.eye(4), atol=1e-10)
    assert reduced_spectrum_check(s, (["a", "b"], ["c", "d"])) <= 1e-10


@pytest.mark.parametrize("U,rank", [(np.eye(4), 1), (CNOT, 2), (CZ, 2), (SWAP, 4)])
def test_op_rank_examples(U, rank):
    assert op_rank(U) == rank


def test_operator_schmidt_factors_orthonormal(rng):
    U = random_unitary(8, rng)
    osd = operator_schmidt(U, ([0, 2], [1]))
    assert np.max(np.abs(osd.reconstruct() - U)) <= 1e-10
    gram = np.array([[np.trace(p.conj().T @ q) / 4 for q in osd.P] for p in osd.P])
    assert np.allclose(gram, np.eye(len(osd.P)), atol=1e-10)
    with pytest.raises(DecompositionError):
        operator_schmidt(U, ([0], [1]))


def test_kc_examples():
    kc = kraus_cirac(np.eye(4))
    assert kc.params == (0, 0, 0) and kc.kc_number == 0
    kc = kraus_cirac(SWAP)
    assert kc.kc_number == 3 and np.allclose(kc.params, [QUARTER] * 3, atol=1e-12)
    assert gate_distance(kc.reconstruct(), SWAP) <= 1e-10
    assert kc_number(CNOT) == 1
    with pytest.raises(DecompositionError):
        kraus_cirac(np.diag([1, 1, 1, 2]))


def test_kc_json_fields():
    doc = kraus_cirac(CNOT).to_json()
    assert set(doc) == {"x", "y", "z", "kc", "u", "u'", "w", "w'"}
    assert set(doc["u"]) == {"dims", "re", "im"}


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_kc_reconstruction_and_chamber(seed):
    U = random_unitary(4, np.random.default_rng(seed))
    kc = kraus_cirac(U)
    assert gate_distance(kc.reconstruct(), U) <= 1e-9
    assert in_weyl_chamber(*kc.params)


@settings(max_examples=100, deadline=None)
@given(seeds, kcs)
def test_kc_local_invariance(seed, k):
    rng = np.random.default_rng(seed)
    U = random_unitary_with_kc(k, rng)
    a, b, c, d = (random_unitary(2, rng) for _ in range(4))
    V = kron(a, b) @ U @ kron(c, d)
    assert kc_number(V) == kc_number(U) == k
    assert np.allclose(kraus_cirac(V).params, kraus_cirac(U).params, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(seeds, kcs)
def test_kc_op_rank_table(seed, k):
    U = random_unitary_with_kc(k, np.random.default_rng(seed))
    assert op_rank(U) == {0: 1, 1: 2, 2: 4, 3: 4}[k]


def test_chamber_sampler(rng):
    for _ in range(50):
        p = random_chamber_point(rng)
        assert in_weyl_chamber(*p) and kc_number(u_global(*p)) == 3


def test_controlled_sequence_examples(rng):
    fs = controlled_sequence(CNOT, 1)
    assert len(fs) == 1 and gate_distance(fs[0], CNOT) <= 1e-8
    with pytest.raises(NotDecomposable) as exc:
        controlled_sequence(SWAP, 2)
    assert exc.value.kc_number == 3
    U = random_unitary_with_kc(2, rng)
    fs = controlled_sequence(U, 2)
    assert len(fs) == 2 and gate_distance(fs[0] @ fs[1], U) <= 1e-8
    with pytest.raises(DecompositionError):
        controlled_sequence(U, 4)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 3))
def test_controlled_sequence_threshold(seed, k):
    U = random_unitary_with_kc(k, np.random.default_rng(seed))
    fs = controlled_sequence(U, k)
    prod = np.eye(4)
    for f in fs:
        assert op_rank(f) <= 2
        prod = prod @ f
    assert gate_distance(prod, U) <= 1e-8
    if k > 1:
        with pytest.raises(NotDecomposable):
            controlled_sequence(U, k - 1)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(0, 1))
def test_as_controlled_reconstructs(seed, k):
    F = random_unitary_with_kc(k, np.random.default_rng(seed))
    cf = as_controlled(F)
    assert gate_distance(cf.matrix(), F) <= 1e-9


@pytest.mark.parametrize("U", [SWAP, CNOT, u_global(0.3, 0.2, 0.1), np.eye(4)])
def test_three_cnot_examples(U):
    c = three_cnot_decompose(U)
    assert c.n_cnots == 3 and len(c.single_qubit_gates) == 8
    assert gate_distance(c.matrix(), U) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_three_cnot_random(seed):
    U = random_unitary(4, np.random.default_rng(seed))
    assert gate_distance(three_cnot_decompose(U).matrix(), U) <= 1e-8

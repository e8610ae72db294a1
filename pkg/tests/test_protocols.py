import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnetcode.decompositions import kraus_cirac, random_chamber_point, random_unitary_with_kc, u_global
from qnetcode.linalg import CNOT, SWAP, Qubit, StateVector, gate_distance, kron, random_state, random_unitary
from qnetcode.locc import Measure, ProtocolError, execute, validate, verify_unitary
from qnetcode.protocols import (
    BELL, EigenTable, NotImplementable, appendix_d_trace, butterfly_circuit, butterfly_gates,
    butterfly_protocol, grail_protocol, implement_full_two_qubit, ladder_protocol,
    pairwise_split_residual,
)

seeds = st.integers(0, 2**32 - 1)


def _verify(p, U, rng, n=5):
    res = verify_unitary(p, U, rng, n_random=n)
    assert res["min_fidelity"] >= 1 - 1e-9
    assert res["max_probability_defect"] <= 1e-10
    return res


def test_eigen_table():
    t = EigenTable(0.3, 0.2, 0.1)
    assert t.residual() < 1e-14
    assert np.allclose(t.eigenvalues[0], np.exp(0.2j))


def test_butterfly_circuit_then_gamma_is_u_global(rng):
    x, y, z = random_chamber_point(rng)
    U3 = butterfly_circuit(x, y, z).unitary()
    psi = random_state(2, rng)
    out = (U3 @ np.einsum("ac,b->abc", psi.reshape(2, 2), [1, 0]).reshape(-1)).reshape(2, 2, 2)
    target = u_global(x, y, z) @ psi
    XX = kron(np.array([[0, 1], [1, 0]]), np.array([[0, 1], [1, 0]]))
    for m in (0, 1):
        branch = out[:, m, :].reshape(-1)
        assert abs(np.linalg.norm(branch) ** 2 - 0.5) < 1e-12
        if m == 1:
            branch = XX @ branch
        assert abs(abs(np.vdot(target, branch)) ** 2 / 0.5 - 1) < 1e-12
    g = butterfly_gates(x, y, z)
    assert np.allclose(g["first"][1], np.diag([1, -1])) and np.allclose(g["first"][0], np.eye(2))


def test_butterfly_identity_channel(rng):
    bp = butterfly_protocol(0, 0, 0)
    assert validate(bp.protocol).ok
    _verify(bp.protocol, np.eye(4), rng, n=3)


def test_butterfly_eigenvalues_on_bell_inputs():
    x, y, z = 0.5, 0.3, 0.2
    p = butterfly_protocol(x, y, z).protocol
    lam = EigenTable(x, y, z).eigenvalues
    # a superposition of two eigenvectors exposes their relative eigenphase
    for j, k in ((0, 1), (0, 2), (1, 3)):
        vec = (BELL[j] + BELL[k]) / np.sqrt(2)
        bs = execute(p, StateVector([Qubit(l, n) for l, n in p.inputs], vec), merge=True)
        target = StateVector(list(p.outputs), (lam[j] * BELL[j] + lam[k] * BELL[k]) / np.sqrt(2))
        assert min(bs.fidelities(target)) >= 1 - 1e-12


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_butterfly_random(seed):
    rng = np.random.default_rng(seed)
    x, y, z = random_chamber_point(rng)
    bp = butterfly_protocol(x, y, z)
    assert gate_distance(bp.target, u_global(x, y, z)) == 0
    _verify(bp.protocol, bp.target, rng, n=20)


def test_butterfly_gamma_probability_is_half(rng):
    bp = butterfly_protocol(*random_chamber_point(rng))
    p = bp.protocol
    gamma = [ins for ins in p.instructions if isinstance(ins, Measure)][-1].vars[0]
    for vec in list(BELL) + [random_state(2, rng) for _ in range(3)]:
        state = StateVector([Qubit(l, n) for l, n in p.inputs], vec)
        bs = execute(p, state, merge=True, keep=[gamma])
        p0 = sum(b.probability for b in bs.branches if b.outcomes[gamma] == 0)
        assert abs(p0 - 0.5) <= 1e-10


def test_butterfly_resource_accounting():
    bp = butterfly_protocol(0.4, 0.3, 0.1)
    assert sorted(bp.protocol.consumed_edges) == [f"E:{n}" for n in range(1, 8)]
    assert len(bp.cluster_protocol.consumed_edges) == 7


@pytest.mark.parametrize("U", [SWAP, CNOT])
def test_full_two_qubit_named(U, rng):
    _verify(implement_full_two_qubit(U), U, rng, n=20)


def test_full_two_qubit_local(rng):
    U = kron(random_unitary(2, rng), random_unitary(2, rng))
    assert kraus_cirac(U).kc_number == 0
    _verify(implement_full_two_qubit(U), U, rng)


def test_full_two_qubit_rejects_non_unitary():
    with pytest.raises((ValueError, ProtocolError)):
        implement_full_two_qubit(np.diag([1, 1, 1, 2]))


def test_trace_examples():
    x, y, z = 0.3, 0.2, 0.1
    steps = appendix_d_trace(x, y, z, 0)
    assert [s["step"] for s in steps] == ["i", "ii", "iii", "iv", "v", "vi", "vii"]
    v = steps[4]["state"].reshape(2, 2, 2)
    expect = np.exp(1j * (-y + z)) * BELL[0].reshape(2, 2)
    assert np.allclose(v[:, 0, :], expect) and np.allclose(v[:, 1, :], 0)
    s4 = appendix_d_trace(x, y, z, 1)[3]["state"].reshape(2, 2, 2)
    assert np.allclose(s4[:, 1, :], -BELL[1].reshape(2, 2)) and np.allclose(s4[:, 0, :], 0)
    for j in range(4):
        last = appendix_d_trace(x, y, z, j)[-1]
        assert all(abs(b["probability"] - 0.5) <= 1e-10 for b in last["branches"])
    with pytest.raises(ValueError):
        appendix_d_trace(x, y, z, 4)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 3))
def test_trace_matches_closed_forms(x, y, z, j):
    steps = appendix_d_trace(x, y, z, j)
    assert max(s["error"] for s in steps) <= 1e-10
    assert steps[-1]["probability_error"] <= 1e-10
    lam = EigenTable(x, y, z).eigenvalues[j]
    for b in steps[-1]["branches"]:
        out = b["state"].reshape(2, 2, 2)[:, b["outcome"], :].reshape(-1)
        assert np.allclose(out, lam * BELL[j], atol=1e-10)


def test_second_gate_is_not_pairwise_splittable(rng):
    g = butterfly_gates(*random_chamber_point(rng))
    assert pairwise_split_residual(g["first"])["splittable"]
    assert not pairwise_split_residual(g["second"])["splittable"]


@pytest.mark.parametrize("U", [SWAP, np.eye(4), u_global(0.4, 0.3, 0.1)])
def test_grail_examples(U, rng):
    p = grail_protocol(U)
    rep = validate(p)
    assert rep.ok and sorted(rep.consumed_edges) == sorted(f"E:{n}" for n in range(1, 10))
    _verify(p, U, rng)


def test_ladder_examples(rng):
    with pytest.raises(NotImplementable) as exc:
        ladder_protocol(SWAP, 2)
    assert exc.value.kc_number == 3
    _verify(ladder_protocol(SWAP, 3), SWAP, rng)
    _verify(ladder_protocol(CNOT, 1), CNOT, rng)


@settings(max_examples=12, deadline=None)
@given(seeds, st.integers(0, 3), st.integers(1, 4))
def test_ladder_resource_accounting(seed, k, N):
    rng = np.random.default_rng(seed)
    U = random_unitary_with_kc(k, rng)
    if k > N:
        with pytest.raises(NotImplementable):
            ladder_protocol(U, N)
        return
    p = ladder_protocol(U, N)
    horiz = [e for e in p.consumed_edges if e.startswith("K:")]
    vert = [e for e in p.consumed_edges if e.startswith("S:")]
    assert len(horiz) == 2 * (N - 1) and len(vert) <= N
    _verify(p, U, rng, n=3)

import numpy as np
import pytest

from qnetcode.decompositions import schmidt_rank
from qnetcode.linalg import PHI_PLUS
from qnetcode.network import (
    BUTTERFLY_NODES, NetworkError, build_butterfly, build_cluster, build_generalized, build_grail,
    build_resource_state, cluster_relabeling, cyclic_permutation_route, find_vertical_loops,
    load_network,
)


@pytest.mark.parametrize("k,N", [(3, 3), (2, 2), (1, 4), (4, 2)])
def test_cluster_edge_counts(k, N):
    net = build_cluster(k, N)
    assert len(net.vertical) == (k - 1) * N
    assert len(net.horizontal) == k * (N - 1)
    assert len(net.inputs) == len(net.outputs) == k
    for e in net.edges:
        (i, j), (i2, j2) = e.a, e.b
        assert abs(i - i2) + abs(j - j2) == 1


def test_cluster_rejects_empty():
    with pytest.raises(NetworkError):
        build_cluster(0, 2)


def test_resource_state_pairs():
    rs = build_resource_state(build_cluster(2, 2))
    assert rs.state.n_qubits == 8 and len(rs.pairs) == 4
    assert len(build_cluster(3, 2).edges) == 7
    for qa, qb in rs.pairs.values():
        others = [l for l in rs.state.labels if l not in (qa, qb)]
        # each pair is a |Phi+> factor with Schmidt rank 2 across its own cut
        assert schmidt_rank(rs.state, ([qa], [qb] + others)) == 2
        rho = rs.state.reorder([qa, qb] + others).amplitudes.reshape(4, -1)
        assert np.allclose(rho @ rho.conj().T, np.outer(PHI_PLUS, PHI_PLUS.conj()))


def test_resource_state_cap():
    with pytest.raises(NetworkError):
        build_resource_state(build_cluster(3, 3), cap=20)


def test_butterfly_maps_to_three_by_two_cluster():
    bf = build_butterfly()
    assert bf.node_map == BUTTERFLY_NODES
    assert {bf.edge_map[f"E:{n}"] for n in (1, 5, 3)} == {"K:1,1", "K:2,1", "K:3,1"}
    assert {bf.edge_map[f"E:{n}"] for n in (2, 4)} == {"S:1,1", "S:2,1"}
    assert {bf.edge_map[f"E:{n}"] for n in (6, 7)} == {"S:1,2", "S:2,2"}
    relabel = cluster_relabeling(bf)
    a = build_resource_state(bf).state
    b = build_resource_state(build_cluster(3, 2)).state
    mapped = [relabel[l] for l in a.labels]
    assert np.array_equal(b.reorder(mapped).amplitudes, a.amplitudes)


def test_grail_shape():
    g = build_grail()
    assert len(g.edges) == 9
    assert "E:1" not in g.edge_map and "E:2" not in g.edge_map
    assert set(g.edge_map.values()) == {e.id for e in build_cluster(2, 3).edges}


def test_loops():
    assert find_vertical_loops(build_cluster(3, 3)) == []
    tri = build_generalized(3, 1, [[1, 2, 1], [2, 3, 1], [1, 3, 1]])
    loops = find_vertical_loops(tri)
    assert len(loops) == 1 and len(loops[0]) == 3 and len(set(loops[0])) == 3
    assert find_vertical_loops(build_generalized(3, 1, [[1, 2, 1], [2, 3, 1]])) == []
    hops = cyclic_permutation_route(tri, loops[0])
    assert [h[2] for h in hops] == loops[0] and hops[0][0] == hops[-1][1]


def test_generalized_with_full_edges_matches_cluster():
    g = build_generalized(3, 2, [[1, 2, 1], [2, 3, 1], [1, 2, 2], [2, 3, 2]])
    c = build_cluster(3, 2)
    assert sorted(e.id for e in g.edges) == sorted(e.id for e in c.edges)
    a, b = build_resource_state(g).state, build_resource_state(c).state
    assert np.array_equal(a.reorder(b.labels).amplitudes, b.amplitudes)


@pytest.mark.parametrize("bad", [[[1, 1, 1]], [[1, 2, 5]], [[1, 2, 1], [2, 1, 1]], [[1, 2]]])
def test_generalized_rejects_bad_edges(bad):
    with pytest.raises(NetworkError):
        build_generalized(3, 2, bad)


def test_load_network():
    assert load_network({"kind": "cluster", "k": 2, "N": 3}).kind == "cluster"
    assert load_network({"kind": "butterfly"}).kind == "butterfly"
    g = load_network({"kind": "generalized", "k": 3, "N": 1, "vertical_edges": [[1, 3, 1]]})
    assert [e.id for e in g.vertical] == ["S:1-3,1"]
    with pytest.raises(NetworkError):
        load_network({"kind": "torus"})

"""Cluster networks, their named 2-pair relatives and Bell-pair resource states."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable

import networkx as nx
import numpy as np

from .linalg import PHI_PLUS, Qubit, StateVector

DEFAULT_QUBIT_CAP = 24


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    id: str
    kind: str  # "S" vertical, "K" horizontal, "E" named-network edge
    a: Hashable
    b: Hashable
    qa: str  # resource qubit held at node a
    qb: str  # resource qubit held at node b

    def other(self, node):
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise NetworkError(f"node {node} is not an endpoint of {self.id}")

    def qubit_at(self, node) -> str:
        if node == self.a:
            return self.qa
        if node == self.b:
            return self.qb
        raise NetworkError(f"node {node} is not an endpoint of {self.id}")


@dataclass(frozen=True)
class Network:
    kind: str  # cluster | generalized | butterfly | grail
    k: int
    N: int
    nodes: tuple
    edges: tuple
    inputs: tuple
    outputs: tuple
    # named networks: node name -> cluster coordinate, edge id -> cluster edge id
    node_map: dict = field(default_factory=dict, compare=False)
    edge_map: dict = field(default_factory=dict, compare=False)

    @property
    def vertical(self) -> list[Edge]:
        return [e for e in self.edges if e.kind == "S"]

    @property
    def horizontal(self) -> list[Edge]:
        return [e for e in self.edges if e.kind == "K"]

    def edge(self, edge_id: str) -> Edge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise NetworkError(f"unknown edge {edge_id!r}")

    def edge_between(self, a, b) -> Edge:
        for e in self.edges:
            if {e.a, e.b} == {a, b}:
                return e
        raise NetworkError(f"no edge between {a} and {b}")

    def has_edge(self, a, b) -> bool:
        return any({e.a, e.b} == {a, b} for e in self.edges)

    def qubit_nodes(self) -> dict[str, Hashable]:
        out = {}
        for e in self.edges:
            out[e.qa] = e.a
            out[e.qb] = e.b
        return out

    def n_resource_qubits(self) -> int:
        return 2 * len(self.edges)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        for e in self.edges:
            g.add_edge(e.a, e.b, id=e.id)
        return g

    def describe(self) -> dict:
        return {
            "kind": self.kind, "k": self.k, "N": self.N,
            "nodes": [_node_json(n) for n in self.nodes],
            "edges": [{"id": e.id, "a": _node_json(e.a), "b": _node_json(e.b)} for e in self.edges],
        }


def _node_json(n):
    return list(n) if isinstance(n, tuple) else n


def node_name(n) -> str:
    return f"v{n[0]},{n[1]}" if isinstance(n, tuple) else str(n)


def _s_edge(m: int, n: int, j: int) -> Edge:
    if n == m + 1:
        return Edge(f"S:{m},{j}", "S", (m, j), (n, j), f"S1[{m},{j}]", f"S2[{n},{j}]")
    return Edge(f"S:{m}-{n},{j}", "S", (m, j), (n, j), f"S1[{m},{j}|{n}]", f"S2[{n},{j}|{m}]")


def _k_edge(i: int, j: int) -> Edge:
    return Edge(f"K:{i},{j}", "K", (i, j), (i, j + 1), f"K1[{i},{j}]", f"K2[{i},{j + 1}]")


def build_cluster(k: int, N: int) -> Network:
    if int(k) < 1 or int(N) < 1:
        raise NetworkError("k and N must be at least 1")
    k, N = int(k), int(N)
    nodes = tuple((i, j) for i in range(1, k + 1) for j in range(1, N + 1))
    vertical = [_s_edge(i, i + 1, j) for j in range(1, N + 1) for i in range(1, k)]
    horizontal = [_k_edge(i, j) for i in range(1, k + 1) for j in range(1, N)]
    return Network(
        "cluster", k, N, nodes, tuple(vertical + horizontal),
        tuple((i, 1) for i in range(1, k + 1)), tuple((i, N) for i in range(1, k + 1)),
    )


def build_generalized(k: int, N: int, vertical_edges) -> Network:
    """Complete horizontal rows plus an arbitrary set of same-column pairs (m, n, j)."""
    base = build_cluster(k, N)
    seen, vertical = set(), []
    for spec in vertical_edges:
        try:
            m, n, j = (int(t) for t in spec)
        except (TypeError, ValueError) as exc:
            raise NetworkError(f"vertical edge must be [i, i', j], got {spec!r}") from exc
        m, n = min(m, n), max(m, n)
        if m == n or not (1 <= m and n <= k and 1 <= j <= N):
            raise NetworkError(f"vertical edge {spec!r} is not a same-column pair in range")
        if (m, n, j) in seen:
            raise NetworkError(f"duplicate vertical edge {spec!r}")
        seen.add((m, n, j))
        vertical.append(_s_edge(m, n, j))
    vertical.sort(key=lambda e: (e.a[1], e.a[0], e.b[0]))
    return Network("generalized", k, N, base.nodes, tuple(vertical) + tuple(base.horizontal),
                   base.inputs, base.outputs)


def _named_edge(n: int, a: str, b: str) -> Edge:
    return Edge(f"E:{n}", "E", a, b, f"E{n}a", f"E{n}b")


# Butterfly over the (3,2)-cluster: {E1,E5,E3} <-> K, {E2,E4} <-> S column 1,
# {E6,E7} <-> S column 2.
BUTTERFLY_NODES = {"i1": (1, 1), "n1": (2, 1), "i2": (3, 1), "o1": (1, 2), "n2": (2, 2), "o2": (3, 2)}
BUTTERFLY_EDGES = {
    1: ("i1", "o1", "K:1,1"), 5: ("n1", "n2", "K:2,1"), 3: ("i2", "o2", "K:3,1"),
    2: ("i1", "n1", "S:1,1"), 4: ("n1", "i2", "S:2,1"),
    6: ("o1", "n2", "S:1,2"), 7: ("n2", "o2", "S:2,2"),
}

# Grail over the (2,3)-cluster plus two teleport-only edges E1 (i1 -> n1) and E2 (n4 -> o2).
GRAIL_NODES = {"n1": (1, 1), "n2": (1, 2), "o1": (1, 3), "i2": (2, 1), "n3": (2, 2), "n4": (2, 3)}
GRAIL_EDGES = {
    1: ("i1", "n1", None), 2: ("n4", "o2", None),
    3: ("n1", "n2", "K:1,1"), 4: ("n2", "o1", "K:1,2"),
    5: ("i2", "n3", "K:2,1"), 6: ("n3", "n4", "K:2,2"),
    7: ("n1", "i2", "S:1,1"), 8: ("n2", "n3", "S:1,2"), 9: ("o1", "n4", "S:1,3"),
}


def build_butterfly() -> Network:
    edges = tuple(_named_edge(n, a, b) for n, (a, b, _) in sorted(BUTTERFLY_EDGES.items()))
    return Network(
        "butterfly", 3, 2, tuple(BUTTERFLY_NODES), edges, ("i1", "i2"), ("o1", "o2"),
        node_map=dict(BUTTERFLY_NODES),
        edge_map={f"E:{n}": c for n, (_, _, c) in BUTTERFLY_EDGES.items()},
    )


def build_grail() -> Network:
    edges = tuple(_named_edge(n, a, b) for n, (a, b, _) in sorted(GRAIL_EDGES.items()))
    nodes = ("i1",) + tuple(GRAIL_NODES) + ("o2",)
    return Network(
        "grail", 2, 3, nodes, edges, ("i1", "i2"), ("o1", "o2"),
        node_map=dict(GRAIL_NODES),
        edge_map={f"E:{n}": c for n, (_, _, c) in GRAIL_EDGES.items() if c},
    )


def cluster_relabeling(named: Network) -> dict[str, str]:
    """Resource-qubit label map from a named network to its cluster image."""
    cluster = build_cluster(named.k, named.N)
    out = {}
    for e in named.edges:
        cid = named.edge_map.get(e.id)
        if cid is None:
            continue
        ce = cluster.edge(cid)
        if named.node_map[e.a] == ce.a:
            out[e.qa], out[e.qb] = ce.qa, ce.qb
        else:
            out[e.qa], out[e.qb] = ce.qb, ce.qa
    return out


def load_network(doc: dict) -> Network:
    kind = doc.get("kind")
    if kind == "cluster":
        return build_cluster(doc.get("k", 0), doc.get("N", 0))
    if kind == "generalized":
        return build_generalized(doc.get("k", 0), doc.get("N", 0), doc.get("vertical_edges", []))
    if kind == "butterfly":
        return build_butterfly()
    if kind == "grail":
        return build_grail()
    raise NetworkError(f"unknown network kind {kind!r}")


# -- resource state ---------------------------------------------------------


@dataclass(frozen=True)
class ResourceState:
    state: StateVector
    pairs: dict  # edge id -> (qubit at a, qubit at b)


def build_resource_state(net: Network, cap: int = DEFAULT_QUBIT_CAP) -> ResourceState:
    n = net.n_resource_qubits()
    if n > cap:
        raise NetworkError(f"resource state needs {n} qubits, cap is {cap}")
    register, amps = [], np.ones(1, dtype=complex)
    for e in net.edges:
        register += [Qubit(e.qa, e.a), Qubit(e.qb, e.b)]
        amps = np.kron(amps, PHI_PLUS)
    return ResourceState(StateVector(register, amps), {e.id: (e.qa, e.qb) for e in net.edges})


# -- loops ---------------------------------------------------------------


def find_vertical_loops(net: Network) -> list[list[str]]:
    """Cycles of vertical edges inside one column, as edge-id sequences."""
    loops = []
    for j in range(1, net.N + 1):
        col = [e for e in net.vertical if e.a[1] == j]
        g = nx.Graph()
        for e in col:
            g.add_edge(e.a[0], e.b[0], id=e.id)
        for cyc in sorted(_rotate_min(c) for c in nx.simple_cycles(g)):
            ids = [g.edges[cyc[t], cyc[(t + 1) % len(cyc)]]["id"] for t in range(len(cyc))]
            loops.append(ids)
    return loops


def _rotate_min(cycle):
    i = cycle.index(min(cycle))
    c = cycle[i:] + cycle[:i]
    # fixed orientation: second element smaller than last
    if len(c) > 2 and c[1] > c[-1]:
        c = [c[0]] + c[1:][::-1]
    return c


def cyclic_permutation_route(net: Network, loop: list[str]) -> list[tuple]:
    """Hops (from-node, to-node, edge-id) that rotate qubit states once around a loop."""
    hops = []
    edges = [net.edge(eid) for eid in loop]
    first, second = edges[0], edges[1]
    cur = first.a if first.a not in (second.a, second.b) else first.b
    for e in edges:
        nxt = e.other(cur)
        hops.append((cur, nxt, e.id))
        cur = nxt
    return hops

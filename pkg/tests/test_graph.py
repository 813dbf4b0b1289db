from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_gnep.errors import GraphError
from robust_gnep.graph import CommGraph, from_edges, kron_laplacian, make_topology


def test_complete_kappa():
    assert make_topology("complete", 5).kappa == pytest.approx(5.0, abs=1e-12)


def test_ring_kappa():
    assert make_topology("ring", 5).kappa == pytest.approx(2 - 2 * np.cos(4 * np.pi / 5), abs=1e-12)


def test_path_two_nodes():
    g = make_topology("path", 2)
    np.testing.assert_array_equal(g.laplacian, [[1, -1], [-1, 1]])
    assert g.kappa == pytest.approx(2.0)


def test_kron_by_hand():
    g = make_topology("path", 2)
    I = np.eye(2)
    np.testing.assert_array_equal(kron_laplacian(g, 2), np.block([[I, -I], [-I, I]]))
    np.testing.assert_array_equal(kron_laplacian(g, 1), g.laplacian)


@pytest.mark.parametrize("kind", ["ring", "complete", "star", "path"])
@pytest.mark.parametrize("b", [1, 2, 5])
def test_kron_preserves_norm(kind, b):
    g = make_topology(kind, 5)
    assert np.linalg.norm(kron_laplacian(g, b), 2) == pytest.approx(g.kappa, abs=1e-12)


def test_rejects_small_and_disconnected():
    with pytest.raises(GraphError):
        make_topology("ring", 1)
    with pytest.raises(GraphError):
        from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(GraphError):
        from_edges(3, [(0, 0), (1, 2)])
    with pytest.raises(GraphError):
        make_topology("hypercube", 4)


def test_named_topology_round_trip():
    g = make_topology("star", 5)
    d = g.to_dict()
    assert d == {"kind": "star", "n": 5}
    assert make_topology(d["kind"], d["n"]) == g
    e = from_edges(3, [(0, 1), (1, 2)])
    assert make_topology("edges", 3, e.to_dict()["edges"]) == e


def _bfs_connected(n, edges):
    adj = {i: set() for i in range(n)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, q = {0}, deque([0])
    while q:
        for j in adj[q.popleft()] - seen:
            seen.add(j)
            q.append(j)
    return len(seen) == n


edge_sets = st.integers(2, 7).flatmap(
    lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
                                            .filter(lambda e: e[0] < e[1]), max_size=n * (n - 1) // 2)))


@settings(max_examples=200, deadline=None)
@given(edge_sets)
def test_laplacian_rows_and_connectivity(data):
    n, edges = data
    g = CommGraph(n, frozenset(edges))
    ones = np.ones(n)
    assert np.all(g.laplacian @ ones == 0) and np.all(ones @ g.laplacian == 0)
    assert g.is_connected() == _bfs_connected(n, edges)
    if g.is_connected():
        assert g.algebraic_connectivity > 1e-9

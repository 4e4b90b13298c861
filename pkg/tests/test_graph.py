import numpy as np
import pytest

from flowreg.errors import DimensionError, DisconnectedGraphError, InvalidWeightsError
from flowreg.graph import (
    Graph,
    complete_graph,
    incidence,
    incidence_lift,
    is_connected,
    laplacian_pinv,
    path_graph,
    project_circulation,
    ring_graph,
    weighted_laplacian,
)


def random_connected_graph(rng, max_nodes=20):
    n = int(rng.integers(2, max_nodes + 1))
    edges = [(i, int(rng.integers(0, i))) for i in range(1, n)]  # random spanning tree
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        i, j = rng.choice(n, size=2, replace=False)
        edges.append((int(i), int(j)))
    return Graph(n, tuple(edges))


def test_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        Graph(2, ((0, 2),))
    with pytest.raises(ValueError):
        Graph(3, ((1, 1),))
    with pytest.raises(ValueError):
        Graph(0, ())


def test_from_one_based():
    g = Graph.from_one_based(3, [(1, 2), (2, 3), (3, 1)])
    assert g.edges == ((0, 1), (1, 2), (2, 0))


def test_incidence_two_nodes():
    g = Graph(2, ((0, 1),))
    assert np.array_equal(incidence(g), np.array([[1], [-1]]))


def test_incidence_three_ring():
    g = ring_graph(3)
    expected = np.array([[1, 0, -1], [-1, 1, 0], [0, -1, 1]])
    assert np.array_equal(incidence(g), expected)


def test_incidence_columns_sum_to_zero():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_connected_graph(rng)
        B = incidence(g)
        assert B.dtype == np.int64
        assert np.array_equal(B.sum(axis=0), np.zeros(g.edge_count, dtype=np.int64))


def test_incidence_lift_shape():
    g = ring_graph(3)
    lifted = incidence_lift(g, 2)
    assert lifted.shape == (6, 6)
    assert np.array_equal(lifted[:2, :2], np.eye(2))


def test_is_connected():
    assert is_connected(ring_graph(3))
    assert not is_connected(Graph(4, ((0, 1),)))
    assert is_connected(Graph(1, ()))


def test_weighted_laplacian_examples():
    g = Graph(2, ((0, 1),))
    L1 = weighted_laplacian(g, [1.0]).matrix
    assert np.allclose(L1, [[1, -1], [-1, 1]])
    L2 = weighted_laplacian(g, [2.0]).matrix
    assert np.allclose(L2, [[0.5, -0.5], [-0.5, 0.5]])

    ring = ring_graph(3)
    L = weighted_laplacian(ring, np.ones(3)).matrix
    adjacency = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float)
    assert np.allclose(L, 2 * np.eye(3) - adjacency)
    assert np.allclose(L @ np.ones(3), 0.0)


def test_weighted_laplacian_rejects_bad_weights():
    g = Graph(2, ((0, 1),))
    with pytest.raises(InvalidWeightsError):
        weighted_laplacian(g, [0.0])
    with pytest.raises(InvalidWeightsError):
        weighted_laplacian(g, [-1.0])
    with pytest.raises(DimensionError):
        weighted_laplacian(g, [1.0, 1.0])


def test_laplacian_pinv_two_node_eigendecomposition_oracle():
    L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    # independent oracle: invert the single nonzero eigenvalue
    lams, vecs = np.linalg.eigh(L)
    oracle = np.zeros((2, 2))
    for lam, vec in zip(lams, vecs.T):
        if lam > 1e-12:
            oracle += np.outer(vec, vec) / lam
    assert np.allclose(oracle, 0.25 * L)  # the eigenvalue is 2
    assert np.allclose(laplacian_pinv(L), oracle, atol=1e-12)


def test_laplacian_pinv_complete_graph():
    g = complete_graph(3)
    L = weighted_laplacian(g, np.ones(3)).matrix
    J = np.ones((3, 3))
    assert np.allclose(L, 3 * np.eye(3) - J)
    pinv = laplacian_pinv(L)
    assert np.allclose(pinv, (np.eye(3) - J / 3) / 3, atol=1e-12)
    assert np.allclose(L @ pinv, np.eye(3) - J / 3, atol=1e-12)


def test_laplacian_pinv_moore_penrose_axioms():
    rng = np.random.default_rng(1)
    for _ in range(25):
        g = random_connected_graph(rng, max_nodes=20)
        weights = rng.uniform(0.3, 4.0, size=g.edge_count)
        L = weighted_laplacian(g, weights).matrix
        P = laplacian_pinv(L)
        n = g.node_count
        assert np.allclose(L @ P @ L, L, atol=1e-10)
        assert np.allclose(P @ L @ P, P, atol=1e-10)
        assert np.allclose((L @ P).T, L @ P, atol=1e-10)
        assert np.allclose((P @ L).T, P @ L, atol=1e-10)
        assert np.allclose(L @ P, np.eye(n) - np.ones((n, n)) / n, atol=1e-10)
        assert np.allclose(P @ np.ones(n), 0.0, atol=1e-10)


def test_laplacian_pinv_rejects_disconnected():
    g = Graph(4, ((0, 1), (2, 3)))
    L = weighted_laplacian(g, np.ones(2))
    with pytest.raises(DisconnectedGraphError):
        laplacian_pinv(L)


def test_project_circulation_tree_is_zero():
    g = path_graph(4)
    v = np.array([1.0, -2.0, 0.5])
    assert np.allclose(project_circulation(g, v), 0.0, atol=1e-12)


def test_project_circulation_ring():
    g = ring_graph(3)
    ones = np.ones(3)
    assert np.allclose(project_circulation(g, ones), ones, atol=1e-12)
    u = np.array([0.3, -1.2, 2.0])
    differential = incidence(g).T @ u
    assert np.allclose(project_circulation(g, differential), 0.0, atol=1e-12)


def test_project_circulation_idempotent_and_orthogonal():
    rng = np.random.default_rng(2)
    for _ in range(20):
        g = random_connected_graph(rng, max_nodes=12)
        if g.edge_count == 0:
            continue
        v = rng.normal(size=g.edge_count)
        r = project_circulation(g, v)
        assert np.allclose(incidence(g) @ r, 0.0, atol=1e-10)
        assert np.allclose(project_circulation(g, r), r, atol=1e-10)
        assert abs(v @ v - (r @ r + (v - r) @ (v - r))) < 1e-10

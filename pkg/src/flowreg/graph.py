"""Oriented graphs, incidence/Laplacian matrices, and subspace projections.

Node indices are 0-based inside the package; scenario files use 1-based
indices and are converted on load (see :meth:`Graph.from_one_based`).
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DisconnectedGraphError, InvalidWeightsError

# Relative eigenvalue cutoff below which Laplacian eigenvalues count as zero.
_KERNEL_TOL = 1e-9


@dataclass(frozen=True)
class Graph:
    """Oriented graph with a fixed edge orientation.

    Each edge is a (tail, head) pair of distinct node indices. The
    orientation only fixes sign conventions; connectivity and all flow
    spaces treat the graph as undirected. Instances are immutable and
    safe to share between concurrent runs.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("graph needs at least one node")
        edges = tuple((int(t), int(h)) for t, h in self.edges)
        object.__setattr__(self, "edges", edges)
        for tail, head in edges:
            if not (0 <= tail < self.node_count and 0 <= head < self.node_count):
                raise ValueError(f"edge ({tail}, {head}) out of range for {self.node_count} nodes")
            if tail == head:
                raise ValueError(f"self-loop at node {tail} is not allowed")

    @classmethod
    def from_one_based(cls, node_count, edges):
        """Build a Graph from 1-based (tail, head) pairs as used in scenario files."""
        return cls(node_count, tuple((t - 1, h - 1) for t, h in edges))

    @property
    def edge_count(self):
        return len(self.edges)


def ring_graph(n):
    """Cycle on n >= 3 nodes with edges (0,1), (1,2), ..., (n-1,0)."""
    if n < 3:
        raise ValueError("a ring needs at least 3 nodes")
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def path_graph(n):
    """Path on n nodes with edges (0,1), ..., (n-2,n-1)."""
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def complete_graph(n):
    """Complete graph on n nodes, edges ordered lexicographically."""
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def incidence(graph):
    """Node-edge incidence matrix B with integer entries.

    Entry (i, k) is +1 if node i is the tail of edge k, -1 if it is the
    head, and 0 otherwise. Every column sums to zero.
    """
    B = np.zeros((graph.node_count, graph.edge_count), dtype=np.int64)
    for k, (tail, head) in enumerate(graph.edges):
        B[tail, k] = 1
        B[head, k] = -1
    return B


def incidence_lift(graph, output_dim=1):
    """Kronecker lift B (x) I_p of the incidence matrix for p-dimensional outputs."""
    B = incidence(graph).astype(float)
    if output_dim == 1:
        return B
    return np.kron(B, np.eye(output_dim))


def is_connected(graph):
    """True iff the underlying undirected graph is connected (breadth-first search)."""
    n = graph.node_count
    if n == 1:
        return True
    neighbors = [[] for _ in range(n)]
    for tail, head in graph.edges:
        neighbors[tail].append(head)
        neighbors[head].append(tail)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in neighbors[i]:
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())


@dataclass(frozen=True, eq=False)
class WeightedLaplacian:
    """Weighted Laplacian L = B diag(1/q) B^T together with its edge weights."""

    matrix: np.ndarray
    weights: np.ndarray


def weighted_laplacian(graph, weights):
    """Weighted Laplacian of the graph for strictly positive edge weights q_k.

    The weight convention matches the quadratic flow cost (1/2) q_k lambda_k^2:
    the Laplacian uses the inverse weights, L = B diag(1/q) B^T. L is
    symmetric positive semidefinite with the all-ones vector in its kernel.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (graph.edge_count,):
        raise DimensionError(
            f"expected {graph.edge_count} weights, got shape {weights.shape}")
    if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
        raise InvalidWeightsError("edge weights must be finite and strictly positive")
    B = incidence(graph).astype(float)
    L = (B / weights) @ B.T
    return WeightedLaplacian(matrix=0.5 * (L + L.T), weights=weights)


def laplacian_pinv(laplacian):
    """Moore-Penrose pseudoinverse of a (weighted) graph Laplacian.

    Computed by symmetric eigendecomposition, zeroing eigenvalues below
    1e-9 times the largest one. For a connected graph the kernel is
    exactly span{1}, so L L^+ = I - 11^T/n.

    Raises
    ------
    DisconnectedGraphError
        If more than one eigenvalue falls below the cutoff, i.e. the
        underlying graph is disconnected.
    """
    L = laplacian.matrix if isinstance(laplacian, WeightedLaplacian) else np.asarray(laplacian, dtype=float)
    lams, vecs = np.linalg.eigh(L)
    tol = _KERNEL_TOL * max(lams.max(initial=0.0), 0.0)
    zero = lams <= tol
    if zero.sum() > 1:
        raise DisconnectedGraphError(
            f"Laplacian kernel has dimension {int(zero.sum())}; graph is disconnected")
    inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, lams))
    pinv = (vecs * inv) @ vecs.T
    return 0.5 * (pinv + pinv.T)


def circulation_projector(graph):
    """Orthogonal projector of edge space onto the circulation space null(B)."""
    m = graph.edge_count
    if m == 0:
        return np.zeros((0, 0))
    B = incidence(graph).astype(float)
    return np.eye(m) - np.linalg.pinv(B) @ B


def project_circulation(graph, v):
    """Orthogonal projection of an edge vector onto the circulation space.

    The result r satisfies B r = 0 and v - r lies in the differential
    space range(B^T).
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (graph.edge_count,):
        raise DimensionError(f"expected an edge vector of length {graph.edge_count}")
    return circulation_projector(graph) @ v

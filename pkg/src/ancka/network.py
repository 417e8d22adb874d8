"""Core data types for attributed networks.

An attributed network couples a structure (hypergraph incidence, graph
adjacency, or a list of multiplex layer adjacencies) with an n x d node
attribute matrix. All structures are stored as scipy CSR matrices with
nonnegative finite entries; degree information is kept as vectors, never
materialized as diagonal matrices.

Instances are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp


class NetworkKind(Enum):
    HYPERGRAPH = "hypergraph"
    GRAPH = "graph"
    MULTIPLEX = "multiplex"


class KnnMode(Enum):
    EXACT = "exact"
    APPROX = "approx"
    AUTO = "auto"


#: Node count at or above which Auto KNN mode switches to the approximate index.
APPROX_KNN_THRESHOLD = 100_000


class NetworkError(ValueError):
    """Structural corruption or contract violation in network data."""


def check_sparse_nonneg(m: sp.csr_matrix, name: str = "matrix") -> sp.csr_matrix:
    """Canonicalize a CSR matrix and enforce the row-store invariants.

    Indices within each row end up strictly increasing and in range,
    duplicates summed, explicit zeros pruned. Negative or non-finite
    entries are fatal.
    """
    if not sp.issparse(m):
        raise NetworkError(f"{name}: expected a sparse matrix, got {type(m).__name__}")
    m = m.tocsr()
    if m.indices.size and (m.indices.min() < 0 or m.indices.max() >= m.shape[1]):
        raise NetworkError(f"{name}: column index out of range")
    m.sum_duplicates()
    m.sort_indices()
    m.eliminate_zeros()
    if m.data.size:
        if not np.all(np.isfinite(m.data)):
            raise NetworkError(f"{name}: non-finite values are not allowed")
        if m.data.min() < 0:
            raise NetworkError(f"{name}: negative values are not allowed")
    return m


def _as_attr_matrix(x, n: int):
    """Validate an attribute matrix (dense ndarray or sparse CSR) with n rows."""
    if sp.issparse(x):
        x = check_sparse_nonneg(x, "attributes")
    else:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise NetworkError("attributes: expected a 2-d matrix")
        if not np.all(np.isfinite(x)):
            raise NetworkError("attributes: non-finite values are not allowed")
    if x.shape[0] != n:
        raise NetworkError(f"attributes: {x.shape[0]} rows for a {n}-node network")
    return x


@dataclass(frozen=True)
class AttributedNetwork:
    """Tagged union of hypergraph / graph / multiplex structure plus attributes.

    Use the `hypergraph`, `graph`, and `multiplex` constructors; they
    validate shapes and canonicalize storage.
    """

    kind: NetworkKind
    n: int
    attributes: object  # n x d, ndarray or csr_matrix
    incidence: sp.csr_matrix | None = None       # m x n, hypergraph only
    adjacency: sp.csr_matrix | None = None       # n x n, graph only
    layers: tuple | None = None                  # L adjacencies, multiplex only
    directed: bool = False

    @staticmethod
    def hypergraph(incidence, attributes) -> "AttributedNetwork":
        h = check_sparse_nonneg(incidence, "incidence")
        n = h.shape[1]
        return AttributedNetwork(
            kind=NetworkKind.HYPERGRAPH,
            n=n,
            attributes=_as_attr_matrix(attributes, n),
            incidence=h,
        )

    @staticmethod
    def graph(adjacency, attributes, directed: bool = False) -> "AttributedNetwork":
        a = check_sparse_nonneg(adjacency, "adjacency")
        if a.shape[0] != a.shape[1]:
            raise NetworkError("adjacency must be square")
        n = a.shape[0]
        return AttributedNetwork(
            kind=NetworkKind.GRAPH,
            n=n,
            attributes=_as_attr_matrix(attributes, n),
            adjacency=a,
            directed=directed,
        )

    @staticmethod
    def multiplex(layers, attributes) -> "AttributedNetwork":
        if len(layers) < 2:
            raise NetworkError("a multiplex network needs at least 2 layers")
        checked = []
        for i, a in enumerate(layers):
            a = check_sparse_nonneg(a, f"layer {i}")
            if a.shape[0] != a.shape[1]:
                raise NetworkError(f"layer {i} adjacency must be square")
            checked.append(a)
        n = checked[0].shape[0]
        if any(a.shape[0] != n for a in checked):
            raise NetworkError("all multiplex layers must share the same node count")
        return AttributedNetwork(
            kind=NetworkKind.MULTIPLEX,
            n=n,
            attributes=_as_attr_matrix(attributes, n),
            layers=tuple(checked),
        )

    @property
    def num_edges(self) -> int:
        if self.kind is NetworkKind.HYPERGRAPH:
            return self.incidence.shape[0]
        if self.kind is NetworkKind.GRAPH:
            return self.adjacency.nnz
        return sum(a.nnz for a in self.layers)


@dataclass(frozen=True)
class BcmMatrix:
    """Binary cluster membership: one cluster id in [0, k) per node.

    Stored as the assignment vector; the one-hot n x k matrix is derived
    on demand.
    """

    assignment: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.ndim != 1:
            raise NetworkError("assignment must be a 1-d vector")
        if self.k < 1:
            raise NetworkError("k must be at least 1")
        if a.size and (a.min() < 0 or a.max() >= self.k):
            raise NetworkError("cluster ids must lie in [0, k)")
        object.__setattr__(self, "assignment", a)

    @property
    def n(self) -> int:
        return self.assignment.size

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def empty_clusters(self) -> np.ndarray:
        """Indices of empty clusters (a flagged degenerate state)."""
        return np.flatnonzero(self.cluster_sizes() == 0)

    def to_onehot(self) -> np.ndarray:
        y = np.zeros((self.n, self.k), dtype=np.float64)
        y[np.arange(self.n), self.assignment] = 1.0
        return y


@dataclass(frozen=True)
class ClusterParams:
    """Hyperparameters of the clustering engine.

    `knn_k=None` picks the per-network-type default at run time (10 for
    hypergraphs, 50 for small graphs/multiplex, 10 above the large-input
    threshold).
    """

    k: int
    alpha: float = 0.2
    beta: float = 0.5
    gamma: int = 3
    knn_k: int | None = None
    eps_q: float = 0.005
    t_a: int = 1000
    t_i: int = 25
    tau: int = 5
    seed: int = 0
    knn_mode: KnnMode = KnnMode.AUTO

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise NetworkError("alpha must lie in (0, 1)")
        if not 0.0 <= self.beta <= 1.0:
            raise NetworkError("beta must lie in [0, 1]")
        if self.gamma < 1:
            raise NetworkError("gamma must be a positive integer")
        if self.k < 1:
            raise NetworkError("k must be at least 1")
        if self.knn_k is not None and self.knn_k < 1:
            raise NetworkError("knn_k must be at least 1")
        if self.t_a < 1 or self.t_i < 0 or self.tau < 1:
            raise NetworkError("iteration counts must be positive")

    def validate_for(self, n: int) -> None:
        """Checks that depend on the network size."""
        if self.k > n:
            raise NetworkError(f"k={self.k} exceeds node count n={n}")
        if self.knn_k is not None and self.knn_k >= n:
            raise NetworkError(f"knn_k={self.knn_k} must be smaller than n={n}")


def default_knn_k(kind: NetworkKind, n: int) -> int:
    if kind is NetworkKind.HYPERGRAPH:
        return 10
    return 10 if n > APPROX_KNN_THRESHOLD else 50


@dataclass
class ValidationReport:
    """Counts from load-time cleanup and structural inspection."""

    dropped_small_hyperedges: int = 0
    merged_duplicate_edges: int = 0
    isolated_nodes: list = field(default_factory=list)
    zero_attr_nodes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def warn(self, msg: str) -> None:
        self.warnings.append(msg)
        warnings.warn(msg, stacklevel=3)


def _zero_attr_rows(x) -> np.ndarray:
    if sp.issparse(x):
        sums = np.asarray(abs(x).sum(axis=1)).ravel()
    else:
        sums = np.abs(x).sum(axis=1)
    return np.flatnonzero(sums == 0)


def symmetrize_union(a: sp.csr_matrix) -> sp.csr_matrix:
    """Pattern union max(A, A^T): one reversed edge for each directed edge."""
    return check_sparse_nonneg(a.maximum(a.T), "adjacency")


def validate_network(net: AttributedNetwork) -> tuple[AttributedNetwork, ValidationReport]:
    """Clean and inspect a network; returns the cleaned network and a report.

    Hyperedges with fewer than 2 incident nodes are dropped (with a
    warning), duplicate simple-graph edges are merged to weight 1, and
    isolated / zero-attribute nodes are listed. Structural corruption is
    fatal ahead of this point (construction already rejects it).
    """
    report = ValidationReport()
    report.zero_attr_nodes = _zero_attr_rows(net.attributes).tolist()

    if net.kind is NetworkKind.HYPERGRAPH:
        h = net.incidence
        sizes = np.diff(h.indptr)
        keep = sizes >= 2
        dropped = int((~keep).sum())
        if dropped:
            report.dropped_small_hyperedges = dropped
            report.warn(f"dropped {dropped} hyperedge(s) with fewer than 2 nodes")
            h = check_sparse_nonneg(h[keep], "incidence")
            net = AttributedNetwork(
                kind=net.kind, n=net.n, attributes=net.attributes, incidence=h
            )
        degrees = node_degrees(net)
    elif net.kind is NetworkKind.GRAPH:
        a = net.adjacency
        dup = int((a.data > 1).sum())
        loops = int(a.diagonal().astype(bool).sum())
        if dup or loops:
            if dup:
                report.merged_duplicate_edges = dup
                report.warn(f"merged {dup} duplicate edge(s) to weight 1")
            if loops:
                report.warn(f"dropped {loops} self-loop(s)")
            a = a.copy()
            a.data = np.minimum(a.data, 1.0)
            a.setdiag(0)
            a = check_sparse_nonneg(a, "adjacency")
            net = AttributedNetwork(
                kind=net.kind, n=net.n, attributes=net.attributes,
                adjacency=a, directed=net.directed,
            )
        degrees = node_degrees(net)
    else:
        degrees = node_degrees(net)

    report.isolated_nodes = np.flatnonzero(degrees == 0).tolist()
    return net, report


def node_degrees(net: AttributedNetwork) -> np.ndarray:
    """Structural degree per node.

    Hypergraph: number of incident hyperedges. Graph: degree of the
    symmetrized adjacency (pattern union for directed input). Multiplex:
    degrees summed across all layers.
    """
    if net.kind is NetworkKind.HYPERGRAPH:
        return np.asarray((net.incidence != 0).sum(axis=0)).ravel().astype(np.float64)
    if net.kind is NetworkKind.GRAPH:
        a = symmetrize_union(net.adjacency) if net.directed else net.adjacency
        return np.asarray((a != 0).sum(axis=1)).ravel().astype(np.float64)
    return np.sum(layer_degrees(net), axis=0)


def layer_degrees(net: AttributedNetwork) -> list[np.ndarray]:
    """Per-layer degree vectors of a multiplex network."""
    if net.kind is not NetworkKind.MULTIPLEX:
        raise NetworkError("layer_degrees requires a multiplex network")
    return [
        np.asarray((a != 0).sum(axis=1)).ravel().astype(np.float64) for a in net.layers
    ]


def hyperedge_sizes(net: AttributedNetwork) -> np.ndarray:
    if net.kind is not NetworkKind.HYPERGRAPH:
        raise NetworkError("hyperedge_sizes requires a hypergraph")
    return np.diff(net.incidence.indptr).astype(np.float64)

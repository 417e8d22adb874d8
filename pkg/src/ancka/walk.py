"""Transition operators of the joint random walk, plus dense oracles.

The walk stops with probability alpha at each of gamma steps; otherwise
it moves through the attribute KNN graph with per-node probability
beta_i, or through the network structure with probability 1 - beta_i.
The structural factor is never materialized as a full n x n matrix for
hypergraphs (node->edge and edge->node factors are applied in sequence)
or for multiplex graphs (layer transitions are averaged lazily per
product).

`dense_transition`, `dense_walk_scores`, and `brute_mhc_oracle` form the
independent brute-force route used to verify the sparse kernels and the
iterative conductance computation; they materialize everything densely
and are guarded to small inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .network import (
    AttributedNetwork,
    BcmMatrix,
    NetworkError,
    NetworkKind,
    node_degrees,
    symmetrize_union,
)

#: Hard cap for the dense oracles (test-only machinery).
DENSE_ORACLE_MAX_N = 2000


def _row_normalize(a: sp.csr_matrix) -> sp.csr_matrix:
    """D^-1 A with all-zero rows left all-zero."""
    rowsum = np.asarray(a.sum(axis=1)).ravel()
    inv = np.divide(1.0, rowsum, out=np.zeros_like(rowsum), where=rowsum > 0)
    p = (sp.diags(inv) @ a).tocsr()
    p.sort_indices()
    return p


def beta_vector(net: AttributedNetwork, knn_zero_rows: np.ndarray, beta: float) -> np.ndarray:
    """Per-node attribute-walk weight.

    0 for nodes with a zero attribute vector (or an empty KNN row), 1 for
    structurally isolated nodes with usable attributes, beta otherwise.
    """
    degrees = node_degrees(net)
    b = np.full(net.n, beta, dtype=np.float64)
    b[degrees == 0] = 1.0
    b[np.asarray(knn_zero_rows, dtype=bool)] = 0.0
    return b


def hypergraph_factors(net: AttributedNetwork) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Node->hyperedge and hyperedge->node transition factors.

    Their product is the structural transition matrix; it is applied in
    factored form and never materialized outside the dense oracle.
    """
    if net.kind is not NetworkKind.HYPERGRAPH:
        raise NetworkError("hypergraph_factors requires a hypergraph")
    h = net.incidence
    p_v = _row_normalize(h.T.tocsr())   # n x m, zero rows for isolated nodes
    p_e = _row_normalize(h)             # m x n
    return p_v, p_e


def graph_transition(net: AttributedNetwork) -> sp.csr_matrix:
    """Row-stochastic transition of a (symmetrized) graph adjacency."""
    if net.kind is not NetworkKind.GRAPH:
        raise NetworkError("graph_transition requires a graph")
    a = symmetrize_union(net.adjacency) if net.directed else net.adjacency
    return _row_normalize(a)


def multiplex_transition(net: AttributedNetwork) -> list[sp.csr_matrix]:
    """Per-layer transition matrices; averaged lazily at application time."""
    if net.kind is not NetworkKind.MULTIPLEX:
        raise NetworkError("multiplex_transition requires a multiplex network")
    return [_row_normalize(a) for a in net.layers]


@dataclass(frozen=True)
class WalkOperator:
    """All factors of the joint walk for one attributed network."""

    kind: NetworkKind
    n: int
    alpha: float
    gamma: int
    beta: np.ndarray                     # length-n vector of beta_i
    p_k: sp.csr_matrix                   # KNN transition
    p_v: sp.csr_matrix | None = None     # hypergraph: node -> edge
    p_e: sp.csr_matrix | None = None     # hypergraph: edge -> node
    p_n: sp.csr_matrix | None = None     # graph: node -> node
    layer_p: tuple | None = None         # multiplex: per-layer transitions
    selfloop: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    degrees: np.ndarray | None = None    # structural degrees (summed for multiplex)


def build_walk_operator(
    net: AttributedNetwork,
    p_k: sp.csr_matrix,
    knn_zero_rows: np.ndarray,
    alpha: float,
    beta: float,
    gamma: int,
) -> WalkOperator:
    """Assemble the walk operator for a validated network.

    Nodes that are isolated in the structure *and* have no usable
    attributes get a structural self-loop, keeping the walk well-defined
    without teleportation.
    """
    degrees = node_degrees(net)
    b = beta_vector(net, knn_zero_rows, beta)
    selfloop = np.flatnonzero((degrees == 0) & (b == 0.0))

    kw = dict(kind=net.kind, n=net.n, alpha=alpha, gamma=gamma, beta=b,
              p_k=p_k, selfloop=selfloop, degrees=degrees)
    if net.kind is NetworkKind.HYPERGRAPH:
        p_v, p_e = hypergraph_factors(net)
        return WalkOperator(p_v=p_v, p_e=p_e, **kw)
    if net.kind is NetworkKind.GRAPH:
        return WalkOperator(p_n=graph_transition(net), **kw)
    return WalkOperator(layer_p=tuple(multiplex_transition(net)), **kw)


def apply_structure(op: WalkOperator, m: np.ndarray) -> np.ndarray:
    """Structural transition times an n x c dense block (factored form)."""
    if m.shape[0] != op.n:
        raise NetworkError(f"block has {m.shape[0]} rows, operator expects {op.n}")
    if op.kind is NetworkKind.HYPERGRAPH:
        out = op.p_v @ (op.p_e @ m)
    elif op.kind is NetworkKind.GRAPH:
        out = op.p_n @ m
    else:
        out = op.layer_p[0] @ m
        for p in op.layer_p[1:]:
            out += p @ m
        out /= len(op.layer_p)
    if op.selfloop.size:
        out[op.selfloop] += m[op.selfloop]
    return out


def apply_structure_rowvec(op: WalkOperator, m: np.ndarray) -> np.ndarray:
    """Dense row-block (c x n) times the structural transition.

    Evaluated as transposed sparse-times-dense products so the factored
    hypergraph form stays unmaterialized.
    """
    if m.shape[1] != op.n:
        raise NetworkError(f"block has {m.shape[1]} columns, operator expects {op.n}")
    mt = np.ascontiguousarray(m.T)
    if op.kind is NetworkKind.HYPERGRAPH:
        out = (op.p_e.T @ (op.p_v.T @ mt)).T
    elif op.kind is NetworkKind.GRAPH:
        out = (op.p_n.T @ mt).T
    else:
        acc = op.layer_p[0].T @ mt
        for p in op.layer_p[1:]:
            acc += p.T @ mt
        out = acc.T / len(op.layer_p)
    out = np.ascontiguousarray(out)
    if op.selfloop.size:
        out[:, op.selfloop] += m[:, op.selfloop]
    return out


def apply_joint_transition(op: WalkOperator, m: np.ndarray) -> np.ndarray:
    """One joint-walk step applied to an n x c dense block.

    Computes (I-B) P_N M + B P_K M without materializing the combined
    transition matrix; cost is O(nnz * c).
    """
    m = np.asarray(m, dtype=np.float64)
    squeeze = m.ndim == 1
    if squeeze:
        m = m[:, None]
    struct = apply_structure(op, m)
    attr = op.p_k @ m
    out = (1.0 - op.beta)[:, None] * struct + op.beta[:, None] * attr
    return out.ravel() if squeeze else out


def dense_transition(op: WalkOperator) -> np.ndarray:
    """Materialized joint transition matrix (dense oracle path)."""
    if op.n > DENSE_ORACLE_MAX_N:
        raise NetworkError(
            f"dense oracle is limited to n <= {DENSE_ORACLE_MAX_N}, got {op.n}"
        )
    if op.kind is NetworkKind.HYPERGRAPH:
        p_n = (op.p_v @ op.p_e).toarray()
    elif op.kind is NetworkKind.GRAPH:
        p_n = op.p_n.toarray()
    else:
        p_n = sum(p.toarray() for p in op.layer_p) / len(op.layer_p)
    if op.selfloop.size:
        p_n[op.selfloop, op.selfloop] += 1.0
    b = op.beta[:, None]
    return (1.0 - b) * p_n + b * op.p_k.toarray()


def dense_walk_scores(op: WalkOperator) -> np.ndarray:
    """Walk stopping-probability matrix: alpha * sum of decayed powers.

    Entry [i, j] is the probability that a walk from node i terminates at
    node j within gamma steps.
    """
    p = dense_transition(op)
    n = p.shape[0]
    s = op.alpha * np.eye(n)
    power = np.eye(n)
    for step in range(1, op.gamma + 1):
        power = power @ p
        s += op.alpha * (1.0 - op.alpha) ** step * power
    return s


def brute_mhc_oracle(op: WalkOperator, y: BcmMatrix) -> float:
    """Multi-hop conductance of a membership matrix via the dense scores.

    Independent of the iterative evaluation in the engine; used to verify
    it. Fails on empty clusters (the normalization is undefined there).
    """
    if y.n != op.n:
        raise NetworkError("membership length does not match operator size")
    empty = y.empty_clusters()
    if empty.size:
        raise NetworkError(f"empty cluster(s) {empty.tolist()}: conductance undefined")
    s = dense_walk_scores(op)
    sizes = y.cluster_sizes().astype(np.float64)
    yhat = y.to_onehot() / np.sqrt(sizes)[y.assignment][:, None]
    psi = np.trace(yhat.T @ s @ yhat) / y.k
    return float(1.0 - psi)


def warn_if_unstochastic(op: WalkOperator, tol: float = 1e-12) -> None:
    """Sanity hook: every nonzero factor row must sum to 1 within tol."""
    factors = []
    if op.p_v is not None:
        factors += [("node-edge factor", op.p_v), ("edge-node factor", op.p_e)]
    if op.p_n is not None:
        factors.append(("graph transition", op.p_n))
    if op.layer_p is not None:
        factors += [(f"layer {i} transition", p) for i, p in enumerate(op.layer_p)]
    factors.append(("knn transition", op.p_k))
    for name, m in factors:
        rowsum = np.asarray(m.sum(axis=1)).ravel()
        bad = np.abs(rowsum[rowsum != 0] - 1.0) > tol
        if bad.any():
            warnings.warn(f"{name}: {int(bad.sum())} row(s) deviate from stochasticity")

"""Shared builders for randomized test instances.

`make_random_instance` produces small attributed networks of any kind
with deliberate degeneracies (zero-attribute rows, isolated nodes) so
the walk operators get exercised across every per-node weight branch.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ancka import AttributedNetwork, NetworkKind, validate_network
from ancka.knn import build_knn_adjacency, knn_search_exact, knn_transition
from ancka.walk import build_walk_operator

KINDS = (NetworkKind.HYPERGRAPH, NetworkKind.GRAPH, NetworkKind.MULTIPLEX)


def random_attributes(rng, n, with_zero_rows=True):
    d = int(rng.integers(3, 8))
    x = rng.random((n, d)) * (rng.random((n, d)) < 0.7)
    if with_zero_rows:
        x[rng.random(n) < 0.15] = 0.0
    return x


def random_incidence(rng, n):
    m = max(2, int(n * 1.5))
    rows, cols = [], []
    for e in range(m):
        size = int(rng.integers(2, 5))
        members = rng.choice(n, size=size, replace=False)
        rows += [e] * len(members)
        cols += list(members)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, n))


def random_adjacency(rng, n, p=0.15, isolate=0.1):
    a = (rng.random((n, n)) < p).astype(float)
    np.fill_diagonal(a, 0)
    iso = rng.random(n) < isolate
    a[iso] = 0
    a[:, iso] = 0
    return sp.csr_matrix(a)


def make_random_network(rng, kind, n):
    x = random_attributes(rng, n)
    if kind is NetworkKind.HYPERGRAPH:
        return AttributedNetwork.hypergraph(random_incidence(rng, n), x)
    if kind is NetworkKind.GRAPH:
        directed = bool(rng.random() < 0.5)
        return AttributedNetwork.graph(random_adjacency(rng, n), x, directed=directed)
    return AttributedNetwork.multiplex(
        [random_adjacency(rng, n) for _ in range(2)], x
    )


def make_operator(net, beta=0.5, gamma=3, alpha=0.2, knn_k=4):
    net, _ = validate_network(net)
    k_eff = min(knn_k, net.n - 1)
    lists = knn_search_exact(net.attributes, k_eff)
    g = build_knn_adjacency(lists, net.attributes)
    p_k, zero_rows = knn_transition(g)
    return build_walk_operator(net, p_k, zero_rows, alpha, beta, gamma), g


def make_random_instance(seed, kind=None, n=None, beta=None, gamma=None):
    """One random (operator, graph, network) triple with controlled knobs."""
    rng = np.random.default_rng(seed)
    if kind is None:
        kind = KINDS[seed % 3]
    if n is None:
        n = int(rng.integers(8, 51))
    if beta is None:
        beta = (0.0, 0.5, 1.0)[(seed // 3) % 3]
    if gamma is None:
        gamma = int(rng.integers(1, 4))
    net = make_random_network(rng, kind, n)
    op, g = make_operator(net, beta=beta, gamma=gamma)
    return op, g, net


def random_membership(rng, n, k):
    labels = rng.integers(0, k, size=n)
    labels[:k] = np.arange(k)  # no empty clusters
    return labels

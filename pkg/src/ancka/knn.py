"""Attribute KNN graph construction.

Builds the K-nearest-neighbor graph over attribute cosine similarity,
its weighted adjacency (mutual neighbors get twice the similarity,
one-sided selections get it once), and the row-stochastic transition
matrix used by the joint random walk.

Exact search is a blocked dense similarity scan with deterministic
tie-breaking (smaller node index wins). Approximate search uses an
inverted-file index over a k-means coarse quantizer and audits its own
recall against exact search on a node sample, escalating the probe count
until the target recall is met.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .network import APPROX_KNN_THRESHOLD, KnnMode, NetworkError

_PAD = -1


@dataclass(frozen=True)
class NeighborLists:
    """Per-node top-K neighbor ids with cosine scores, padded with -1."""

    ids: np.ndarray      # (n, K) int64, -1 where the list is shorter
    scores: np.ndarray   # (n, K) float64
    K: int

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        valid = self.ids[i] != _PAD
        return self.ids[i][valid], self.scores[i][valid]


@dataclass(frozen=True)
class KnnGraph:
    adjacency: sp.csr_matrix   # n x n symmetric weighted adjacency
    neighbors: NeighborLists
    mode_used: KnnMode


def _normalize_rows(x):
    """L2-normalize rows; all-zero rows stay zero. Returns (dense|csr, norms)."""
    if sp.issparse(x):
        x = x.tocsr().astype(np.float64)
        norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())
        inv = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
        xn = sp.diags(inv) @ x
        return xn.tocsr(), norms
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    inv = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
    return x * inv[:, None], norms


def cosine_sim(xi, xj) -> float:
    """Cosine similarity of two attribute rows; 0 if either row is all-zero."""
    if sp.issparse(xi):
        xi = np.asarray(xi.todense()).ravel()
    if sp.issparse(xj):
        xj = np.asarray(xj.todense()).ravel()
    xi = np.asarray(xi, dtype=np.float64).ravel()
    xj = np.asarray(xj, dtype=np.float64).ravel()
    ni = np.linalg.norm(xi)
    nj = np.linalg.norm(xj)
    if ni == 0.0 or nj == 0.0:
        return 0.0
    return float(xi @ xj) / (ni * nj)


def _ordered_top_k(sims: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest strictly-positive entries of one row.

    Ties at the selection boundary resolve to the smaller index; the
    returned indices are ordered by (descending value, ascending index).
    """
    positive = np.flatnonzero(sims > 0)
    if positive.size > k:
        vals = sims[positive]
        kth = np.partition(vals, vals.size - k)[vals.size - k]
        above = positive[vals > kth]
        ties = positive[vals == kth]
        positive = np.concatenate([above, ties[: k - above.size]])
        positive.sort()
    order = np.argsort(-sims[positive], kind="stable")
    return positive[order]


def _pack_lists(rows: list, k: int) -> NeighborLists:
    n = len(rows)
    ids = np.full((n, k), _PAD, dtype=np.int64)
    scores = np.zeros((n, k), dtype=np.float64)
    for i, (idx, val) in enumerate(rows):
        m = len(idx)
        ids[i, :m] = idx
        scores[i, :m] = val
    return NeighborLists(ids=ids, scores=scores, K=k)


def knn_search_exact(X, K: int, block_rows: int | None = None) -> NeighborLists:
    """Exact top-K cosine neighbors for every row of X.

    All-zero rows get an empty list; zero-similarity pairs are never
    neighbors. Deterministic: ties broken by smaller node index.
    """
    xn, norms = _normalize_rows(X)
    n = xn.shape[0]
    if K >= n:
        raise NetworkError(f"K={K} must be smaller than n={n}")
    if block_rows is None:
        block_rows = max(16, min(4096, int(2.5e7 // max(n, 1))))
    xnt = xn.T if not sp.issparse(xn) else xn.T.tocsc()

    rows = []
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        sims = xn[start:stop] @ xnt
        if sp.issparse(sims):
            sims = np.asarray(sims.todense())
        rr = np.arange(start, stop)
        sims[np.arange(stop - start), rr] = -1.0  # exclude self
        for i in range(stop - start):
            if norms[start + i] == 0.0:
                rows.append((np.empty(0, dtype=np.int64), np.empty(0)))
                continue
            sel = _ordered_top_k(sims[i], K)
            rows.append((sel.astype(np.int64), np.minimum(sims[i][sel], 1.0)))
    return _pack_lists(rows, K)


def _train_ivf(xn: np.ndarray, nlist: int, seed: int) -> np.ndarray:
    from sklearn.cluster import KMeans

    sample = xn
    max_train = 50 * nlist
    if xn.shape[0] > max_train:
        rng = np.random.default_rng(seed)
        sample = xn[rng.choice(xn.shape[0], size=max_train, replace=False)]
    km = KMeans(n_clusters=nlist, n_init=1, max_iter=25, random_state=seed)
    km.fit(sample)
    return km.cluster_centers_.astype(xn.dtype)


def knn_search_approx(
    X,
    K: int,
    recall_target: float = 0.9,
    seed: int = 0,
    nlist: int | None = None,
    nprobe: int | None = None,
    audit_size: int = 1000,
) -> NeighborLists:
    """Approximate top-K cosine neighbors via an inverted-file index.

    Recall is audited against exact search on a sample of at least
    `audit_size` nodes (the whole network when smaller). An audit below
    `recall_target` triggers a warning and probe-count escalation, never
    a failure: probing every partition degenerates to exact search.
    """
    xn, norms = _normalize_rows(X)
    if sp.issparse(xn):
        xn = np.asarray(xn.todense())
    xn = np.ascontiguousarray(xn, dtype=np.float32)
    n = xn.shape[0]
    if K >= n:
        raise NetworkError(f"K={K} must be smaller than n={n}")

    if nlist is None:
        nlist = int(min(4096, max(8, round(np.sqrt(n)))))
    nlist = min(nlist, n)
    if nprobe is None:
        nprobe = max(4, nlist // 32)
    nprobe = min(nprobe, nlist)

    centroids = _train_ivf(xn, nlist, seed)
    labels = _batched_argmax_assign(xn, centroids)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(nlist + 1))
    inv_lists = [order[bounds[c]: bounds[c + 1]] for c in range(nlist)]

    rng = np.random.default_rng(seed)
    m = min(n, max(audit_size, 1000))
    audit_idx = np.sort(rng.choice(n, size=m, replace=False))
    exact_ids = _exact_rows_for(xn, norms, audit_idx, K)

    while True:
        result = _ivf_search_all(xn, norms, centroids, inv_lists, K, nprobe)
        recall = _audit_recall(result, exact_ids, audit_idx)
        if recall >= recall_target or nprobe >= nlist:
            if recall < recall_target:
                warnings.warn(
                    f"approximate KNN recall {recall:.3f} below target "
                    f"{recall_target:.3f} even at exhaustive probing"
                )
            break
        old = nprobe
        nprobe = min(nlist, nprobe * 2)
        warnings.warn(
            f"approximate KNN recall {recall:.3f} < {recall_target:.3f}; "
            f"escalating probes {old} -> {nprobe}"
        )
    return result


def _batched_argmax_assign(xn: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    n = xn.shape[0]
    labels = np.empty(n, dtype=np.int64)
    block = max(1, int(2.5e7 // max(centroids.shape[0], 1)))
    for start in range(0, n, block):
        stop = min(start + block, n)
        labels[start:stop] = np.argmax(xn[start:stop] @ centroids.T, axis=1)
    return labels


def _exact_rows_for(xn: np.ndarray, norms: np.ndarray, idx: np.ndarray, K: int) -> dict:
    out = {}
    block = max(1, int(2.5e7 // max(xn.shape[0], 1)))
    for start in range(0, idx.size, block):
        chunk = idx[start: start + block]
        sims = xn[chunk] @ xn.T
        sims[np.arange(chunk.size), chunk] = -1.0
        for j, i in enumerate(chunk):
            if norms[i] == 0.0:
                out[int(i)] = np.empty(0, dtype=np.int64)
            else:
                out[int(i)] = _ordered_top_k(sims[j].astype(np.float64), K).astype(np.int64)
    return out


def _ivf_search_all(xn, norms, centroids, inv_lists, K, nprobe) -> NeighborLists:
    n = xn.shape[0]
    nlist = centroids.shape[0]
    rows = []
    block = max(1, int(2.5e7 // max(nlist, 1)))
    for start in range(0, n, block):
        stop = min(start + block, n)
        cd = xn[start:stop] @ centroids.T
        if nprobe >= nlist:
            probes = None
        else:
            probes = np.argpartition(-cd, nprobe - 1, axis=1)[:, :nprobe]
        for i in range(stop - start):
            q = start + i
            if norms[q] == 0.0:
                rows.append((np.empty(0, dtype=np.int64), np.empty(0)))
                continue
            if probes is None:
                cand = np.arange(n)
            else:
                cand = np.concatenate([inv_lists[c] for c in probes[i]])
                cand = np.sort(cand)
            sims = xn[cand] @ xn[q]
            sims[cand == q] = -1.0
            sel = _ordered_top_k(sims.astype(np.float64), K)
            ids = cand[sel].astype(np.int64)
            rows.append((ids, np.minimum(sims[sel].astype(np.float64), 1.0)))
    return _pack_lists(rows, K)


def _audit_recall(result: NeighborLists, exact_ids: dict, audit_idx: np.ndarray) -> float:
    hits = []
    for i in audit_idx:
        truth = exact_ids[int(i)]
        if truth.size == 0:
            continue
        got, _ = result.row(int(i))
        hits.append(np.isin(truth, got).mean())
    return float(np.mean(hits)) if hits else 1.0


def search_knn(X, K: int, mode: KnnMode = KnnMode.AUTO, seed: int = 0,
               recall_target: float = 0.9) -> tuple[NeighborLists, KnnMode]:
    """Mode dispatch: Auto uses exact search below the large-input threshold."""
    n = X.shape[0]
    if mode is KnnMode.AUTO:
        mode = KnnMode.EXACT if n < APPROX_KNN_THRESHOLD else KnnMode.APPROX
    if mode is KnnMode.EXACT:
        return knn_search_exact(X, K), KnnMode.EXACT
    return knn_search_approx(X, K, recall_target=recall_target, seed=seed), KnnMode.APPROX


def build_knn_adjacency(neighbors: NeighborLists, X, mode_used: KnnMode = KnnMode.EXACT) -> KnnGraph:
    """Weighted KNN adjacency: twice the similarity for mutual pairs, once otherwise.

    Built as M + M^T where M[i, j] holds the similarity for each selected
    neighbor j of i; mutual selections therefore sum to twice the score
    and the matrix is symmetric by construction.
    """
    n = neighbors.n
    valid = neighbors.ids != _PAD
    rows = np.repeat(np.arange(n), valid.sum(axis=1))
    cols = neighbors.ids[valid]
    vals = neighbors.scores[valid]
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    a_k = (m + m.T).tocsr()
    a_k.sort_indices()
    return KnnGraph(adjacency=a_k, neighbors=neighbors, mode_used=mode_used)


def knn_transition(g: KnnGraph) -> tuple[sp.csr_matrix, np.ndarray]:
    """Row-normalize the KNN adjacency to a transition matrix.

    All-zero adjacency rows stay all-zero; those nodes are flagged so the
    walk routes no probability mass to the attribute side.
    """
    a = g.adjacency
    rowsum = np.asarray(a.sum(axis=1)).ravel()
    zero_rows = rowsum == 0
    inv = np.where(zero_rows, 0.0, 1.0 / np.where(zero_rows, 1.0, rowsum))
    p_k = (sp.diags(inv) @ a).tocsr()
    p_k.sort_indices()
    return p_k, zero_rows


# On-disk neighbor-list cache.
#
# Layout (little-endian): magic b"AKNC", version u8, mode u8 (0 exact /
# 1 approx), reserved u16, n u64, K u32, then n*K records of
# (id u32, score f32). Absent slots store id 0xFFFFFFFF with score 0.

_CACHE_MAGIC = b"AKNC"
_CACHE_VERSION = 1
_CACHE_SENTINEL = 0xFFFFFFFF
_HEADER = struct.Struct("<4sBBHQI")


def cache_key(X, K: int, mode: KnnMode) -> str:
    """Content hash of (dataset, K, mode) identifying one neighbor cache."""
    h = hashlib.sha256()
    if sp.issparse(X):
        x = X.tocsr()
        h.update(np.asarray(x.indptr, dtype=np.int64).tobytes())
        h.update(np.asarray(x.indices, dtype=np.int64).tobytes())
        h.update(np.asarray(x.data, dtype=np.float64).tobytes())
    else:
        h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(struct.pack("<Iq", K, X.shape[1]))
    h.update(mode.value.encode())
    return h.hexdigest()[:32]


def save_neighbor_cache(path, neighbors: NeighborLists, mode: KnnMode) -> None:
    mode_code = 0 if mode is KnnMode.EXACT else 1
    n, k = neighbors.ids.shape
    ids = neighbors.ids.copy()
    ids[ids == _PAD] = _CACHE_SENTINEL
    rec = np.empty((n, k), dtype=[("id", "<u4"), ("score", "<f4")])
    rec["id"] = ids.astype(np.uint64).astype("<u4")
    rec["score"] = neighbors.scores.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_CACHE_MAGIC, _CACHE_VERSION, mode_code, 0, n, k))
        fh.write(rec.tobytes())


def load_neighbor_cache(path) -> tuple[NeighborLists, KnnMode]:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, version, mode_code, _, n, k = _HEADER.unpack(header)
        if magic != _CACHE_MAGIC or version != _CACHE_VERSION:
            raise NetworkError(f"{path}: not a neighbor cache file")
        rec = np.frombuffer(fh.read(), dtype=[("id", "<u4"), ("score", "<f4")])
    if rec.size != n * k:
        raise NetworkError(f"{path}: truncated neighbor cache")
    rec = rec.reshape(n, k)
    ids = rec["id"].astype(np.int64)
    ids[ids == _CACHE_SENTINEL] = _PAD
    scores = rec["score"].astype(np.float64)
    scores[ids == _PAD] = 0.0
    mode = KnnMode.EXACT if mode_code == 0 else KnnMode.APPROX
    return NeighborLists(ids=ids, scores=scores, K=k), mode

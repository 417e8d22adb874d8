"""Dataset loaders, synthetic planted-partition generator, and result emission.

File formats (node ids are 0-based contiguous integers):

* hypergraph: one hyperedge per line, whitespace-separated node ids; an
  optional ``#n <count>`` header pins the node count, otherwise it is
  inferred as max id + 1. Hyperedges with fewer than 2 distinct nodes
  are dropped with a warning.
* edge list: ``u v`` per line; self-loops dropped, duplicates merged to
  weight 1; same optional ``#n`` header.
* attributes: either a dense TSV (n rows of d tab-separated reals) or a
  sparse COO file with a ``#shape n d`` header and ``i j value`` lines.
* labels: one integer per line, in node order.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .network import (
    AttributedNetwork,
    ClusterParams,
    KnnMode,
    NetworkError,
    NetworkKind,
)

DENSE_TSV = "dense"
SPARSE_COO = "sparse"


def _parse_int(token: str, path, lineno: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise NetworkError(f"{path}:{lineno}: non-integer token {token!r}") from None
    if value < 0:
        raise NetworkError(f"{path}:{lineno}: negative node id {value}")
    return value


def _read_structure_lines(path):
    """Yields (lineno, tokens) plus the ``#n`` header value if present."""
    header_n = None
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "n" and len(parts) == 2:
                    header_n = _parse_int(parts[1], path, lineno)
                continue
            rows.append((lineno, line.split()))
    return header_n, rows


def load_hypergraph(path) -> sp.csr_matrix:
    """Incidence matrix (edges x nodes) from a hyperedge-per-line file."""
    header_n, rows = _read_structure_lines(path)
    edges = []
    max_id = -1
    dropped = 0
    for lineno, tokens in rows:
        ids = sorted({_parse_int(t, path, lineno) for t in tokens})
        if header_n is not None and ids and ids[-1] >= header_n:
            raise NetworkError(
                f"{path}:{lineno}: node id {ids[-1]} exceeds declared n={header_n}"
            )
        if len(ids) < 2:
            dropped += 1
            continue
        max_id = max(max_id, ids[-1])
        edges.append(ids)
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} hyperedge(s) with fewer than 2 nodes")
    if not edges:
        raise NetworkError(f"{path}: no hyperedges")
    n = header_n if header_n is not None else max_id + 1
    indptr = np.cumsum([0] + [len(e) for e in edges])
    indices = np.concatenate([np.asarray(e, dtype=np.int64) for e in edges])
    data = np.ones(indices.size, dtype=np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(len(edges), n))


def load_edge_list(path, directed: bool = False) -> sp.csr_matrix:
    """Adjacency matrix from ``u v`` lines; undirected input is stored symmetrically."""
    header_n, rows = _read_structure_lines(path)
    pairs = set()
    max_id = -1
    loops = 0
    dupes = 0
    for lineno, tokens in rows:
        if len(tokens) != 2:
            raise NetworkError(f"{path}:{lineno}: expected 'u v', got {len(tokens)} tokens")
        u = _parse_int(tokens[0], path, lineno)
        v = _parse_int(tokens[1], path, lineno)
        if header_n is not None and max(u, v) >= header_n:
            raise NetworkError(
                f"{path}:{lineno}: node id {max(u, v)} exceeds declared n={header_n}"
            )
        if u == v:
            loops += 1
            continue
        max_id = max(max_id, u, v)
        key = (u, v) if directed else (min(u, v), max(u, v))
        if key in pairs:
            dupes += 1
        else:
            pairs.add(key)
    if loops:
        warnings.warn(f"{path}: dropped {loops} self-loop(s)")
    if dupes:
        warnings.warn(f"{path}: merged {dupes} duplicate edge(s)")
    n = header_n if header_n is not None else max_id + 1
    if n <= 0:
        raise NetworkError(f"{path}: no edges")
    if pairs:
        arr = np.asarray(sorted(pairs), dtype=np.int64)
        rows_idx, cols_idx = arr[:, 0], arr[:, 1]
        if not directed:
            rows_idx = np.concatenate([rows_idx, arr[:, 1]])
            cols_idx = np.concatenate([cols_idx, arr[:, 0]])
        data = np.ones(rows_idx.size, dtype=np.float64)
        a = sp.csr_matrix((data, (rows_idx, cols_idx)), shape=(n, n))
    else:
        a = sp.csr_matrix((n, n), dtype=np.float64)
    return a


def load_multiplex(paths) -> list[sp.csr_matrix]:
    """Layer adjacencies over a shared node id space (n = global max id + 1)."""
    paths = list(paths)
    if len(paths) < 2:
        raise NetworkError("a multiplex network needs at least 2 layer files")
    layers = [load_edge_list(p, directed=False) for p in paths]
    for p, a in zip(paths, layers):
        if a.nnz == 0:
            raise NetworkError(f"{p}: empty layer")
    n = max(a.shape[0] for a in layers)
    return [_resized(a, n) for a in layers]


def _resized(a: sp.csr_matrix, n: int) -> sp.csr_matrix:
    if a.shape == (n, n):
        return a
    a = a.copy()
    a.resize((n, n))
    return a.tocsr()


def load_attributes(path, fmt: str = "auto", expect_n: int | None = None):
    """Attribute matrix, dense TSV or sparse COO (auto-detected by header)."""
    path = Path(path)
    if fmt == "auto":
        with open(path) as fh:
            first = fh.readline().strip()
        fmt = SPARSE_COO if first.startswith("#shape") else DENSE_TSV

    if fmt == DENSE_TSV:
        x = np.loadtxt(path, delimiter="\t", ndmin=2, dtype=np.float64)
    elif fmt == SPARSE_COO:
        shape = None
        rows, cols, vals = [], [], []
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#shape"):
                    parts = line.split()
                    if len(parts) != 3:
                        raise NetworkError(f"{path}:{lineno}: malformed #shape header")
                    shape = (int(parts[1]), int(parts[2]))
                    continue
                if line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 3:
                    raise NetworkError(f"{path}:{lineno}: expected 'i j value'")
                rows.append(_parse_int(parts[0], path, lineno))
                cols.append(_parse_int(parts[1], path, lineno))
                vals.append(float(parts[2]))
        if shape is None:
            raise NetworkError(f"{path}: sparse attributes need a '#shape n d' header")
        x = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    else:
        raise NetworkError(f"unknown attribute format {fmt!r}")

    if expect_n is not None and x.shape[0] != expect_n:
        raise NetworkError(
            f"{path}: {x.shape[0]} attribute rows for a {expect_n}-node network"
        )
    return x


def load_labels(path, expect_n: int | None = None) -> np.ndarray:
    labels = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            labels.append(_parse_int(line.split()[0], path, lineno))
    out = np.asarray(labels, dtype=np.int64)
    if expect_n is not None and out.size != expect_n:
        raise NetworkError(f"{path}: {out.size} labels for a {expect_n}-node network")
    return out


# -- synthetic planted partitions ------------------------------------------

def _block_labels(n: int, k: int) -> np.ndarray:
    return (np.arange(n) * k) // n


def _sample_pairs(rng, nodes_a, nodes_b, p: float, same: bool):
    """Bernoulli(p) edges between two node sets (upper triangle when same)."""
    if p <= 0:
        return []
    if same:
        idx = np.triu_indices(len(nodes_a), k=1)
        mask = rng.random(idx[0].size) < p
        return list(zip(nodes_a[idx[0][mask]], nodes_a[idx[1][mask]]))
    mask = rng.random((len(nodes_a), len(nodes_b))) < p
    ii, jj = np.nonzero(mask)
    return list(zip(nodes_a[ii], nodes_b[jj]))


def _sbm_adjacency(rng, labels: np.ndarray, k: int, intra_p: float, inter_p: float):
    n = labels.size
    blocks = [np.flatnonzero(labels == b) for b in range(k)]
    edges = []
    for b1 in range(k):
        edges += _sample_pairs(rng, blocks[b1], None, intra_p, same=True)
        for b2 in range(b1 + 1, k):
            edges += _sample_pairs(rng, blocks[b1], blocks[b2], inter_p, same=False)
    if not edges:
        return sp.csr_matrix((n, n), dtype=np.float64)
    arr = np.asarray(edges, dtype=np.int64)
    rows = np.concatenate([arr[:, 0], arr[:, 1]])
    cols = np.concatenate([arr[:, 1], arr[:, 0]])
    a = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    a.data = np.minimum(a.data, 1.0)
    return a


def _planted_hyperedges(rng, labels: np.ndarray, k: int, intra_p: float, inter_p: float):
    """Mixture of within-block and unrestricted random hyperedges.

    3n hyperedges total; the within-block share is calibrated so that
    intra_p == inter_p reduces to uniformly random subsets, making the
    labels uninformative.
    """
    n = labels.size
    blocks = [np.flatnonzero(labels == b) for b in range(k)]
    size = 3 if min(len(b) for b in blocks) >= 3 else 2

    def comb(m, r):
        out = 1.0
        for i in range(r):
            out *= max(m - i, 0) / (i + 1)
        return out

    weights = np.asarray([comb(len(b), size) for b in blocks])
    q = weights.sum() / max(comb(n, size), 1.0)
    rate = intra_p * q + inter_p * (1.0 - q)
    if rate <= 0:
        raise NetworkError("generator produced no hyperedges; raise intra_p/inter_p")
    m_total = 3 * n
    intra_share = intra_p * q / rate
    if round(m_total * intra_share) == 0:
        warnings.warn("expected intra-block degree is zero for these parameters")

    edges = []
    wsum = weights.sum()
    for _ in range(m_total):
        if wsum > 0 and rng.random() < intra_share:
            b = rng.choice(k, p=weights / wsum)
            edges.append(np.sort(rng.choice(blocks[b], size=size, replace=False)))
        else:
            for _ in range(64):  # reject all-within draws to keep the mixture exact
                e = np.sort(rng.choice(n, size=size, replace=False))
                if len(set(labels[e])) > 1 or k == 1:
                    break
            edges.append(e)
    if not edges:
        raise NetworkError("generator produced no hyperedges; raise intra_p/inter_p")
    indptr = np.cumsum([0] + [len(e) for e in edges])
    indices = np.concatenate(edges)
    return sp.csr_matrix(
        (np.ones(indices.size), indices, indptr), shape=(len(edges), n)
    )


def generate_synthetic(
    n: int,
    k: int,
    intra_p: float,
    inter_p: float,
    attr_dim: int,
    attr_noise: float,
    seed: int,
    kind: NetworkKind,
    layers: int = 2,
) -> tuple[AttributedNetwork, np.ndarray]:
    """Planted-partition network with block-indicator attributes.

    Attributes are the block indicator pattern mixed with uniform noise:
    ``attr_noise=0`` gives identical rows within a block and orthogonal
    rows across blocks.
    """
    if not (0.0 <= intra_p <= 1.0 and 0.0 <= inter_p <= 1.0):
        raise NetworkError("intra_p and inter_p must lie in [0, 1]")
    if attr_dim < k:
        raise NetworkError("attr_dim must be at least k")
    rng = np.random.default_rng(seed)
    labels = _block_labels(n, k)

    base = np.zeros((n, attr_dim), dtype=np.float64)
    starts = (np.arange(k + 1) * attr_dim) // k
    for b in range(k):
        base[labels == b, starts[b]: starts[b + 1]] = 1.0
    x = (1.0 - attr_noise) * base + attr_noise * rng.random((n, attr_dim))

    if kind is NetworkKind.HYPERGRAPH:
        h = _planted_hyperedges(rng, labels, k, intra_p, inter_p)
        net = AttributedNetwork.hypergraph(h, x)
    elif kind is NetworkKind.GRAPH:
        a = _sbm_adjacency(rng, labels, k, intra_p, inter_p)
        net = AttributedNetwork.graph(a, x, directed=False)
    else:
        mats = [_sbm_adjacency(rng, labels, k, intra_p, inter_p) for _ in range(layers)]
        net = AttributedNetwork.multiplex(mats, x)
    return net, labels


# -- on-disk dumps (round-trip with the loaders) ----------------------------

def save_hypergraph(path, incidence: sp.csr_matrix) -> None:
    h = incidence.tocsr()
    with open(path, "w") as fh:
        fh.write(f"#n {h.shape[1]}\n")
        for i in range(h.shape[0]):
            ids = h.indices[h.indptr[i]: h.indptr[i + 1]]
            fh.write(" ".join(map(str, ids)) + "\n")


def save_edge_list(path, adjacency: sp.csr_matrix, directed: bool = False) -> None:
    a = adjacency.tocoo()
    with open(path, "w") as fh:
        fh.write(f"#n {adjacency.shape[0]}\n")
        for u, v in zip(a.row, a.col):
            if directed or u < v:
                fh.write(f"{u} {v}\n")


def save_attributes(path, x, fmt: str = DENSE_TSV) -> None:
    if fmt == DENSE_TSV:
        dense = np.asarray(x.todense()) if sp.issparse(x) else np.asarray(x)
        np.savetxt(path, dense, delimiter="\t", fmt="%.17g")
    elif fmt == SPARSE_COO:
        coo = sp.coo_matrix(x)
        with open(path, "w") as fh:
            fh.write(f"#shape {coo.shape[0]} {coo.shape[1]}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v:.17g}\n")
    else:
        raise NetworkError(f"unknown attribute format {fmt!r}")


def save_labels(path, labels) -> None:
    np.savetxt(path, np.asarray(labels, dtype=np.int64), fmt="%d")


def save_network(out_dir, net: AttributedNetwork, labels=None,
                 attr_fmt: str = DENSE_TSV) -> dict:
    """Write a network to a directory; returns the file map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, object] = {"kind": net.kind.value}
    if net.kind is NetworkKind.HYPERGRAPH:
        p = out / "hypergraph.txt"
        save_hypergraph(p, net.incidence)
        files["net"] = [str(p)]
    elif net.kind is NetworkKind.GRAPH:
        p = out / "edges.txt"
        save_edge_list(p, net.adjacency, directed=net.directed)
        files["net"] = [str(p)]
    else:
        paths = []
        for i, a in enumerate(net.layers):
            p = out / f"layer{i}.txt"
            save_edge_list(p, a, directed=False)
            paths.append(str(p))
        files["net"] = paths
    ext = "tsv" if attr_fmt == DENSE_TSV else "coo"
    ap = out / f"attributes.{ext}"
    save_attributes(ap, net.attributes, fmt=attr_fmt)
    files["attr"] = str(ap)
    if labels is not None:
        lp = out / "labels.txt"
        save_labels(lp, labels)
        files["labels"] = str(lp)
    return files


# -- run configuration and result emission ----------------------------------

KIND_CODES = {
    "hg": (NetworkKind.HYPERGRAPH, False),
    "ug": (NetworkKind.GRAPH, False),
    "dg": (NetworkKind.GRAPH, True),
    "mg": (NetworkKind.MULTIPLEX, False),
}


@dataclass
class RunConfig:
    kind_code: str                       # hg | ug | dg | mg
    net_paths: list
    attr_path: str
    params: ClusterParams
    labels_path: str | None = None
    attr_format: str = "auto"
    output_path: str | None = None
    metrics: tuple = ("acc", "f1", "nmi", "ari")
    deterministic: bool = False
    knn_cache_dir: str | None = None
    report_dir: str | None = None

    def __post_init__(self):
        if self.kind_code not in KIND_CODES:
            raise NetworkError(f"unknown network kind {self.kind_code!r}")
        kind, _ = KIND_CODES[self.kind_code]
        if kind is NetworkKind.MULTIPLEX and len(self.net_paths) < 2:
            raise NetworkError("multiplex networks need at least 2 layer files")
        if kind is not NetworkKind.MULTIPLEX and len(self.net_paths) != 1:
            raise NetworkError(f"{self.kind_code} networks take exactly one file")
        for p in [*self.net_paths, self.attr_path,
                  *( [self.labels_path] if self.labels_path else [] )]:
            if not Path(p).exists():
                raise NetworkError(f"file not found: {p}")

    def to_dict(self) -> dict:
        p = self.params
        return {
            "kind": self.kind_code,
            "net": list(map(str, self.net_paths)),
            "attr": str(self.attr_path),
            "labels": str(self.labels_path) if self.labels_path else None,
            "k": p.k, "alpha": p.alpha, "beta": p.beta, "gamma": p.gamma,
            "knn_k": p.knn_k, "eps_q": p.eps_q, "t_a": p.t_a, "t_i": p.t_i,
            "tau": p.tau, "seed": p.seed, "knn_mode": p.knn_mode.value,
            "deterministic": self.deterministic,
            "metrics": list(self.metrics),
        }


def load_network_from_config(config: RunConfig) -> tuple[AttributedNetwork, np.ndarray | None]:
    kind, directed = KIND_CODES[config.kind_code]
    if kind is NetworkKind.HYPERGRAPH:
        h = load_hypergraph(config.net_paths[0])
        x = load_attributes(config.attr_path, config.attr_format, expect_n=h.shape[1])
        net = AttributedNetwork.hypergraph(h, x)
    elif kind is NetworkKind.GRAPH:
        a = load_edge_list(config.net_paths[0], directed=directed)
        x = load_attributes(config.attr_path, config.attr_format, expect_n=a.shape[0])
        net = AttributedNetwork.graph(a, x, directed=directed)
    else:
        mats = load_multiplex(config.net_paths)
        x = load_attributes(config.attr_path, config.attr_format, expect_n=mats[0].shape[0])
        net = AttributedNetwork.multiplex(mats, x)
    labels = (
        load_labels(config.labels_path, expect_n=net.n) if config.labels_path else None
    )
    return net, labels


def result_document(result, config: RunConfig, metrics: dict | None,
                    total_ms: float) -> dict:
    from . import __version__

    doc = {
        "version": __version__,
        "k": result.y.k,
        "assignment": result.y.assignment.tolist(),
        "mhc": result.mhc,
        "iterations": result.iterations,
        "timings_ms": {key: round(val, 3) for key, val in result.timings_ms.items()},
        "total_ms": round(total_ms, 3),
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "config": config.to_dict(),
    }
    if metrics is not None:
        doc["metrics"] = metrics
    if result.warnings:
        doc["warnings"] = result.warnings
    if result.error:
        doc["error"] = result.error
    return doc


def emit_result(doc: dict, path) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise NetworkError(f"cannot write result to {path}: {exc}") from exc

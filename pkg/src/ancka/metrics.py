"""Clustering quality metrics: accuracy, macro-F1, NMI, ARI.

Accuracy matches predicted clusters to ground-truth labels by optimal
assignment on the contingency table; macro-F1 reuses that matching. All
metrics are invariant under relabeling of either partition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray       # (k_pred, k_true) nonnegative ints
    pred_sizes: np.ndarray
    true_sizes: np.ndarray
    n: int


def _as_labels(x) -> np.ndarray:
    a = np.asarray(getattr(x, "assignment", x), dtype=np.int64)
    if a.ndim != 1:
        raise ValueError("labels must be a 1-d vector")
    return a


def _relabel(a: np.ndarray) -> np.ndarray:
    _, inv = np.unique(a, return_inverse=True)
    return inv


def contingency(pred, truth) -> ContingencyTable:
    p = _relabel(_as_labels(pred))
    t = _relabel(_as_labels(truth))
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} labels")
    kp = int(p.max()) + 1 if p.size else 0
    kt = int(t.max()) + 1 if t.size else 0
    counts = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(counts, (p, t), 1)
    return ContingencyTable(
        counts=counts,
        pred_sizes=counts.sum(axis=1),
        true_sizes=counts.sum(axis=0),
        n=p.size,
    )


def _best_matching(table: ContingencyTable) -> dict[int, int]:
    """Injective cluster->class matching maximizing total agreement."""
    rows, cols = linear_sum_assignment(table.counts, maximize=True)
    return dict(zip(rows.tolist(), cols.tolist()))


def accuracy(pred, truth) -> float:
    """Fraction of nodes on the diagonal of the optimally matched table."""
    table = contingency(pred, truth)
    match = _best_matching(table)
    agree = sum(table.counts[r, c] for r, c in match.items())
    return agree / table.n


def macro_f1(pred, truth) -> float:
    """Unweighted mean per-class F1 under the accuracy matching.

    Classes left without a matched cluster (or with zero overlap) score 0.
    """
    table = contingency(pred, truth)
    match = _best_matching(table)
    class_of = {c: r for r, c in match.items()}
    f1s = []
    for c in range(table.counts.shape[1]):
        r = class_of.get(c)
        if r is None:
            f1s.append(0.0)
            continue
        overlap = table.counts[r, c]
        if overlap == 0:
            f1s.append(0.0)
            continue
        precision = overlap / table.pred_sizes[r]
        recall = overlap / table.true_sizes[c]
        f1s.append(2 * precision * recall / (precision + recall))
    return float(np.mean(f1s)) if f1s else 0.0


def _entropy(sizes: np.ndarray, n: int) -> float:
    p = sizes[sizes > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth, normalization: str = "sqrt") -> float:
    """Normalized mutual information with natural logs.

    `normalization` is "sqrt" (geometric mean of the entropies, default)
    or "arithmetic". Conventions: 1 when the partitions are identical
    (including the both-trivial case), 0 when either entropy is zero and
    the partitions differ.
    """
    table = contingency(pred, truth)
    hp = _entropy(table.pred_sizes, table.n)
    ht = _entropy(table.true_sizes, table.n)
    # Identical as partitions: a one-to-one correspondence of nonempty blocks.
    identical = (
        table.counts.shape[0] == table.counts.shape[1]
        and bool(np.all((table.counts > 0).sum(axis=0) == 1))
        and bool(np.all((table.counts > 0).sum(axis=1) == 1))
    )
    if identical:
        return 1.0
    if hp == 0.0 or ht == 0.0:
        return 0.0
    nz = table.counts > 0
    pij = table.counts[nz] / table.n
    pi = (table.pred_sizes[:, None] / table.n * np.ones_like(table.counts, dtype=float))[nz]
    pj = (np.ones_like(table.counts, dtype=float) * table.true_sizes[None, :] / table.n)[nz]
    mi = float((pij * np.log(pij / (pi * pj))).sum())
    if normalization == "sqrt":
        denom = np.sqrt(hp * ht)
    elif normalization == "arithmetic":
        denom = (hp + ht) / 2.0
    else:
        raise ValueError(f"unknown NMI normalization {normalization!r}")
    return max(0.0, mi / denom)


def ari(pred, truth) -> float:
    """Adjusted Rand index under the permutation model; range [-0.5, 1]."""
    table = contingency(pred, truth)

    def comb2(x):
        x = np.asarray(x, dtype=np.float64)
        return x * (x - 1.0) / 2.0

    sum_ij = comb2(table.counts).sum()
    sum_a = comb2(table.pred_sizes).sum()
    sum_b = comb2(table.true_sizes).sum()
    total = comb2(np.array([table.n])).item()
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0 if sum_ij == expected else 0.0
    return float((sum_ij - expected) / (max_index - expected))


def score_all(pred, truth, nmi_normalization: str = "sqrt") -> dict[str, float]:
    return {
        "acc": accuracy(pred, truth),
        "f1": macro_f1(pred, truth),
        "nmi": nmi(pred, truth, normalization=nmi_normalization),
        "ari": ari(pred, truth),
    }

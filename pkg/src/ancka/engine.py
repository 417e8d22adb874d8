"""Clustering engine: greedy initialization, orthogonal iterations,
discretization, and multi-hop-conductance tracking.

The engine approximates the k+1 leading eigenvectors of the joint walk
transition by repeated multiply-then-QR steps, periodically rounds the
trailing k columns to a binary membership matrix, scores it by multi-hop
conductance, and keeps the best-scoring membership seen. Termination is
either subspace convergence (successive iterates within `eps_q` in
Frobenius norm) or three successive strictly increasing conductance
samples.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .knn import KnnGraph, build_knn_adjacency, knn_transition, search_knn
from .network import (
    AttributedNetwork,
    BcmMatrix,
    ClusterParams,
    NetworkError,
    default_knn_k,
    validate_network,
)
from .walk import (
    WalkOperator,
    apply_joint_transition,
    apply_structure_rowvec,
    build_walk_operator,
)

DISCRETIZE_MAX_ITER = 100
DISCRETIZE_TOL = 1e-10


@dataclass
class EngineState:
    """Mutable loop state, exposed on the result for inspection."""

    q: np.ndarray                    # n x (k+1) column-orthonormal block
    best_y: BcmMatrix
    best_mhc: float
    mhc_history: list = field(default_factory=list)   # (iteration, value) samples
    iteration: int = 0


@dataclass
class ClusterResult:
    y: BcmMatrix
    mhc: float
    iterations: int
    timings_ms: dict
    state: EngineState
    knn: KnnGraph
    operator: WalkOperator
    converged: bool
    stop_reason: str
    warnings: list = field(default_factory=list)
    error: str | None = None


class _Stopwatch:
    def __init__(self):
        self.totals = {}

    def add(self, key: str, t0: float) -> None:
        self.totals[key] = self.totals.get(key, 0.0) + (time.perf_counter() - t0) * 1e3


def normalize_bcm(y: BcmMatrix) -> np.ndarray:
    """Column-orthonormal membership: 1/sqrt(cluster size) on member rows."""
    sizes = y.cluster_sizes()
    if (sizes == 0).any():
        raise NetworkError(
            f"empty cluster(s) {y.empty_clusters().tolist()}: normalization undefined"
        )
    out = np.zeros((y.n, y.k), dtype=np.float64)
    out[np.arange(y.n), y.assignment] = 1.0 / np.sqrt(sizes[y.assignment])
    return out


def init_bcm(op: WalkOperator, k: int, t_i: int, alpha: float) -> BcmMatrix:
    """Greedy membership seeding around the k highest-degree nodes.

    Runs a structure-only restart walk from the candidate centers and
    assigns every node to its highest-scoring center; center rank breaks
    ties, as does an all-zero score row (such nodes go to center 0).
    """
    n = op.n
    if k > n:
        raise NetworkError(f"k={k} exceeds node count n={n}")
    deg = op.degrees
    by_degree = np.lexsort((np.arange(n), -deg))
    nonzero = int((deg > 0).sum())
    if k > nonzero:
        warnings.warn(
            f"only {nonzero} nodes have nonzero degree; "
            f"filling {k - nonzero} center(s) in index order"
        )
        chosen = list(by_degree[:nonzero])
        rest = [i for i in range(n) if i not in set(chosen)]
        chosen.extend(rest[: k - nonzero])
        centers = np.sort(np.asarray(chosen, dtype=np.int64))
    else:
        centers = np.sort(by_degree[:k])

    z0 = np.zeros((k, n), dtype=np.float64)
    z0[np.arange(k), centers] = 1.0
    pi0 = alpha * z0
    pi = pi0.copy()
    for _ in range(t_i):
        pi = (1.0 - alpha) * apply_structure_rowvec(op, pi) + pi0

    assignment = np.argmax(pi, axis=0)
    y = BcmMatrix(assignment=assignment, k=k)
    if y.empty_clusters().size:
        # Every center claims its own cluster; keeps the seed usable.
        warnings.warn("greedy init left empty cluster(s); pinning centers")
        assignment = assignment.copy()
        assignment[centers] = np.arange(k)
        y = BcmMatrix(assignment=assignment, k=k)
    return y


def orthogonal_step(
    op: WalkOperator, q_prev: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One multiply-then-QR subspace update with a sign-stable factorization.

    The R factor is forced to a nonnegative diagonal so successive
    iterates are directly comparable. A rank-deficient product gets its
    offending columns perturbed by seeded noise and is re-factored.
    """
    z = apply_joint_transition(op, q_prev)
    q, r = np.linalg.qr(z)
    d = np.abs(np.diag(r))
    bad = d < 1e-12 * max(1.0, d.max() if d.size else 1.0)
    if bad.any():
        warnings.warn(f"rank-deficient iterate; perturbing {int(bad.sum())} column(s)")
        z = z.copy()
        z[:, bad] += 1e-8 * rng.standard_normal((z.shape[0], int(bad.sum())))
        q, r = np.linalg.qr(z)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


@dataclass
class DiscretizeResult:
    y: BcmMatrix
    scores: np.ndarray       # final rotated score matrix, n x k
    objectives: list         # objective values of the selected run
    iterations: int
    converged: bool
    runs: tuple = ()         # (label, objectives) per initialization


def _reseed_empty_columns(assignment: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    """Move the largest-second-best-score node into each empty cluster.

    Donors come only from clusters of size >= 2, so no cluster is emptied
    in turn.
    """
    empties = np.flatnonzero(np.bincount(assignment, minlength=k) == 0)
    if not empties.size or k < 2 or scores.shape[1] < 2:
        return assignment
    assignment = assignment.copy()
    margin = np.partition(scores, -2, axis=1)[:, -2]
    for c in empties:
        sizes = np.bincount(assignment, minlength=k)
        movable = sizes[assignment] >= 2
        if not movable.any():
            break
        cand = np.where(movable, margin, -np.inf)
        assignment[int(np.argmax(cand))] = c
    return assignment


def _alternate_rounding(qt: np.ndarray, r: np.ndarray, max_iter: int, tol: float):
    """One alternating rounding/rotation run from a given initial rotation."""
    n, k = qt.shape
    objectives: list[float] = []
    assignment = np.zeros(n, dtype=np.int64)
    scores = qt @ r
    converged = False
    for _ in range(max_iter):
        scores = qt @ r
        assignment = np.argmax(scores, axis=1)
        assignment = _reseed_empty_columns(assignment, scores, k)
        sizes = np.bincount(assignment, minlength=k).astype(np.float64)
        ytil = np.zeros((n, k), dtype=np.float64)
        ytil[np.arange(n), assignment] = np.divide(
            1.0, sizes[assignment], out=np.zeros(n), where=sizes[assignment] > 0
        )
        u, omega, vh = np.linalg.svd(ytil.T @ qt)
        obj = n - 2.0 * float(omega.sum())
        objectives.append(obj)
        if len(objectives) >= 2 and abs(objectives[-1] - objectives[-2]) < tol:
            converged = True
            break
        r = vh.T @ u.T
    return assignment, scores, objectives, converged


def _prototype_rotation(qt: np.ndarray, k: int) -> np.ndarray:
    """Initial rotation from k greedily max-separated rows of the block."""
    n = qt.shape[0]
    r = np.zeros((k, k))
    r[:, 0] = qt[0]
    acc = np.zeros(n)
    for j in range(1, k):
        acc += np.abs(qt @ r[:, j - 1])
        r[:, j] = qt[int(np.argmin(acc))]
    return r


def discretize(q: np.ndarray, max_iter: int = DISCRETIZE_MAX_ITER,
               tol: float = DISCRETIZE_TOL) -> DiscretizeResult:
    """Round a continuous eigenvector block to binary memberships.

    Alternates row-argmax rounding of the rotated, row-normalized block
    with an orthogonal-Procrustes rotation update from the SVD of the
    column-normalized membership times the block, until the SVD objective
    stalls or `max_iter` rounds pass. Empty columns are re-seeded inside
    the loop. The alternation runs from both the identity rotation and a
    data-driven prototype rotation; the lower final objective wins (the
    identity start alone can park rotated inputs in a merged-column local
    optimum). Argmax ties go to the smaller column; all-zero input rows
    land in cluster 0 with a warning.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] < 1:
        raise NetworkError("discretize expects an n x k block with k >= 1")
    n, k = q.shape
    norms = np.linalg.norm(q, axis=1)
    zero_rows = norms == 0
    if zero_rows.any():
        warnings.warn(f"{int(zero_rows.sum())} all-zero row(s); assigning to cluster 0")
    qt = np.divide(q, norms[:, None], out=np.zeros_like(q), where=norms[:, None] > 0)

    best = None
    runs = []
    for label, r0 in (("identity", np.eye(k)), ("prototype", _prototype_rotation(qt, k))):
        assignment, scores, objectives, converged = _alternate_rounding(
            qt, r0, max_iter, tol
        )
        runs.append((label, objectives))
        if best is None or objectives[-1] < best[2][-1] - 1e-15:
            best = (assignment, scores, objectives, converged)

    assignment, scores, objectives, converged = best
    return DiscretizeResult(
        y=BcmMatrix(assignment=assignment, k=k),
        scores=scores,
        objectives=objectives,
        iterations=len(objectives),
        converged=converged,
        runs=tuple(runs),
    )


def repair_empty_clusters(y: BcmMatrix, scores: np.ndarray) -> BcmMatrix:
    """Re-seed empty clusters with the highest second-best-score nodes.

    Nodes are only taken from clusters of size >= 2 so the repair never
    empties another cluster.
    """
    empties = y.empty_clusters()
    if not empties.size:
        return y
    warnings.warn(f"re-seeding {empties.size} empty cluster(s) after discretization")
    assignment = y.assignment.copy()
    if scores.shape[1] >= 2:
        margin = np.partition(scores, -2, axis=1)[:, -2]
    else:
        margin = scores[:, 0]
    for c in empties:
        sizes = np.bincount(assignment, minlength=y.k)
        movable = sizes[assignment] >= 2
        if not movable.any():
            raise NetworkError("cannot repair empty clusters: no movable nodes")
        cand = np.where(movable, margin, -np.inf)
        assignment[int(np.argmax(cand))] = c
    return BcmMatrix(assignment=assignment, k=y.k)


def calc_mhc(op: WalkOperator, y: BcmMatrix) -> float:
    """Multi-hop conductance of a membership via the iterative sparse form."""
    yhat = normalize_bcm(y)
    f0 = op.alpha * yhat
    f = f0.copy()
    for _ in range(op.gamma):
        f = (1.0 - op.alpha) * apply_joint_transition(op, f) + f0
    psi = float(np.einsum("ij,ij->", yhat, f)) / y.k
    return 1.0 - psi


def build_pipeline(
    net: AttributedNetwork, params: ClusterParams, knn_cache_dir=None
) -> tuple[WalkOperator, KnnGraph, dict]:
    """Validate, build the KNN graph and the walk operator. Returns timings."""
    from pathlib import Path

    from . import knn as knn_mod

    watch = _Stopwatch()
    net, report = validate_network(net)
    params.validate_for(net.n)

    t0 = time.perf_counter()
    k_neighbors = params.knn_k if params.knn_k is not None else default_knn_k(net.kind, net.n)
    if k_neighbors >= net.n:
        warnings.warn(f"clamping KNN K={k_neighbors} to n-1={net.n - 1}")
        k_neighbors = net.n - 1

    neighbors = None
    mode_used = None
    cache_path = None
    if knn_cache_dir is not None:
        key = knn_mod.cache_key(net.attributes, k_neighbors, params.knn_mode)
        cache_path = Path(knn_cache_dir) / f"{key}.aknn"
        if cache_path.exists():
            neighbors, mode_used = knn_mod.load_neighbor_cache(cache_path)
    if neighbors is None:
        neighbors, mode_used = search_knn(
            net.attributes, k_neighbors, mode=params.knn_mode, seed=params.seed
        )
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            knn_mod.save_neighbor_cache(cache_path, neighbors, mode_used)
    g = build_knn_adjacency(neighbors, net.attributes, mode_used=mode_used)
    p_k, zero_rows = knn_transition(g)
    watch.add("knn_ms", t0)

    op = build_walk_operator(net, p_k, zero_rows, params.alpha, params.beta, params.gamma)
    return op, g, watch.totals


def run_ancka(
    net: AttributedNetwork,
    params: ClusterParams,
    knn_cache_dir=None,
    early_stop: bool = True,
) -> ClusterResult:
    """Full clustering pipeline on an attributed network.

    Returns the best-conductance membership seen across all sampled
    iterations; on a mid-run failure the best membership so far is
    returned with the error recorded.
    """
    watch = _Stopwatch()
    caught: list[str] = []
    with warnings.catch_warnings(record=True) as wrec:
        warnings.simplefilter("always")
        op, g, knn_timings = build_pipeline(net, params, knn_cache_dir=knn_cache_dir)
        watch.totals.update(knn_timings)

        t0 = time.perf_counter()
        y0 = init_bcm(op, params.k, params.t_i, params.alpha)
        watch.add("init_ms", t0)

        rng = np.random.default_rng(params.seed)
        n = op.n
        yhat0 = normalize_bcm(y0)
        q = np.concatenate([np.full((n, 1), 1.0 / np.sqrt(n)), yhat0], axis=1)
        if q.shape[1] > n:  # degenerate k ~ n: the block cannot be wider than n
            q = q[:, : n]

        t0 = time.perf_counter()
        best_mhc = calc_mhc(op, y0)
        watch.add("mhc_ms", t0)
        state = EngineState(q=q, best_y=y0, best_mhc=best_mhc,
                            mhc_history=[(0, best_mhc)])

        error = None
        stop_reason = "max_iterations"
        converged = False
        try:
            for t in range(1, params.t_a + 1):
                state.iteration = t
                q_prev = state.q
                t0 = time.perf_counter()
                state.q, _ = orthogonal_step(op, q_prev, rng)
                watch.add("ortho_ms", t0)

                if t % params.tau != 0:
                    continue

                t0 = time.perf_counter()
                disc = discretize(state.q[:, 1:])
                y_t = BcmMatrix(assignment=disc.y.assignment, k=params.k)
                y_t = repair_empty_clusters(y_t, disc.scores)
                watch.add("discretize_ms", t0)

                t0 = time.perf_counter()
                phi_t = calc_mhc(op, y_t)
                watch.add("mhc_ms", t0)
                state.mhc_history.append((t, phi_t))
                if phi_t < state.best_mhc:
                    state.best_mhc = phi_t
                    state.best_y = y_t

                if state.q.shape == q_prev.shape:
                    dq = float(np.linalg.norm(state.q - q_prev))
                    if dq < params.eps_q:
                        stop_reason = "subspace_converged"
                        converged = True
                        break
                if early_stop and len(state.mhc_history) >= 3:
                    phis = [v for _, v in state.mhc_history[-3:]]
                    if phis[0] < phis[1] < phis[2]:
                        stop_reason = "mhc_rising"
                        converged = True
                        break
        except NetworkError as exc:  # return best-so-far with the error flagged
            error = str(exc)
            stop_reason = "error"
        caught = [str(w.message) for w in wrec]

    return ClusterResult(
        y=state.best_y,
        mhc=state.best_mhc,
        iterations=state.iteration,
        timings_ms={key: watch.totals.get(key, 0.0) for key in
                    ("knn_ms", "init_ms", "ortho_ms", "discretize_ms", "mhc_ms")},
        state=state,
        knn=g,
        operator=op,
        converged=converged,
        stop_reason=stop_reason,
        warnings=caught,
        error=error,
    )

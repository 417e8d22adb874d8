"""Attributed network clustering via KNN augmentation and joint random
walks, optimizing multi-hop conductance with orthogonal iterations and
discretization.

Supports attributed hypergraphs, (un)directed graphs, and multiplex
graphs behind one engine, plus quality metrics, dataset loaders, a
synthetic generator, and dense brute-force oracles for verification.
"""

__version__ = "0.1.0"

from .engine import (
    ClusterResult,
    EngineState,
    calc_mhc,
    discretize,
    init_bcm,
    normalize_bcm,
    orthogonal_step,
    run_ancka,
)
from .io import generate_synthetic
from .knn import (
    KnnGraph,
    NeighborLists,
    build_knn_adjacency,
    cosine_sim,
    knn_search_approx,
    knn_search_exact,
    knn_transition,
    search_knn,
)
from .metrics import accuracy, ari, macro_f1, nmi, score_all
from .network import (
    AttributedNetwork,
    BcmMatrix,
    ClusterParams,
    KnnMode,
    NetworkError,
    NetworkKind,
    node_degrees,
    validate_network,
)
from .walk import (
    WalkOperator,
    apply_joint_transition,
    beta_vector,
    brute_mhc_oracle,
    build_walk_operator,
    dense_transition,
    dense_walk_scores,
    graph_transition,
    hypergraph_factors,
    multiplex_transition,
)

__all__ = [
    "__version__",
    "AttributedNetwork",
    "BcmMatrix",
    "ClusterParams",
    "ClusterResult",
    "EngineState",
    "KnnGraph",
    "KnnMode",
    "NeighborLists",
    "NetworkError",
    "NetworkKind",
    "WalkOperator",
    "accuracy",
    "apply_joint_transition",
    "ari",
    "beta_vector",
    "brute_mhc_oracle",
    "build_knn_adjacency",
    "build_walk_operator",
    "calc_mhc",
    "cosine_sim",
    "dense_transition",
    "dense_walk_scores",
    "discretize",
    "generate_synthetic",
    "graph_transition",
    "hypergraph_factors",
    "init_bcm",
    "knn_search_approx",
    "knn_search_exact",
    "knn_transition",
    "macro_f1",
    "multiplex_transition",
    "nmi",
    "node_degrees",
    "normalize_bcm",
    "orthogonal_step",
    "run_ancka",
    "score_all",
    "search_knn",
    "validate_network",
]

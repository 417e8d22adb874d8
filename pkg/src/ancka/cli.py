"""Command-line driver.

Subcommands:

* ``ancka run``    — cluster a dataset and write a JSON result.
* ``ancka gen``    — write a synthetic planted-partition dataset.
* ``ancka oracle`` — score a given assignment with the dense
                     brute-force conductance (small inputs only).

Exit codes: 0 success, 2 validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
import time

import numpy as np

from .network import ClusterParams, KnnMode, NetworkError, NetworkKind

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _add_param_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("-k", type=int, required=True, help="number of clusters")
    p.add_argument("--knn-k", type=int, default=None,
                   help="KNN neighbor count (default: per-network-type)")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=int, default=3)
    p.add_argument("--eps-q", type=float, default=0.005)
    p.add_argument("--t-a", type=int, default=1000)
    p.add_argument("--t-i", type=int, default=25)
    p.add_argument("--tau", type=int, default=5)
    p.add_argument("--knn-mode", choices=["auto", "exact", "approx"], default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded reductions for byte-identical reruns")


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=["hg", "ug", "dg", "mg"], required=True)
    p.add_argument("--net", required=True,
                   help="network file; comma-separated layer files for mg")
    p.add_argument("--attr", required=True, help="attribute matrix file")
    p.add_argument("--attr-format", choices=["auto", "dense", "sparse"], default="auto")
    p.add_argument("--labels", default=None, help="ground-truth labels file")


def _params_from(args) -> ClusterParams:
    return ClusterParams(
        k=args.k,
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        knn_k=args.knn_k,
        eps_q=args.eps_q,
        t_a=args.t_a,
        t_i=args.t_i,
        tau=args.tau,
        seed=args.seed,
        knn_mode=KnnMode(args.knn_mode),
    )


@contextlib.contextmanager
def _thread_limit(deterministic: bool):
    if not deterministic:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        yield
        return
    with threadpool_limits(limits=1):
        yield


def _cmd_run(args) -> int:
    from . import engine, io, metrics

    config = io.RunConfig(
        kind_code=args.kind,
        net_paths=args.net.split(","),
        attr_path=args.attr,
        labels_path=args.labels,
        attr_format=args.attr_format,
        params=_params_from(args),
        output_path=args.output,
        deterministic=args.deterministic,
        knn_cache_dir=args.knn_cache,
        report_dir=args.report_dir,
    )
    net, labels = io.load_network_from_config(config)
    t0 = time.perf_counter()
    with _thread_limit(config.deterministic):
        result = engine.run_ancka(net, config.params, knn_cache_dir=config.knn_cache_dir)
    total_ms = (time.perf_counter() - t0) * 1e3

    scored = None
    if labels is not None:
        all_scores = metrics.score_all(result.y, labels)
        scored = {name: all_scores[name] for name in config.metrics}
    doc = io.result_document(result, config, scored, total_ms)
    io.emit_result(doc, config.output_path)
    if config.report_dir:
        from . import report

        for path in report.write_report(config.report_dir, result, scored, total_ms):
            print(f"report: {path}")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    line = f"mhc={result.mhc:.6f} iterations={result.iterations} stop={result.stop_reason}"
    if scored:
        line += " " + " ".join(f"{k}={v:.4f}" for k, v in scored.items())
    print(line)
    print(f"result: {config.output_path}")
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_gen(args) -> int:
    from . import io

    kind = {"hg": NetworkKind.HYPERGRAPH, "ug": NetworkKind.GRAPH,
            "mg": NetworkKind.MULTIPLEX}[args.kind]
    net, labels = io.generate_synthetic(
        n=args.n, k=args.k, intra_p=args.intra_p, inter_p=args.inter_p,
        attr_dim=args.attr_dim, attr_noise=args.attr_noise, seed=args.seed,
        kind=kind, layers=args.layers,
    )
    files = io.save_network(args.out, net, labels=labels, attr_fmt=args.attr_format)
    print(json.dumps(files, indent=2))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    from . import engine, io, walk

    config = io.RunConfig(
        kind_code=args.kind,
        net_paths=args.net.split(","),
        attr_path=args.attr,
        labels_path=args.labels,
        attr_format=args.attr_format,
        params=_params_from(args),
        output_path=args.output,
    )
    net, labels = io.load_network_from_config(config)
    if labels is None:
        raise NetworkError("oracle mode needs --labels with the assignment to score")
    from .network import BcmMatrix

    _, compact = np.unique(labels, return_inverse=True)
    y = BcmMatrix(assignment=compact, k=int(compact.max()) + 1)
    if y.k != config.params.k:
        print(f"note: scoring {y.k} clusters from labels (CLI -k {config.params.k})",
              file=sys.stderr)
    op, _, _ = engine.build_pipeline(net, config.params)
    dense_value = walk.brute_mhc_oracle(op, y)
    iterative_value = engine.calc_mhc(op, y)
    doc = {
        "n": net.n,
        "k": y.k,
        "mhc_oracle": dense_value,
        "mhc_iterative": iterative_value,
        "abs_diff": abs(dense_value - iterative_value),
    }
    if config.output_path:
        io.emit_result(doc, config.output_path)
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ancka",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="cluster an attributed network")
    _add_input_args(run)
    _add_param_args(run)
    run.add_argument("-o", "--output", required=True, help="result JSON path")
    run.add_argument("--knn-cache", default=None, help="neighbor-list cache directory")
    run.add_argument("--report-dir", default=None,
                     help="write summary.tsv and figures to this directory")

    gen = sub.add_parser("gen", help="generate a synthetic planted partition")
    gen.add_argument("--kind", choices=["hg", "ug", "mg"], default="hg")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--k", type=int, required=True)
    gen.add_argument("--intra-p", type=float, default=0.5)
    gen.add_argument("--inter-p", type=float, default=0.05)
    gen.add_argument("--attr-dim", type=int, default=16)
    gen.add_argument("--attr-noise", type=float, default=0.1)
    gen.add_argument("--layers", type=int, default=2)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--attr-format", choices=["dense", "sparse"], default="dense")
    gen.add_argument("--out", required=True, help="output directory")

    oracle = sub.add_parser("oracle", help="dense brute-force conductance check")
    _add_input_args(oracle)
    _add_param_args(oracle)
    oracle.add_argument("-o", "--output", default=None, help="optional JSON path")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "gen": _cmd_gen, "oracle": _cmd_oracle}
    try:
        return handlers[args.command](args)
    except NetworkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 — CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

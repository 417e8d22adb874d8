"""Run reports: a delimited summary plus matplotlib figures on disk.

Written next to the JSON result when a report directory is requested:
``summary.tsv`` with the headline numbers, ``mhc_history.png`` with the
sampled conductance trajectory, and ``timings.png`` with the phase
breakdown.
"""

from __future__ import annotations

from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def write_summary_tsv(path, result, metrics: dict | None, total_ms: float) -> None:
    rows = [
        ("n", result.y.n),
        ("k", result.y.k),
        ("mhc", f"{result.mhc:.6f}"),
        ("iterations", result.iterations),
        ("stop_reason", result.stop_reason),
        ("converged", result.converged),
        ("total_ms", f"{total_ms:.3f}"),
    ]
    rows += [(key, f"{val:.3f}") for key, val in result.timings_ms.items()]
    if metrics:
        rows += [(key, f"{val:.6f}") for key, val in metrics.items()]
    with open(path, "w") as fh:
        fh.write("field\tvalue\n")
        for key, val in rows:
            fh.write(f"{key}\t{val}\n")


def plot_mhc_history(path, result) -> None:
    plt = _pyplot()
    iters = [t for t, _ in result.state.mhc_history]
    values = [v for _, v in result.state.mhc_history]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(iters, values, marker="o", ms=3.5, lw=1.2, color="#1f6fb4")
    ax.axhline(result.mhc, color="#c44e52", lw=0.8, ls="--",
               label=f"best {result.mhc:.4f}")
    ax.set_xlabel("orthogonal iteration")
    ax.set_ylabel("multi-hop conductance")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_timings(path, result, total_ms: float) -> None:
    plt = _pyplot()
    items = [(k.removesuffix("_ms"), v) for k, v in result.timings_ms.items()]
    other = max(total_ms - sum(v for _, v in items), 0.0)
    items.append(("other", other))
    fig, ax = plt.subplots(figsize=(5.0, 2.6))
    names = [k for k, _ in items]
    vals = [v for _, v in items]
    ax.barh(range(len(items)), vals, color="#55a868")
    ax.set_yticks(range(len(items)), names, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("time (ms)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(report_dir, result, metrics: dict | None, total_ms: float) -> list[str]:
    """Render all report artifacts; returns the written paths."""
    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    p = out / "summary.tsv"
    write_summary_tsv(p, result, metrics, total_ms)
    paths.append(str(p))
    p = out / "mhc_history.png"
    plot_mhc_history(p, result)
    paths.append(str(p))
    p = out / "timings.png"
    plot_timings(p, result, total_ms)
    paths.append(str(p))
    return paths

"""Figure rendering for the benchmark CLI.

Each helper takes the same row dictionaries a subcommand writes to CSV
and draws one PNG next to that file. Imported only when --plot is
passed, and forces the Agg backend so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "timing_figure",
    "pushforward_figure",
    "bounds_figure",
    "pool_figure",
    "kappa_figure",
    "gradcheck_figure",
]

_DPI = 150


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def timing_figure(rows, path):
    """Grouped forward/backward wall-time bars, one group per (op, d, param)."""
    labels = [f"{r['op']}\nd={r['d']} p={r['param']}" for r in rows]
    fwd = [float(r["mean_forward_s"]) for r in rows]
    fwd_err = [float(r["std_forward_s"]) for r in rows]
    bwd = [float(r["mean_backward_s"]) if r["mean_backward_s"] != "" else np.nan for r in rows]
    bwd_err = [float(r["std_backward_s"]) if r["std_backward_s"] != "" else 0.0 for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(rows)), 4.0))
    ax.bar(x - 0.2, fwd, 0.4, yerr=fwd_err, label="forward", capsize=3)
    ax.bar(x + 0.2, bwd, 0.4, yerr=bwd_err, label="backward", capsize=3)
    ax.set_xticks(x, labels, fontsize=8)
    ax.set_ylabel("wall time [s]")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("operator timing (mean over reps, log scale)")
    return _save(fig, path)


def pushforward_figure(bin_lo, bin_hi, mass_pre, post_series, variance_rows, path):
    """Left: pre/post spectrum histograms. Right: top-j variance vs parameter."""
    edges = np.append(np.asarray(bin_lo, dtype=float), bin_hi[-1])
    centers = 0.5 * (edges[:-1] + edges[1:])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.0, 4.0))
    ax1.step(centers, mass_pre, where="mid", color="k", lw=1.8, label="pre")
    for label, masses in post_series:
        ax1.step(centers, masses, where="mid", lw=1.2, label=label)
    ax1.set_xlabel("eigenvalue")
    ax1.set_ylabel("mass")
    ax1.set_title("push-forward of the spectrum law")
    ax1.legend(fontsize=8)
    # variance_rows: (op, param, summed top-j variance)
    by_op = {}
    for op, param, value in variance_rows:
        by_op.setdefault(op, []).append((float(param), float(value)))
    for op, pts in by_op.items():
        pts.sort()
        ax2.plot([p for p, _ in pts], [v for _, v in pts], "o-", label=op)
    ax2.set_xlabel("parameter")
    ax2.set_ylabel("summed top-j eigenvalue variance")
    ax2.set_xscale("log")
    ax2.set_title("leading-eigenvalue variance")
    if by_op:
        ax2.legend(fontsize=8)
    return _save(fig, path)


def bounds_figure(rows, path):
    """Gap curves over t; any bound violation would show as a marker."""
    t = [float(r["t"]) for r in rows]
    order = np.argsort(t)
    t = np.asarray(t)[order]

    def col(name):
        return np.asarray([float(r[name]) for r in rows])[order]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.0, 4.0))
    ax1.plot(t, col("eps1"), label="eps1")
    ax1.plot(t, col("eps2"), label="eps2")
    ax1.set_xlabel("t")
    ax1.set_ylabel("gap")
    ax1.set_title("diffusion-time bound gaps")
    ax1.legend(fontsize=8)
    ax2.plot(t, col("eps3"), label="eps3")
    ax2.plot(t, col("eps4"), label="eps4")
    viol = col("max_violation")
    bad = viol > 0
    if bad.any():
        ax2.plot(t[bad], viol[bad], "rx", label="violation")
    ax2.set_xlabel("t")
    ax2.set_title("scaled-map gaps")
    ax2.legend(fontsize=8)
    return _save(fig, path)


def pool_figure(matrix, path):
    """Heatmap of the pooled matrix."""
    matrix = np.asarray(matrix, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    im = ax.imshow(matrix, cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_title(f"pooled matrix ({matrix.shape[0]}x{matrix.shape[1]})")
    return _save(fig, path)


def kappa_figure(rows, path):
    """Support ratio vs shot count, one line per N."""
    by_n = {}
    for r in rows:
        by_n.setdefault(int(r["n"]), []).append((int(r["j"]), float(r["kappa"])))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for n, pts in sorted(by_n.items()):
        pts.sort()
        ax.plot([j for j, _ in pts], [k for _, k in pts], "o-", label=f"N={n}")
    ax.set_xlabel("shots J")
    ax.set_ylabel("support ratio")
    ax.set_title("relation-support ratio by shot count")
    ax.legend(fontsize=8)
    return _save(fig, path)


def gradcheck_figure(reports, path):
    """Worst-first relative errors on a log axis."""
    reports = list(reports)[: min(len(reports), 25)]
    labels = [f"{r.op} d={r.d} p={r.param} s={r.seed}" for r in reports]
    errs = [max(r.max_rel_error, 1e-16) for r in reports]
    fig, ax = plt.subplots(figsize=(7.0, max(3.0, 0.3 * len(reports))))
    y = np.arange(len(reports))
    ax.barh(y, errs)
    ax.set_yticks(y, labels, fontsize=7)
    ax.set_xscale("log")
    ax.set_xlabel("max relative error")
    ax.invert_yaxis()
    ax.set_title("gradient checks, worst first")
    return _save(fig, path)

"""Figure rendering for run reports, cutting-plane traces and benchmark grids.

Figures are written to files next to the delimited output; the Agg backend
keeps everything headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_METHOD_COLORS = {"quadratic": "tab:blue", "affine": "tab:orange"}


def convergence_figure(report, path: str, title: str = "Bound convergence") -> str:
    """Lower/upper bounds against the iteration count for one engine run."""
    ks = [rec.k for rec in report.records]
    lbs = [rec.lb for rec in report.records]
    ubs = [(rec.ub if rec.ub is not None else np.nan) for rec in report.records]
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(ks, lbs, label="lower bound", color="tab:blue")
    ax.plot(ks, ubs, label="upper bound (trailing window)", color="tab:red")
    ax.set_xlabel("iteration")
    ax.set_ylabel("bound")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def qcsc_figure(run, path: str) -> str:
    """Gap decay (log scale) and incumbent value for one cutting-plane run."""
    ks = np.arange(1, run.n_iterations + 1)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    gaps = np.asarray(run.gaps, dtype=float)
    ax1.semilogy(ks, np.maximum(gaps, 1e-300), marker="o", color="tab:blue")
    ax1.axhline(run.eps, color="tab:red", linestyle="--", label=f"eps = {run.eps:g}")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("gap")
    ax1.set_title(f"{run.algorithm}: optimality gap")
    ax1.legend()
    ax1.grid(True, alpha=0.3)
    ax2.plot(ks, run.incumbent_values, marker="o", color="tab:green")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("incumbent value")
    ax2.set_title("incumbent")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def bench_figure(rows, path: str) -> str:
    """Iterations-to-termination by method for each benchmark row."""
    labels = []
    by_method: dict = {}
    for row in rows:
        label = f"T{row['T']} n{row['n']} M{row['M']} l0={row['lambda0']:g}"
        if label not in labels:
            labels.append(label)
        by_method.setdefault(row["method"], {})[label] = row["iters"]
    x = np.arange(len(labels))
    width = 0.8 / max(1, len(by_method))
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(labels)), 4.2))
    for i, (method, vals) in enumerate(sorted(by_method.items())):
        heights = [vals.get(lbl) if vals.get(lbl) is not None else 0 for lbl in labels]
        ax.bar(x + i * width, heights, width, label=method,
               color=_METHOD_COLORS.get(method))
    ax.set_xticks(x + width * (len(by_method) - 1) / 2)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("iterations to termination")
    ax.set_title("Method comparison")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def bench_convergence_figure(paired, path: str) -> str:
    """Grid of per-row bound trajectories, one panel per parameter set."""
    by_label: dict = {}
    for params, mode, report in paired:
        label = f"T={params.T} n={params.n} M={params.M} l0={params.lambda0:g}"
        by_label.setdefault(label, []).append((mode, report))
    n_panels = len(by_label)
    ncols = min(2, n_panels)
    nrows = (n_panels + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(6.5 * ncols, 4 * nrows),
                             squeeze=False)
    for ax, (label, runs) in zip(axes.ravel(), by_label.items()):
        for mode, report in runs:
            ks = [rec.k for rec in report.records]
            ax.plot(ks, [rec.lb for rec in report.records],
                    label=f"{mode} LB", color=_METHOD_COLORS.get(mode))
            ax.plot(ks, [(rec.ub if rec.ub is not None else np.nan)
                         for rec in report.records],
                    linestyle="--", label=f"{mode} UB",
                    color=_METHOD_COLORS.get(mode), alpha=0.7)
        ax.set_title(label)
        ax.set_xlabel("iteration")
        ax.set_ylabel("bound")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
    for ax in axes.ravel()[n_panels:]:
        ax.set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path

"""Static SVG charts for sweeps, benchmarks and convergence traces.

Figures are written with a fixed hash salt and no date stamp so that the
same data always yields byte-identical SVG files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "infolaunder",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.8, 3.2),
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(Path(path), format="svg", metadata={"Date": None})
    plt.close(fig)


def _symlog_x(ax, betas):
    if np.any(np.asarray(betas) == 0) and np.max(betas) > 10:
        ax.set_xscale("symlog", linthresh=1.0)
    elif np.min(betas) > 0 and np.max(betas) / np.min(betas) > 100:
        ax.set_xscale("log")


def plot_tradeoff(curve, path, title: str = ""):
    """utility_kl and mi_output against beta, one axis each."""
    betas = curve.column("beta")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(betas, curve.column("utility_kl"), "o-", color="C0", label="utility KL")
        ax.set_xlabel(r"$\beta$")
        ax.set_ylabel("expected KL (nats)", color="C0")
        twin = ax.twinx()
        twin.plot(betas, curve.column("mi_output"), "s--", color="C3", label="output MI")
        twin.set_ylabel("I(Y~; Y) (nats)", color="C3")
        twin.spines["right"].set_visible(True)
        _symlog_x(ax, betas)
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_benchmark(rows, path):
    """Utility against leakage for each Dirichlet (a, b) pair."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = [r.point.mi_output for r in rows]
        y = [r.point.utility_kl for r in rows]
        ax.plot(x, y, "o:", color="0.3")
        for r, xi, yi in zip(rows, x, y):
            ax.annotate(f"({r.a_param:g},{r.b_param:g})", (xi, yi), textcoords="offset points",
                        xytext=(4, 3), fontsize=7)
        ax.set_xlabel("I(Y~; Y) (nats)")
        ax.set_ylabel("expected KL (nats)")
        _save(fig, path)


def plot_convergence(traces: dict, path, ylabel: str = r"$\|P^{(t+1)}-P^{(t)}\|_1 / a$"):
    """One log-scale line per labelled trace."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, trace in traces.items():
            trace = np.asarray(trace, dtype=float)
            ax.semilogy(np.arange(1, len(trace) + 1), np.maximum(trace, 1e-300), label=label)
        ax.set_xlabel("iteration")
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_kernel(matrix, path, title: str = ""):
    """Heat map of a kernel matrix (rows = outputs, columns = inputs)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.4, 3.0))
        im = ax.imshow(np.asarray(matrix), cmap="viridis", vmin=0.0, aspect="auto", interpolation="nearest")
        fig.colorbar(im, ax=ax)
        ax.set_xlabel("input")
        ax.set_ylabel("output")
        if title:
            ax.set_title(title)
        _save(fig, path)

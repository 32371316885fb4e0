"""Report figures. Output is byte-stable for identical inputs (fixed SVG hash salt, no dates)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.2),
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "clic",
    "svg.fonttype": "path",
}


def save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = path.suffix.lstrip(".").lower() or "svg"
    metadata = {"Date": None} if fmt in ("svg", "pdf") else {"Software": None}
    fig.savefig(path, format=fmt, metadata=metadata)
    plt.close(fig)
    return path


def plot_histogram(counts, edges, path, fit=None, title: str = "Image complexity distribution") -> Path:
    counts = np.asarray(counts)
    edges = np.asarray(edges)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        width = np.diff(edges)
        ax.bar(edges[:-1], counts, width=width, align="edge", color="#4C72B0", edgecolor="white", linewidth=0.4)
        if fit is not None and not fit.degenerate and fit.sigma > 0:
            xs = np.linspace(0.0, 1.0, 400)
            pdf = np.exp(-0.5 * ((xs - fit.mu) / fit.sigma) ** 2) / (fit.sigma * np.sqrt(2 * np.pi))
            ax.plot(xs, pdf * counts.sum() * width.mean(), color="#C44E52", linewidth=1.2,
                    label=f"N({fit.mu:.3f}, {fit.sigma:.3f}²)  KS={fit.ks:.3f}")
            ax.legend(frameon=False)
        ax.set_xlim(0, 1)
        ax.set_xlabel("complexity score")
        ax.set_ylabel("images")
        ax.set_title(title)
        fig.tight_layout()
        return save(fig, path)


def plot_few_shot(rows: Sequence[tuple[int, float, float]], path) -> Path:
    ns = [r[0] for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(ns, [r[1] for r in rows], marker="o", label="PCC")
        ax.plot(ns, [r[2] for r in rows], marker="s", label="SRCC")
        if len(ns) > 1 and ns[0] > 0:
            ax.set_xscale("log")
        ax.set_xlabel("fine-tuning samples")
        ax.set_ylabel("correlation")
        ax.legend(frameon=False)
        fig.tight_layout()
        return save(fig, path)


def plot_loss(history: Sequence[float], path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(np.arange(1, len(history) + 1), history, marker=".")
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean contrastive loss")
        fig.tight_layout()
        return save(fig, path)

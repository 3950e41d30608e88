"""SVG figure output for study reports.

Figures are rendered with matplotlib (Agg) and saved as SVG 1.1 with path
simplification disabled, so every data vertex survives into the file and a
re-parse can check the plotted point count against the CSV.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["path.simplify"] = False
matplotlib.rcParams["svg.fonttype"] = "none"


def _finish(fig, path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)


def save_error_plot(path, levels, series: dict, xlabel: str, title: str):
    """Log-log error-vs-level plot; series maps label -> error list."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for label, errs in series.items():
        ax.semilogy(levels, errs, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("error")
    ax.set_xticks(list(levels))
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _finish(fig, path)


def save_residual_plot(path, histories: dict, title: str):
    """Residual-vs-iteration semilogy plot; histories maps solver -> list."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for label, hist in histories.items():
        ax.semilogy(range(len(hist)), hist, marker="o", markersize=3, label=label)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel(r"residual $\|r\|_2$")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _finish(fig, path)


def save_profile_plot(path, x, u, w, title: str):
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    ax.plot(x, u, label="u")
    ax.plot(x, w, label="w", ls="--")
    ax.set_xlabel("x")
    ax.legend()
    ax.set_title(title)
    fig.tight_layout()
    _finish(fig, path)


def save_loop_plot(path, u, w, title: str):
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    ax.plot(u, w, lw=0.8)
    ax.set_xlabel("input u")
    ax.set_ylabel("output w")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _finish(fig, path)

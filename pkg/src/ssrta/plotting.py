"""Resolution-rate curve rendering."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport


def plot_rr_curves(reports: dict[str, EvalReport], path: str | Path) -> None:
    """Line chart of RR@n per named report; format follows the file suffix."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, report in reports.items():
        steps = range(1, len(report.rr_curve) + 1)
        ax.plot(steps, report.rr_curve, marker="o", markersize=3, label=name)
    ax.set_xlabel("recommendation sequence length n")
    ax.set_ylabel("resolution rate RR@n")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

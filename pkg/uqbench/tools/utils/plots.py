"""SVG renderings of histogram, reliability and curve data (matplotlib, Agg backend).

Output is byte-stable across reruns: fixed hash salt for element ids and no
creation date in the metadata.
"""
import logging
import os
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "uqbench"
plt.rcParams["svg.fonttype"] = "none"
_METADATA = {"Date": None, "Creator": "uqbench"}


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", metadata=_METADATA)
    plt.close(fig)
    return path


def histogram_svg(table: pd.DataFrame, path: str, title: str = "", xlabel: str = "") -> str:
    """Bar histogram from a ``bin_left,bin_right,count`` table."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    widths = table["bin_right"] - table["bin_left"]
    ax.bar(table["bin_left"], table["count"], width=widths, align="edge",
           color="#4c72b0", edgecolor="white")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    fig.tight_layout()
    return _save(fig, path)


def reliability_svg(report, path: str, title: str = "") -> str:
    """Accuracy vs confidence per bin with the identity diagonal."""
    fig, ax = plt.subplots(figsize=(4, 4))
    centers = [(b.lower + b.upper) / 2 for b in report.bins]
    width = report.bins[0].upper - report.bins[0].lower if report.bins else 0.1
    accuracy = [b.accuracy if b.count else 0.0 for b in report.bins]
    ax.bar(centers, accuracy, width=width, color="#55a868", edgecolor="white", label="accuracy")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("confidence")
    ax.set_ylabel("accuracy")
    ax.set_title(title or f"ECE = {report.ece:.4f}")
    fig.tight_layout()
    return _save(fig, path)


def curves_svg(x: Sequence[float], series: Dict[str, Sequence[float]], path: str,
               title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, values in series.items():
        ax.plot(list(x), list(values), marker="o", label=name)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


__all__ = ['histogram_svg', 'reliability_svg', 'curves_svg']

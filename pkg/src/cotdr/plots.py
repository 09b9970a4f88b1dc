"""Static SVG plots of traces, correlation profiles and latency series."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_POINTS = 4000


@dataclass
class Curve:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    markers: bool = False


def decimate(x: np.ndarray, y: np.ndarray, max_points: int = MAX_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Keep the min and max of each bucket so narrow peaks survive."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size <= max_points:
        return x, y
    n_buckets = max_points // 2
    edges = np.linspace(0, x.size, n_buckets + 1).astype(int)
    lo, hi = edges[:-1], edges[1:]
    imin = np.array([a + int(np.argmin(y[a:b])) for a, b in zip(lo, hi)])
    imax = np.array([a + int(np.argmax(y[a:b])) for a, b in zip(lo, hi)])
    idx = np.sort(np.concatenate([imin, imax]))
    return x[idx], y[idx]


def write_plot(path: str | Path, curves: list[Curve], title: str, xlabel: str, ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed ids and no timestamp, so identical data gives identical files
    with matplotlib.rc_context({"svg.hashsalt": "cotdr", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for c in curves:
            x, y = decimate(c.x, c.y)
            if c.markers:
                ax.plot(x, y, "o", ms=4, label=c.label or None)
            else:
                ax.plot(x, y, "-", lw=0.8, label=c.label or None)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, lw=0.3)
        if any(c.label for c in curves):
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)

"""Matplotlib figures for the ``report`` command (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def loglog_fit(x: Sequence[float], y: Sequence[float], slope: float | None, title: str, xlabel: str, path: Path) -> Path:
    """Measured points on log-log axes with the fitted power law through their geometric centre."""
    import numpy as np

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(x, y, "o-", label="measured")
    if slope is not None and len(x) > 1:
        lx, ly = np.log(x), np.log(y)
        xs = np.array([min(x), max(x)])
        ax.loglog(xs, np.exp(ly.mean() + slope * (np.log(xs) - lx.mean())), "--", label=f"slope {slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def semilog_series(series: dict[str, Sequence[float]], title: str, xlabel: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, vals in series.items():
        pos = [(i, v) for i, v in enumerate(vals) if v is not None and v > 0]
        if pos:
            ax.semilogy([p[0] for p in pos], [p[1] for p in pos], "o-", label=label)
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def whitney_squares(pairs: Sequence[tuple[int, int, int]], path: Path, max_level: int = 7) -> Path:
    """Draw the squares ``(level, I offset, J offset)`` up to ``max_level``."""
    from matplotlib.patches import Rectangle

    fig, ax = plt.subplots(figsize=(5, 5))
    for level, i, j in pairs:
        if level > max_level:
            continue
        h = 2.0**-level
        ax.add_patch(Rectangle((i * h, j * h), h, h, fill=False, lw=0.6))
    ax.plot([0, 1], [0, 1], "k:", lw=0.8)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_aspect("equal")
    ax.set_title("Whitney squares")
    return _save(fig, path)

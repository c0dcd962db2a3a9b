"""Figure and preview rendering for the report path.

All entry points render straight to files (Agg backend); nothing opens a
window.  The 16-bit PGM preview writer records its display window in a JSON
sidecar so viewers can undo the quantization.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["write_pgm16", "save_image_figure", "save_profile_figure", "save_sweep_figure"]

plt.rcParams.update({
    "figure.dpi": 110,
    "savefig.bbox": "tight",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})


def write_pgm16(path, img: np.ndarray, window: Optional[tuple] = None):
    """16-bit binary PGM preview; window=(lo, hi) defaults to (min, max)."""
    path = Path(path)
    lo, hi = window if window is not None else (float(img.min()), float(img.max()))
    if hi <= lo:
        hi = lo + 1.0
    q = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    q16 = (q * 65535.0 + 0.5).astype(">u2")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode()
    path.write_bytes(header + q16.tobytes())
    path.with_suffix(".json").write_text(json.dumps(
        {"window_lo": lo, "window_hi": hi, "shape": list(img.shape)},
        sort_keys=True))


def save_image_figure(path, img: np.ndarray, title: str = "",
                      window: Optional[tuple] = None):
    fig, ax = plt.subplots(figsize=(5, 5))
    vmin, vmax = window if window is not None else (None, None)
    im = ax.imshow(img, cmap="gray", vmin=vmin, vmax=vmax)
    ax.set_title(title)
    ax.grid(False)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.savefig(path)
    plt.close(fig)


def save_profile_figure(path, values: np.ndarray, start: int = 0,
                        title: str = "", reference: Optional[np.ndarray] = None):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    idx = np.arange(start, start + len(values))
    ax.plot(idx, values, lw=1.2, label="profile")
    if reference is not None:
        ax.plot(idx, reference, lw=1.0, ls="--", label="reference")
        ax.legend()
    ax.set_xlabel("pixel")
    ax.set_ylabel("value")
    ax.set_title(title)
    fig.savefig(path)
    plt.close(fig)


def save_sweep_figure(path, axis_name: str, xs: Sequence[float],
                      table: dict, title: str = ""):
    """One panel per metric in ``table`` (name -> list of values)."""
    fig, axes = plt.subplots(1, len(table), figsize=(3.4 * len(table), 3.0))
    if len(table) == 1:
        axes = [axes]
    for ax, (name, ys) in zip(axes, table.items()):
        ax.plot(xs, ys, "o-", lw=1.2)
        ax.set_xlabel(axis_name)
        ax.set_ylabel(name)
    fig.suptitle(title)
    fig.savefig(path)
    plt.close(fig)

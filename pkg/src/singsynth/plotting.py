"""Diagnostic plot files. Headless-safe: the Agg backend is forced
before pyplot is imported, so these work in batch jobs with no display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _f0_line(f0: np.ndarray) -> np.ndarray:
    # break the line at unvoiced frames instead of plunging to zero
    line = np.asarray(f0, dtype=np.float64).copy()
    line[line <= 0] = np.nan
    return line


def save_mel_plot(
    path: str | Path,
    mel: np.ndarray,
    title: str = "",
    f0: np.ndarray | None = None,
) -> Path:
    """Mel matrix [T, n_mels] as an image, optional f0 overlay in Hz."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.imshow(np.asarray(mel).T, origin="lower", aspect="auto", interpolation="nearest")
    ax.set_xlabel("frame")
    ax.set_ylabel("mel band")
    if title:
        ax.set_title(title)
    if f0 is not None:
        twin = ax.twinx()
        twin.plot(_f0_line(f0), color="white", linewidth=1.5)
        twin.set_ylabel("f0 (Hz)")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def save_f0_comparison(
    path: str | Path, contours: dict[str, np.ndarray], title: str = ""
) -> Path:
    """Several labeled f0 contours on one axis (unvoiced gaps blank)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(10, 4))
    for label, f0 in contours.items():
        ax.plot(_f0_line(f0), label=label, linewidth=1.2)
    ax.set_xlabel("frame")
    ax.set_ylabel("f0 (Hz)")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
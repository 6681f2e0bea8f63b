"""Matplotlib figures written next to the CLI's numeric outputs.

All figures use the Agg backend and strip the software tag from PNG
metadata so repeated runs produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import flow_to_color  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_kymograph(kx, ky, path):
    """x-t and y-t projections side by side, time running downwards."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    for ax, img, label in ((axes[0], kx, "x"), (axes[1], ky, "y")):
        im = ax.imshow(img, aspect="auto", cmap="coolwarm", interpolation="nearest")
        ax.set_xlabel(label)
        ax.set_ylabel("time bin")
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path)


def plot_flow(u, v, path, max_flow=None):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.imshow(flow_to_color(u, v, max_flow), interpolation="nearest")
    ax.set_axis_off()
    fig.tight_layout()
    _save(fig, path)


def plot_mid(m, valid, path):
    """Motion in depth with invalid pixels masked out."""
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(np.ma.masked_array(m, ~np.asarray(valid, dtype=bool)), cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="Z(t) / Z(0)")
    ax.set_axis_off()
    fig.tight_layout()
    _save(fig, path)


def plot_history(values, path, ylabel="EPE"):
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(np.arange(1, len(values) + 1), values, marker="o")
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)

"""Matplotlib figure rendering placed next to the delimited outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import imageio


def render_loss_curve(loss_csv: Path, out_png: Path, smooth: int = 100) -> None:
    steps, losses, regs = [], [], []
    with open(loss_csv) as fh:
        for row in csv.DictReader(fh):
            steps.append(int(row["step"]))
            losses.append(float(row["loss"]))
            regs.append(float(row["reg_loss"]))
    if not steps:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, losses, alpha=0.25, lw=0.6, label="loss")
    if len(losses) > smooth:
        kernel = np.ones(smooth) / smooth
        sm = np.convolve(losses, kernel, mode="valid")
        ax.plot(steps[smooth - 1:], sm, lw=1.6, label=f"loss ({smooth}-step mean)")
    if any(r > 0 for r in regs):
        ax.plot(steps, regs, alpha=0.25, lw=0.6, label="background term")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def render_metric_bars(reports: list[dict], out_png: Path) -> None:
    if not reports:
        return
    names = [r["name"] for r in reports]
    values = [r["value"] for r in reports]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(names), 4))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    for i, v in enumerate(values):
        ax.annotate(f"{v:.4g}", (i, v), ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("value")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def render_image_grid(images, out_png: Path, cols: int = 8, titles=None) -> None:
    """images: iterable of (3, H, W) arrays in [-1, 1]."""
    images = list(images)
    if not images:
        return
    cols = min(cols, len(images))
    rows = (len(images) + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(1.6 * cols, 1.7 * rows),
                             squeeze=False)
    for i in range(rows * cols):
        ax = axes[i // cols][i % cols]
        ax.axis("off")
        if i < len(images):
            ax.imshow(imageio.image_to_unit(images[i]).transpose(1, 2, 0))
            if titles is not None and i < len(titles):
                ax.set_title(str(titles[i]), fontsize=7)
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)

"""Matplotlib figures for sweep, ablation and evaluation results."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import EvalReport  # noqa: E402
from .model import DEFAULT_PALETTE  # noqa: E402

# no timestamps or version strings, so reruns give identical files
_PNG_METADATA = {"Software": None}


def _save(fig, path: str | os.PathLike) -> None:
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def sweep_figure(rows: Sequence, path: str | os.PathLike, parameter: str | None = None) -> None:
    """Compression rate and mean IoU on the left axis, outlier rate on the right."""
    x = np.array([r.value for r in rows])
    fig, left = plt.subplots(figsize=(6.4, 4.0))
    left.plot(x, [100 * r.compression_rate for r in rows], "o-", color="tab:blue", label="compression rate")
    left.plot(x, [100 * r.mean_iou for r in rows], "s-", color="tab:green", label="mean IoU")
    left.set_xlabel(parameter or (rows[0].name if rows else "value"))
    left.set_ylabel("compression rate / IoU [%]")
    right = left.twinx()
    right.plot(x, [100 * r.outlier_rate for r in rows], "^--", color="tab:red", label="outlier rate")
    right.set_ylabel("outlier rate [%]")
    handles = left.get_legend_handles_labels()[0] + right.get_legend_handles_labels()[0]
    left.legend(handles, [h.get_label() for h in handles], loc="lower right")
    left.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def ablation_figure(rows: Sequence, path: str | os.PathLike) -> None:
    """Grouped bars of outlier rate, mean IoU and compression rate per configuration."""
    names = [r.name for r in rows]
    metrics = {
        "outlier rate": [100 * r.outlier_rate for r in rows],
        "mean IoU": [100 * r.mean_iou for r in rows],
        "compression rate": [100 * r.compression_rate for r in rows],
    }
    x = np.arange(len(names))
    width = 0.8 / len(metrics)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for k, (label, values) in enumerate(metrics.items()):
        ax.bar(x + (k - 1) * width, values, width, label=label)
    ax.set_xticks(x, [n.replace("_", "\n") for n in names])
    ax.set_ylabel("[%]")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def iou_figure(report: EvalReport, path: str | os.PathLike) -> None:
    """Per-class IoU bars colored with the label palette."""
    names = list(report.iou_per_class)
    values = [100 * report.iou_per_class[n] for n in names]
    colors = [np.array(DEFAULT_PALETTE.get(n, (128, 128, 128))) / 255 for n in names]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(names) + 1.5), 4.0))
    ax.bar(np.arange(len(names)), values, color=colors, edgecolor="black", linewidth=0.5)
    ax.set_xticks(np.arange(len(names)), names, rotation=45, ha="right")
    ax.set_ylim(0, 100)
    ax.set_ylabel("IoU [%]")
    ax.set_title(f"mean IoU {100 * report.mean_iou:.1f}%")
    fig.tight_layout()
    _save(fig, path)

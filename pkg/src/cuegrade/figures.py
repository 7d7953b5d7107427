"""Report figures rendered next to the delimited evaluation output.

Rendering is pinned for reproducibility: fixed figure geometry, the Agg
backend, and no software metadata in the PNGs, so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import GRADE_CLASSES, NINE_CLASS_GRID, nine_class_index

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    return path


def plot_score_scatter(golds: Sequence[float], preds: Sequence[float], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([0, 1], [0, 1], color="lightgray", linewidth=1, zorder=1)
    ax.scatter(golds, preds, s=28, alpha=0.7, zorder=2)
    ax.set_xlabel("gold score")
    ax.set_ylabel("predicted score")
    ax.set_xlim(-0.05, 1.05)
    ax.set_ylim(-0.05, 1.05)
    ax.set_title("predicted vs gold scores")
    fig.tight_layout()
    return _save(fig, path)


def plot_nine_class_confusion(golds: Sequence[float], preds: Sequence[float], path: Path) -> Path:
    matrix = np.zeros((9, 9))
    for g, p in zip(golds, preds):
        matrix[nine_class_index(g), nine_class_index(p)] += 1
    fig, ax = plt.subplots(figsize=(5.0, 4.5))
    im = ax.imshow(matrix, cmap="Blues", origin="lower")
    labels = [format(v, ".3g") for v in NINE_CLASS_GRID]
    ax.set_xticks(range(9), labels, rotation=45)
    ax.set_yticks(range(9), labels)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("gold class")
    ax.set_title("9-class score confusion")
    for i in range(9):
        for j in range(9):
            if matrix[i, j]:
                ax.text(j, i, int(matrix[i, j]), ha="center", va="center", fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    return _save(fig, path)


def plot_task_metrics_by_class(grouped: Mapping[str, Mapping[str, float]], path: Path) -> Path:
    metrics = ["num_cues", "avg_tokens_per_cue", "pct_cue_tokens"]
    titles = ["cues per answer", "tokens per cue", "cue-token share"]
    classes = [c for c in GRADE_CLASSES if c in grouped]
    fig, axes = plt.subplots(1, 3, figsize=(9.0, 3.2))
    for ax, metric, title in zip(axes, metrics, titles):
        values = [grouped[c][metric] for c in classes]
        ax.bar(range(len(classes)), values, color="#4878a8")
        ax.set_xticks(range(len(classes)), classes)
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def render_report_figures(
    golds: Sequence[float],
    preds: Sequence[float],
    grouped: Mapping[str, Mapping[str, float]],
    outdir: Path,
) -> list[Path]:
    paths = [
        plot_score_scatter(golds, preds, outdir / "scores_scatter.png"),
        plot_nine_class_confusion(golds, preds, outdir / "nine_class_confusion.png"),
    ]
    if grouped:
        paths.append(plot_task_metrics_by_class(grouped, outdir / "task_metrics_by_class.png"))
    return paths

"""Matplotlib figures rendered alongside the delimited report outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_metric_figures(rows: Sequence[dict], out_dir: str | Path) -> list[Path]:
    """Histogram grid of the per-record metrics plus a masking-ratio
    histogram; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    metrics = ["sketch_lost", "recall", "diversity", "length_ratio"]
    fig, axes = plt.subplots(2, 2, figsize=(9, 7))
    for ax, name in zip(axes.flat, metrics):
        values = [row[name] for row in rows]
        ax.hist(values, bins=30, color="#4878cf", edgecolor="white")
        ax.set_title(name.replace("_", " "))
        ax.set_ylabel("records")
    fig.tight_layout()
    path = out_dir / "metrics_hist.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    ratios = [row["masking_ratio"] for row in rows if "masking_ratio" in row]
    if ratios:
        written.append(render_masking_figure(ratios, out_dir / "masking_ratio_hist.png"))
    return written


def render_masking_figure(ratios: Sequence[float], out_path: str | Path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(ratios, bins=40, range=(0.0, 1.0), color="#d65f5f", edgecolor="white")
    ax.set_xlabel("masking ratio")
    ax.set_ylabel("documents")
    ax.set_title("masking ratio distribution")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path

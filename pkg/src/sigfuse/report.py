"""Figure rendering for run artifacts.

Reads the CSV/JSON artifacts of a run directory and writes matplotlib
figures next to them (``figures/`` subdirectory): class-variance radar,
correlation and mutual-information heatmaps, bootstrap strip plot, Bayesian
violin plot, ablation bars, and training curves. PNG by default; SVG output
suppresses date metadata so reruns stay comparable.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STRIP_COLORS = {"complementarity": "tab:green", "redundancy": "tab:red"}


def _save(fig, path: Path, svg: bool) -> list[Path]:
    written = [path.with_suffix(".png")]
    fig.savefig(written[0], dpi=120, bbox_inches="tight")
    if svg:
        svg_path = path.with_suffix(".svg")
        fig.savefig(svg_path, bbox_inches="tight", metadata={"Date": None})
        written.append(svg_path)
    plt.close(fig)
    return written


def fig_radar(fidelity: dict, path: Path, svg: bool = False) -> list[Path]:
    """Polygon chart of per-class real vs synthetic variance."""
    doc = fidelity.get("signal_space", fidelity)
    classes = doc["classes"]
    angles = np.linspace(0, 2 * np.pi, len(classes), endpoint=False)
    angles = np.concatenate([angles, angles[:1]])

    fig, ax = plt.subplots(subplot_kw={"projection": "polar"}, figsize=(5, 5))
    for key, color in (("real_variance", "tab:olive"), ("synthetic_variance", "tab:orange")):
        values = doc[key] + doc[key][:1]
        ax.plot(angles, values, color=color, label=key.replace("_", " "))
        ax.fill(angles, values, color=color, alpha=0.15)
    ax.set_xticks(angles[:-1])
    ax.set_xticklabels(classes)
    ax.set_title("Intra-class variance: real vs synthetic")
    ax.legend(loc="lower right", bbox_to_anchor=(1.1, -0.1))
    return _save(fig, path, svg)


def fig_heatmaps(comp: dict, path: Path, svg: bool = False) -> list[Path]:
    """Side-by-side correlation and MI heatmaps over domain pairs."""
    pairs = comp["pairs"]
    names = sorted({d for p in pairs for d in p["domains"]})
    idx = {n: i for i, n in enumerate(names)}
    k = len(names)
    corr = np.eye(k)
    mi = np.zeros((k, k))
    for p in pairs:
        i, j = idx[p["domains"][0]], idx[p["domains"][1]]
        corr[i, j] = corr[j, i] = p["corr"]
        mi[i, j] = mi[j, i] = p["mi"]

    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2))
    for ax, mat, title, cmap, vmin, vmax in (
        (axes[0], corr, "Correlation", "coolwarm", -1, 1),
        (axes[1], mi, "Mutual information (nats)", "viridis", 0, None),
    ):
        im = ax.imshow(mat, cmap=cmap, vmin=vmin, vmax=vmax)
        ax.set_xticks(range(k), names, rotation=30, ha="right")
        ax.set_yticks(range(k), names)
        for i in range(k):
            for j in range(k):
                ax.text(j, i, f"{mat[i, j]:.2f}", ha="center", va="center", fontsize=9)
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    return _save(fig, path, svg)


def fig_diff_strip(samples: dict, path: Path, svg: bool = False,
                   rng_seed: int = 0, max_points: int = 250) -> list[Path]:
    """Strip plot of resampled metric differences, grouped by metric and
    colored by comparison; one point cloud per (metric, comparison)."""
    rng = np.random.default_rng(rng_seed)
    comparisons = sorted(samples)
    metrics = sorted({m for comp in samples.values() for m in comp})

    fig, ax = plt.subplots(figsize=(8, 4.5))
    n_comp = max(len(comparisons), 1)
    for ci, comp in enumerate(comparisons):
        color = list(_STRIP_COLORS.values())[ci % len(_STRIP_COLORS)]
        for mi_idx, metric in enumerate(metrics):
            values = np.asarray(samples[comp].get(metric, []), dtype=float)
            if values.size == 0:
                continue
            if values.size > max_points:
                step = values.size // max_points
                values = values[::step]
            center = mi_idx + (ci - (n_comp - 1) / 2) * 0.32
            jitter = rng.uniform(-0.1, 0.1, size=values.size)
            ax.scatter(center + jitter, values, s=6, alpha=0.35, color=color,
                       label=comp if mi_idx == 0 else None)
    ax.axhline(0.0, color="black", lw=0.8, ls="--")
    ax.set_xticks(range(len(metrics)), metrics)
    ax.set_ylabel("metric difference")
    ax.set_title("Resampled metric differences")
    ax.legend(fontsize=8)
    return _save(fig, path, svg)


def fig_diff_violin(samples: dict, path: Path, svg: bool = False) -> list[Path]:
    """Violin plot of the posterior metric-difference distributions, one
    panel per comparison."""
    comparisons = sorted(samples)
    fig, axes = plt.subplots(1, max(len(comparisons), 1),
                             figsize=(5 * max(len(comparisons), 1), 4), squeeze=False)
    for ax, comp in zip(axes[0], comparisons):
        metrics = sorted(samples[comp])
        data = [np.asarray(samples[comp][m], dtype=float) for m in metrics]
        if data:
            ax.violinplot(data, showmeans=True)
        ax.axhline(0.0, color="black", lw=0.8, ls="--")
        ax.set_xticks(range(1, len(metrics) + 1), metrics)
        ax.set_title(comp)
        ax.set_ylabel("metric difference")
    fig.tight_layout()
    return _save(fig, path, svg)


def fig_ablation(ablation: dict, path: Path, svg: bool = False) -> list[Path]:
    """Grouped bars of the headline metrics per model."""
    ranking = ablation["ranking"]
    keys = ("accuracy", "weighted_precision", "weighted_recall", "weighted_f1")
    width = 0.2
    x = np.arange(len(ranking))
    fig, ax = plt.subplots(figsize=(8, 4))
    for i, key in enumerate(keys):
        vals = [ablation["models"][m][key] for m in ranking]
        ax.bar(x + (i - 1.5) * width, vals, width, label=key.replace("weighted_", "w. "))
    ax.set_xticks(x, ranking)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Model comparison on the held-out test set")
    ax.legend(ncols=4, fontsize=8)
    return _save(fig, path, svg)


def fig_history(histories: dict, path: Path, svg: bool = False) -> list[Path]:
    """Accuracy and loss curves per model."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for name, hist in sorted(histories.items()):
        epochs = np.arange(1, len(hist["val_acc"]) + 1)
        axes[0].plot(epochs, hist["val_acc"], label=name)
        axes[1].plot(epochs, hist["val_loss"], label=name)
    axes[0].set_title("Validation accuracy")
    axes[1].set_title("Validation loss")
    for ax in axes:
        ax.set_xlabel("epoch")
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path, svg)


def render_run_report(run_dir, svg: bool = False) -> list[Path]:
    """Render every figure whose source artifact exists; returns the paths."""
    run_dir = Path(run_dir)
    fig_dir = run_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    written: list[Path] = []

    sources = [
        ("fidelity.json", "radar_variance", fig_radar),
        ("complementarity.json", "heatmaps", fig_heatmaps),
        ("diff_samples.json", "diff_strip", fig_diff_strip),
        ("diff_samples.json", "diff_violin", fig_diff_violin),
        ("ablation.json", "ablation", fig_ablation),
        ("histories.json", "training_curves", fig_history),
    ]
    for src, name, render in sources:
        src_path = run_dir / src
        if not src_path.exists():
            continue
        doc = json.loads(src_path.read_text())
        written += render(doc, fig_dir / name, svg)
    return written

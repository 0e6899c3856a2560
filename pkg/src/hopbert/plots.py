"""File-rendered matplotlib figures for the CLI report paths."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .labels import N_CLASSES  # noqa: E402


def plot_loss_curves(history: list[dict], path) -> str:
    """Train vs validation loss per epoch."""
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [h["train_loss"] for h in history], marker="o", label="train")
    ax.plot(epochs, [h["val_loss"] for h in history], marker="s", label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("Training and validation loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def plot_ap_per_class(report, path) -> str:
    """Per-class average precision bars; skipped classes drawn empty."""
    values = [0.0 if a is None else a for a in report.ap_per_class]
    colors = ["lightgray" if a is None else "steelblue" for a in report.ap_per_class]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(N_CLASSES), values, color=colors)
    for c in report.skipped_classes:
        ax.text(c, 0.02, "skipped", ha="center", rotation=90, fontsize=8)
    ax.axhline(report.map, color="firebrick", linestyle="--",
               label=f"mAP = {report.map:.4f}")
    ax.set_xlabel("bias class")
    ax.set_ylabel("average precision")
    ax.set_ylim(0, 1)
    ax.set_title("Average precision per class")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def plot_parallel_coordinates(trials, front_ids, path) -> str:
    """Trial hyperparameters and validation loss on normalized parallel axes;
    Pareto-front members highlighted."""
    axes_spec = [
        ("lr (log10)", [math.log10(t.lr) for t in trials]),
        ("num_hf_layers", [float(t.num_hf_layers) for t in trials]),
        ("use_hopfield_pool", [float(t.use_hopfield_pool) for t in trials]),
        ("pool_num_heads", [float(t.pool_num_heads) for t in trials]),
        ("val_loss", [t.val_loss for t in trials]),
    ]

    def normalize(vals):
        lo, hi = min(vals), max(vals)
        if hi == lo:
            return [0.5 for _ in vals]
        return [(v - lo) / (hi - lo) for v in vals]

    columns = [normalize(vals) for _, vals in axes_spec]
    front = set(front_ids)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    xs = range(len(axes_spec))
    for i, t in enumerate(trials):
        ys = [col[i] for col in columns]
        on_front = t.trial_id in front
        ax.plot(xs, ys,
                color="firebrick" if on_front else "gray",
                alpha=0.9 if on_front else 0.4,
                linewidth=2.0 if on_front else 1.0)
    for x, (name, vals) in enumerate(axes_spec):
        ax.axvline(x, color="black", linewidth=0.6)
        ax.text(x, -0.08, f"{min(vals):.3g}", ha="center", fontsize=7,
                transform=ax.get_xaxis_transform())
        ax.text(x, 1.02, f"{max(vals):.3g}", ha="center", fontsize=7,
                transform=ax.get_xaxis_transform())
    ax.set_xticks(list(xs))
    ax.set_xticklabels([name for name, _ in axes_spec], fontsize=8)
    ax.set_yticks([])
    ax.set_title("Search trials (Pareto front in red)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def plot_score_histograms(stats_scores: dict[str, list[float]], path) -> str:
    """Overlaid sentiment-score histograms per source."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for source, scores in sorted(stats_scores.items()):
        ax.hist(scores, bins=30, alpha=0.5, label=f"{source} (n={len(scores)})")
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("sentiment score")
    ax.set_ylabel("comments")
    ax.set_title("Sentiment score distribution by source")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def plot_cv_histogram(cvs: list[float], threshold: float | None, path) -> str:
    """Distribution of per-sample annotator bias-score CV."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(cvs, bins=30, color="steelblue", alpha=0.8)
    if threshold is not None:
        ax.axvline(threshold, color="firebrick", linestyle="--",
                   label=f"threshold = {threshold}")
        ax.legend()
    ax.set_xlabel("coefficient of variation")
    ax.set_ylabel("samples")
    ax.set_title("Annotator agreement (bias-score CV)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)

"""Evaluation reducers: per-class average precision, mAP, top-k accuracy,
micro F1 at k, and mean Jaccard (IoU) at k.

AP ranks all records by their predicted probability for a class (ties broken
by ascending sample id) and averages precision at each relevant rank over
the number of positives. Relevance is the single argmax target; the set
metrics (F1@k, IoU@k) compare top-k predicted class sets against top-k
target sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .labels import N_CLASSES

DEFAULT_KS = (1, 2, 3)

CSV_COLUMNS = (
    "top1_accuracy", "top2_accuracy", "top3_accuracy", "map",
    "f1_at_1", "f1_at_2", "f1_at_3",
    "iou_at_1", "iou_at_2", "iou_at_3",
    "ap_class_0", "ap_class_1", "ap_class_2", "ap_class_3", "ap_class_4", "ap_class_5",
    "skipped_classes",
)


@dataclass
class PredictionRecord:
    """One sample's predicted distribution plus its derived targets."""

    sample_id: str
    probs: np.ndarray
    target: int
    multilabel_targets: dict[int, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (N_CLASSES,):
            raise ValueError(f"probs must have {N_CLASSES} entries, got {probs.shape}")
        if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-6:
            raise ValueError("probs must be non-negative and sum to 1")
        self.probs = probs
        if not 0 <= self.target < N_CLASSES:
            raise ValueError(f"target {self.target} outside 0..{N_CLASSES - 1}")


def top_k_classes(probs, k: int) -> frozenset[int]:
    """Indices of the k largest probabilities; ties broken by lower index."""
    if not 1 <= k <= N_CLASSES:
        raise ValueError(f"k must be in 1..{N_CLASSES}, got {k}")
    order = np.argsort(-np.asarray(probs, dtype=np.float64), kind="stable")
    return frozenset(int(c) for c in order[:k])


def average_precision(records: list[PredictionRecord], c: int) -> float | None:
    """AP for class c, or None when the class has no positive records."""
    if not records:
        raise ValueError("average_precision needs at least one record")
    if not 0 <= c < N_CLASSES:
        raise ValueError(f"class index {c} outside 0..{N_CLASSES - 1}")
    ranked = sorted(records, key=lambda r: (-r.probs[c], r.sample_id))
    n_positive = sum(1 for r in ranked if r.target == c)
    if n_positive == 0:
        return None
    hits = 0
    total = 0.0
    for rank, rec in enumerate(ranked, start=1):
        if rec.target == c:
            hits += 1
            total += hits / rank
    return total / n_positive


def mean_average_precision(ap_per_class) -> float:
    """Arithmetic mean over non-skipped (non-None, non-NaN) per-class APs."""
    vals = [float(a) for a in ap_per_class if a is not None and not np.isnan(a)]
    if not vals:
        raise ValueError("all classes skipped: mAP undefined")
    return sum(vals) / len(vals)


def topk_accuracy(records: list[PredictionRecord], k: int) -> float:
    """Fraction of records whose target lies in the top-k predicted classes."""
    if not records:
        raise ValueError("topk_accuracy needs at least one record")
    hits = sum(1 for r in records if r.target in top_k_classes(r.probs, k))
    return hits / len(records)


def f1_at_k(records: list[PredictionRecord], k: int) -> float:
    """Micro-averaged F1 between top-k predicted and target sets (pooled counts)."""
    if not records:
        raise ValueError("f1_at_k needs at least one record")
    tp = fp = fn = 0
    for r in records:
        pred = top_k_classes(r.probs, k)
        target = r.multilabel_targets[k]
        tp += len(pred & target)
        fp += len(pred - target)
        fn += len(target - pred)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def iou_at_k(records: list[PredictionRecord], k: int) -> float:
    """Mean Jaccard index between top-k predicted and target sets.

    Summation runs in sample-id order so the result is exactly invariant to
    record order.
    """
    if not records:
        raise ValueError("iou_at_k needs at least one record")
    total = 0.0
    for r in sorted(records, key=lambda rec: rec.sample_id):
        pred = top_k_classes(r.probs, k)
        target = r.multilabel_targets[k]
        union = pred | target
        total += len(pred & target) / len(union) if union else 1.0
    return total / len(records)


@dataclass
class MetricsReport:
    """Full metric suite for one dataset split.

    ap_per_class holds None for classes with zero positives; those classes
    appear in skipped_classes and are excluded from map. Metric families not
    requested by the evaluation mode are empty dicts.
    """

    ap_per_class: list[float | None]
    map: float
    topk_accuracy: dict[int, float]
    f1_at_k: dict[int, float]
    iou_at_k: dict[int, float]
    skipped_classes: list[int]

    def to_json_dict(self) -> dict:
        return {
            "ap_per_class": [None if a is None else a for a in self.ap_per_class],
            "map": self.map,
            "topk_accuracy": {str(k): v for k, v in sorted(self.topk_accuracy.items())},
            "f1_at_k": {str(k): v for k, v in sorted(self.f1_at_k.items())},
            "iou_at_k": {str(k): v for k, v in sorted(self.iou_at_k.items())},
            "skipped_classes": self.skipped_classes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def to_csv_row(self) -> tuple[list[str], list[str]]:
        """Fixed-name header plus one row; absent values render as empty cells."""

        def fmt(v) -> str:
            return "" if v is None else repr(float(v))

        row = [
            fmt(self.topk_accuracy.get(1)), fmt(self.topk_accuracy.get(2)),
            fmt(self.topk_accuracy.get(3)), fmt(self.map),
            fmt(self.f1_at_k.get(1)), fmt(self.f1_at_k.get(2)), fmt(self.f1_at_k.get(3)),
            fmt(self.iou_at_k.get(1)), fmt(self.iou_at_k.get(2)), fmt(self.iou_at_k.get(3)),
        ]
        row += [fmt(a) for a in self.ap_per_class]
        row.append("|".join(str(c) for c in self.skipped_classes))
        return list(CSV_COLUMNS), row


def compute_report(records: list[PredictionRecord], ks=DEFAULT_KS,
                   families: tuple[str, ...] = ("multiclass", "multilabel")
                   ) -> MetricsReport:
    """Reduce prediction records into a MetricsReport.

    families selects which metric groups are filled: "multiclass" adds
    top-k accuracy, "multilabel" adds F1@k and IoU@k; AP and mAP are always
    computed from the argmax targets.
    """
    if not records:
        raise ValueError("compute_report needs at least one record")
    ap = [average_precision(records, c) for c in range(N_CLASSES)]
    skipped = [c for c, a in enumerate(ap) if a is None]
    report = MetricsReport(
        ap_per_class=ap,
        map=mean_average_precision(ap),
        topk_accuracy={}, f1_at_k={}, iou_at_k={},
        skipped_classes=skipped,
    )
    for k in ks:
        if "multiclass" in families:
            report.topk_accuracy[k] = topk_accuracy(records, k)
        if "multilabel" in families:
            report.f1_at_k[k] = f1_at_k(records, k)
            report.iou_at_k[k] = iou_at_k(records, k)
    return report

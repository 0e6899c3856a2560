"""Annotator-confidence soft labels, agreement filtering, and the soft-target loss.

A sample's soft label spreads probability mass over the 6 bias classes in
proportion to each annotator's confidence: mass confidence_i / K lands on
the class that annotator voted, where K is the total confidence. Training
minimizes the mean soft cross entropy -sum_c p_c log(eps + q_c).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

N_CLASSES = 6
SOURCES = ("FoxNews", "Breitbart", "YouTube", "Synthetic")

DEFAULT_LOSS_EPS = 1e-8


class SchemaError(ValueError):
    """Malformed input record (JSON lines, lexicons, config files)."""


@dataclass(frozen=True)
class Annotation:
    """One annotator's vote: integer bias score 0..5 with a positive confidence."""

    bias_score: int
    confidence: float

    def __post_init__(self):
        if not isinstance(self.bias_score, (int, np.integer)) or isinstance(self.bias_score, bool):
            raise ValueError(f"bias_score must be an integer, got {self.bias_score!r}")
        if not 0 <= self.bias_score < N_CLASSES:
            raise ValueError(f"bias_score {self.bias_score} outside 0..{N_CLASSES - 1}")
        if not self.confidence > 0:
            raise ValueError(f"confidence must be > 0, got {self.confidence}")


@dataclass
class AnnotatedSample:
    """A text plus its annotator votes.

    annotations may be empty only for unlabeled curation output; training
    and aggregation require at least one.
    """

    id: str
    text: str
    source: str
    annotations: list[Annotation] = field(default_factory=list)

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"sample {self.id!r} has empty text")
        if self.source not in SOURCES:
            raise ValueError(f"sample {self.id!r} has unknown source {self.source!r}")


@dataclass(frozen=True, eq=False)
class SoftLabel:
    """Probability vector over the 6 classes; entries >= 0, sums to one."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (N_CLASSES,):
            raise ValueError(f"soft label must have {N_CLASSES} entries, got {probs.shape}")
        if (probs < 0).any():
            raise ValueError("soft label entries must be >= 0")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"soft label sums to {probs.sum()}, not 1")
        object.__setattr__(self, "probs", probs)


def _as_annotations(annotations: Iterable) -> list[Annotation]:
    out = []
    for a in annotations:
        out.append(a if isinstance(a, Annotation) else Annotation(int(a[0]), float(a[1])))
    return out


def soft_label(annotations: Iterable) -> SoftLabel:
    """Aggregate (bias_score, confidence) votes into a soft label.

    K is the total confidence; each vote adds confidence/K to its class,
    accumulating when annotators collide on a class.
    """
    votes = _as_annotations(annotations)
    if not votes:
        raise ValueError("soft_label needs at least one annotation")
    k = sum(a.confidence for a in votes)
    probs = np.zeros(N_CLASSES)
    for a in votes:
        probs[a.bias_score] += a.confidence / k
    return SoftLabel(probs)


def cv(values: Sequence[float]) -> float:
    """Coefficient of variation: sample (n-1) standard deviation over the mean."""
    vals = [float(v) for v in values]
    if len(vals) < 2:
        raise ValueError("cv needs at least 2 values")
    mean = sum(vals) / len(vals)
    if mean == 0:
        raise ValueError("cv undefined for zero mean")
    var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
    return math.sqrt(var) / mean


def sample_cv(sample: AnnotatedSample) -> float | None:
    """CV of a sample's bias scores; None when it has fewer than 2 annotations.

    All-equal scores count as perfect agreement (cv 0) even at zero mean.
    """
    scores = [a.bias_score for a in sample.annotations]
    if len(scores) < 2:
        return None
    if len(set(scores)) == 1:
        return 0.0
    return cv(scores)


def cv_filter(samples: Sequence[AnnotatedSample], threshold: float
              ) -> tuple[list[AnnotatedSample], float]:
    """Keep samples whose bias-score CV is <= threshold.

    Samples with a single annotation pass through (CV undefined for them).
    Returns (retained, dropped fraction of the input).
    """
    retained = []
    for s in samples:
        c = sample_cv(s)
        if c is None or c <= threshold:
            retained.append(s)
    dropped = len(samples) - len(retained)
    return retained, (dropped / len(samples) if samples else 0.0)


def _probs_of(p) -> np.ndarray:
    if isinstance(p, SoftLabel):
        return p.probs
    return np.asarray(p, dtype=np.float64)


def soft_cross_entropy(p, q, eps: float = DEFAULT_LOSS_EPS) -> float:
    """-sum_c p_c log(eps + q_c); eps keeps the log finite at q_c == 0."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    pv = _probs_of(p)
    qv = np.asarray(q, dtype=np.float64)
    if qv.shape != pv.shape:
        raise ValueError(f"shape mismatch: p {pv.shape}, q {qv.shape}")
    if (qv < 0).any():
        raise ValueError("predicted probabilities must be >= 0")
    if abs(qv.sum() - 1.0) > 1e-6:
        raise ValueError(f"predicted probabilities sum to {qv.sum()}, not 1")
    return float(-(pv * np.log(eps + qv)).sum())


def batch_loss(soft_labels: Sequence, predictions: Sequence,
               eps: float = DEFAULT_LOSS_EPS) -> float:
    """Mean soft cross entropy over equal-length label/prediction lists."""
    if len(soft_labels) != len(predictions):
        raise ValueError(
            f"count mismatch: {len(soft_labels)} labels, {len(predictions)} predictions")
    if not soft_labels:
        raise ValueError("batch_loss needs at least one sample")
    total = sum(soft_cross_entropy(p, q, eps) for p, q in zip(soft_labels, predictions))
    return total / len(soft_labels)


def multiclass_target(p) -> int:
    """Argmax class of a soft label; ties break to the lowest class index."""
    return int(np.argmax(_probs_of(p)))


class MultilabelTarget(NamedTuple):
    """Top-k class set; includes_zero_prob flags zero-probability padding."""

    classes: frozenset[int]
    includes_zero_prob: bool


def multilabel_target(p, k: int) -> MultilabelTarget:
    """Indices of the k largest soft-label entries, ties broken by lower index.

    Zero-probability classes appear only when fewer than k entries are
    positive; the flag records that padding happened.
    """
    if not 1 <= k <= N_CLASSES:
        raise ValueError(f"k must be in 1..{N_CLASSES}, got {k}")
    probs = _probs_of(p)
    order = np.argsort(-probs, kind="stable")
    chosen = order[:k]
    positives = int((probs > 0).sum())
    return MultilabelTarget(frozenset(int(c) for c in chosen), k > positives)


# -- JSON-lines input format -----------------------------------------------------


def parse_sample(obj: dict, line_no: int | None = None,
                 require_annotations: bool = True) -> AnnotatedSample:
    where = f" (line {line_no})" if line_no is not None else ""
    if not isinstance(obj, dict):
        raise SchemaError(f"sample record must be an object{where}")
    for key in ("id", "text", "source"):
        if key not in obj:
            raise SchemaError(f"sample record missing {key!r}{where}")
    raw_annotations = obj.get("annotations", [])
    if not isinstance(raw_annotations, list):
        raise SchemaError(f"annotations must be a list{where}")
    if require_annotations and not raw_annotations:
        raise SchemaError(f"sample {obj['id']!r} has no annotations{where}")
    annotations = []
    for a in raw_annotations:
        if not isinstance(a, dict) or "score" not in a or "confidence" not in a:
            raise SchemaError(f"annotation needs score and confidence{where}")
        try:
            annotations.append(Annotation(int(a["score"]), float(a["confidence"])))
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad annotation {a!r}{where}: {exc}") from exc
    try:
        return AnnotatedSample(id=str(obj["id"]), text=str(obj["text"]),
                               source=str(obj["source"]), annotations=annotations)
    except ValueError as exc:
        raise SchemaError(f"bad sample{where}: {exc}") from exc


def sample_to_dict(sample: AnnotatedSample) -> dict:
    return {
        "id": sample.id,
        "text": sample.text,
        "source": sample.source,
        "annotations": [
            {"score": a.bias_score, "confidence": a.confidence} for a in sample.annotations
        ],
    }


def load_annotated_jsonl(path, require_annotations: bool = True) -> list[AnnotatedSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON on line {i}: {exc}") from exc
            samples.append(parse_sample(obj, line_no=i,
                                        require_annotations=require_annotations))
    return samples


def dump_annotated_jsonl(path, samples: Iterable[AnnotatedSample],
                         extra_fields: dict[str, dict] | None = None) -> None:
    """Write samples as JSON lines; extra_fields maps sample id to added keys."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            obj = sample_to_dict(s)
            if extra_fields and s.id in extra_fields:
                obj.update(extra_fields[s.id])
            fh.write(json.dumps(obj, sort_keys=True) + "\n")

"""Corpus curation at desk scale: lexicon sentiment scoring, bottom-fraction
candidate extraction with article-matched random controls, source-based
splits, preprocessing, whitespace tokenization, and corpus statistics.

Scoring formula: sum of matched token weights from the sentiment table and
the magnitude-adjusted hate table, divided by sqrt(token count). Candidate
extraction keeps the lowest-scoring bottom fraction among comments that
mention a racial term, then pairs each candidate with one seeded random
control from the same article so the curated set is half candidates.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .labels import SOURCES, AnnotatedSample, SchemaError

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")

SCORE_NORMALIZATION = "sum_over_sqrt_len"


@dataclass
class RawComment:
    """One crawled comment; controls are matched within its article_id."""

    id: str
    source: str
    article_id: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"comment {self.id!r} has empty text")
        if not self.article_id:
            raise ValueError(f"comment {self.id!r} has no article_id")
        if self.source not in SOURCES:
            raise ValueError(f"comment {self.id!r} has unknown source {self.source!r}")


@dataclass
class Lexicon:
    """Lowercased term -> signed weight lookup table."""

    entries: dict[str, float]
    kind: str  # "sentiment" | "hate"

    def __post_init__(self):
        if self.kind not in ("sentiment", "hate"):
            raise ValueError(f"lexicon kind must be sentiment or hate, got {self.kind!r}")
        for term, weight in self.entries.items():
            if term != term.lower():
                raise ValueError(f"lexicon term {term!r} is not lowercased")
            if not math.isfinite(weight):
                raise ValueError(f"lexicon weight for {term!r} is not finite")

    def max_magnitude(self) -> float:
        if not self.entries:
            raise ValueError("empty lexicon has no magnitude")
        return max(abs(w) for w in self.entries.values())


@dataclass
class CurationConfig:
    bottom_fraction: float = 0.2
    racial_terms: frozenset[str] = frozenset()
    seed: int = 0
    normalization: str = SCORE_NORMALIZATION

    def __post_init__(self):
        if not 0 < self.bottom_fraction < 1:
            raise ValueError("bottom_fraction must be in (0, 1)")
        if self.normalization != SCORE_NORMALIZATION:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        self.racial_terms = frozenset(t.lower() for t in self.racial_terms)


class ScoredComment(NamedTuple):
    comment: RawComment
    score: float


def preprocess(text: str) -> str:
    """Strip URLs and @-mentions, collapse whitespace, lowercase."""
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    return " ".join(text.lower().split())


def adjust_hate_lexicon(hate: Lexicon, sentiment: Lexicon) -> Lexicon:
    """Rescale hate weights by one factor so both tables share the same
    maximum magnitude and influence scores consistently."""
    factor = sentiment.max_magnitude() / hate.max_magnitude()
    return Lexicon(entries={t: w * factor for t, w in hate.entries.items()}, kind="hate")


def sentiment_score(text: str, sentiment: Lexicon, hate_adjusted: Lexicon) -> float:
    """Sum of matched token weights from both tables over sqrt(token count).

    Expects preprocessed text; unmatched tokens contribute nothing. Empty
    text scores 0 with a warning.
    """
    tokens = text.split()
    if not tokens:
        warnings.warn("scoring empty text; score is 0", stacklevel=2)
        return 0.0
    total = sum(sentiment.entries.get(t, 0.0) + hate_adjusted.entries.get(t, 0.0)
                for t in tokens)
    return total / math.sqrt(len(tokens))


def score_comments(comments: Sequence[RawComment], sentiment: Lexicon,
                   hate: Lexicon) -> list[ScoredComment]:
    """Preprocess and score every comment (hate table adjusted first)."""
    adjusted = adjust_hate_lexicon(hate, sentiment)
    return [ScoredComment(c, sentiment_score(preprocess(c.text), sentiment, adjusted))
            for c in comments]


def contains_racial_term(text: str, terms: frozenset[str]) -> bool:
    return any(tok in terms for tok in text.split())


def select_candidates(scored: Sequence[ScoredComment], cfg: CurationConfig
                      ) -> list[ScoredComment]:
    """Bottom-fraction lowest scorers among comments mentioning a racial term.

    Keeps floor(bottom_fraction * n) of the n term-matching comments, ties
    broken by ascending comment id. The selection is global across sources.
    """
    filtered = [s for s in scored
                if contains_racial_term(preprocess(s.comment.text), cfg.racial_terms)]
    if not filtered:
        raise ValueError("no comment contains a racial term; nothing to curate")
    n_keep = int(len(filtered) * cfg.bottom_fraction)
    if n_keep == 0:
        raise ValueError(
            f"bottom fraction {cfg.bottom_fraction} of {len(filtered)} matching "
            "comments selects zero candidates")
    ranked = sorted(filtered, key=lambda s: (s.score, s.comment.id))
    return ranked[:n_keep]


def match_controls(candidates: Sequence[RawComment], pool: Sequence[RawComment],
                   seed: int) -> tuple[list[RawComment], list[str]]:
    """One seeded uniform same-article control per candidate, sampled without
    replacement from the non-candidate pool.

    Returns (controls, dropped candidate ids). A candidate whose article has
    no remaining eligible control is dropped with a warning.
    """
    candidate_ids = {c.id for c in candidates}
    overlap = candidate_ids & {p.id for p in pool}
    if overlap:
        raise ValueError(f"pool must be disjoint from candidates (shared ids {sorted(overlap)[:3]})")
    by_article: dict[str, list[RawComment]] = defaultdict(list)
    for p in pool:
        by_article[p.article_id].append(p)
    for comments in by_article.values():
        comments.sort(key=lambda c: c.id)
    rng = np.random.default_rng(seed)
    controls: list[RawComment] = []
    dropped: list[str] = []
    for cand in sorted(candidates, key=lambda c: c.id):
        eligible = by_article.get(cand.article_id, [])
        if not eligible:
            warnings.warn(
                f"candidate {cand.id} dropped: no eligible control in article "
                f"{cand.article_id}", stacklevel=2)
            dropped.append(cand.id)
            continue
        pick = int(rng.integers(len(eligible)))
        controls.append(eligible.pop(pick))
    return controls, dropped


@dataclass
class CurationResult:
    samples: list[AnnotatedSample]
    candidate_ids: frozenset[str]
    control_ids: frozenset[str]
    dropped_candidate_ids: list[str]
    scores: dict[str, float]

    def summary(self) -> dict:
        n = len(self.samples)
        return {
            "curated": n,
            "candidates": len(self.candidate_ids),
            "controls": len(self.control_ids),
            "dropped_candidates": len(self.dropped_candidate_ids),
            "candidate_fraction": len(self.candidate_ids) / n if n else 0.0,
        }


def curate(comments: Sequence[RawComment], sentiment: Lexicon, hate: Lexicon,
           cfg: CurationConfig) -> CurationResult:
    """Full curation pass: score, select candidates, match controls, and emit
    unlabeled samples (annotations stay empty until labeled)."""
    scored = score_comments(comments, sentiment, hate)
    candidates = select_candidates(scored, cfg)
    candidate_ids = {s.comment.id for s in candidates}
    pool = [c for c in comments if c.id not in candidate_ids]
    controls, dropped = match_controls([s.comment for s in candidates], pool, cfg.seed)
    dropped_set = set(dropped)
    kept = [s.comment for s in candidates if s.comment.id not in dropped_set]
    samples = [AnnotatedSample(id=c.id, text=c.text, source=c.source, annotations=[])
               for c in kept + controls]
    return CurationResult(
        samples=samples,
        candidate_ids=frozenset(c.id for c in kept),
        control_ids=frozenset(c.id for c in controls),
        dropped_candidate_ids=dropped,
        scores={s.comment.id: s.score for s in scored},
    )


def split_dataset(samples: Sequence[AnnotatedSample], seed: int,
                  val_fraction: float = 0.1) -> dict[str, list[AnnotatedSample]]:
    """Source-based splits: test is all YouTube; validation is a seeded
    floor(val_fraction * n) sample of the rest; train is the remainder.

    Raises if any split comes out empty, naming the split.
    """
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must be in (0, 1)")
    test = [s for s in samples if s.source == "YouTube"]
    pool = [s for s in samples if s.source != "YouTube"]
    n_val = int(len(pool) * val_fraction)
    rng = np.random.default_rng(seed)
    ordered = sorted(pool, key=lambda s: s.id)
    val_ids = {ordered[i].id for i in rng.choice(len(ordered), size=n_val, replace=False)} \
        if n_val else set()
    validation = [s for s in pool if s.id in val_ids]
    train = [s for s in pool if s.id not in val_ids]
    splits = {"train": train, "validation": validation, "test": test}
    for name, part in splits.items():
        if not part:
            raise ValueError(f"empty split: {name}")
    return splits


# -- vocabulary and tokenization ---------------------------------------------------

PAD, CLS, UNK = "[PAD]", "[CLS]", "[UNK]"
SPECIALS = (PAD, CLS, UNK)


@dataclass
class Vocab:
    """Token list with reserved [PAD]=0, [CLS]=1, [UNK]=2 slots."""

    tokens: list[str]
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.tokens[:3]) != SPECIALS:
            raise ValueError(f"vocab must start with {SPECIALS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocab contains duplicate tokens")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def cls_id(self) -> int:
        return 1

    @property
    def unk_id(self) -> int:
        return 2


def build_vocab(texts: Iterable[str], max_size: int = 4096, min_freq: int = 1) -> Vocab:
    """Frequency vocab over whitespace tokens of preprocessed texts.

    Deterministic order: count descending, then token ascending; capped at
    max_size including the three specials.
    """
    if max_size < len(SPECIALS) + 1:
        raise ValueError("max_size leaves no room beyond the special tokens")
    counts = Counter()
    for text in texts:
        counts.update(text.split())
    ranked = sorted((t for t, c in counts.items() if c >= min_freq),
                    key=lambda t: (-counts[t], t))
    return Vocab(tokens=list(SPECIALS) + ranked[: max_size - len(SPECIALS)])


def tokenize(text: str, vocab: Vocab, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Map whitespace tokens to ids: [CLS] first, [UNK] for unknowns,
    truncated to max_len, padded with [PAD]; returns (ids, real-position mask)."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    body = [vocab.index.get(t, vocab.unk_id) for t in text.split()]
    ids = [vocab.cls_id] + body
    ids = ids[:max_len]
    n_real = len(ids)
    ids = ids + [vocab.pad_id] * (max_len - n_real)
    mask = np.zeros(max_len, dtype=bool)
    mask[:n_real] = True
    return np.asarray(ids, dtype=np.int64), mask


# -- corpus statistics ---------------------------------------------------------------


@dataclass
class SourceStats:
    count: int
    percent_negative: float
    mean: float
    median: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "percent_negative": self.percent_negative,
            "mean": self.mean,
            "median": self.median,
            "min": self.min,
            "max": self.max,
        }


def _stats_of(scores: Sequence[float]) -> SourceStats:
    arr = np.asarray(scores, dtype=np.float64)
    return SourceStats(
        count=int(arr.size),
        percent_negative=float(100.0 * (arr < 0).sum() / arr.size),
        mean=float(arr.mean()),
        median=float(np.median(arr)),
        min=float(arr.min()),
        max=float(arr.max()),
    )


def corpus_stats(scored: Sequence[ScoredComment]) -> dict[str, SourceStats]:
    """Per-source and overall score statistics; keys are source names plus 'all'."""
    if not scored:
        raise ValueError("corpus_stats needs at least one scored comment")
    by_source: dict[str, list[float]] = defaultdict(list)
    for s in scored:
        by_source[s.comment.source].append(s.score)
    stats = {src: _stats_of(vals) for src, vals in sorted(by_source.items())}
    stats["all"] = _stats_of([s.score for s in scored])
    return stats


def stats_table(stats: dict[str, SourceStats]) -> str:
    """Human-readable fixed-width table of corpus_stats output."""
    header = f"{'source':<12}{'count':>8}{'% neg':>9}{'mean':>10}{'median':>10}{'min':>10}{'max':>10}"
    lines = [header, "-" * len(header)]
    for src in sorted(k for k in stats if k != "all") + ["all"]:
        s = stats[src]
        lines.append(f"{src:<12}{s.count:>8}{s.percent_negative:>9.2f}"
                     f"{s.mean:>10.4f}{s.median:>10.4f}{s.min:>10.4f}{s.max:>10.4f}")
    return "\n".join(lines)


def stats_to_json(stats: dict[str, SourceStats]) -> str:
    return json.dumps({k: v.to_dict() for k, v in stats.items()}, sort_keys=True)


# -- file formats -----------------------------------------------------------------------


def load_comments_jsonl(path) -> list[RawComment]:
    """Read {id, source, article_id, text} JSON lines."""
    comments = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON on line {i}: {exc}") from exc
            if not isinstance(obj, dict):
                raise SchemaError(f"comment record must be an object (line {i})")
            for key in ("id", "source", "article_id", "text"):
                if key not in obj:
                    raise SchemaError(f"comment record missing {key!r} (line {i})")
            try:
                comments.append(RawComment(id=str(obj["id"]), source=str(obj["source"]),
                                           article_id=str(obj["article_id"]),
                                           text=str(obj["text"])))
            except ValueError as exc:
                raise SchemaError(f"bad comment (line {i}): {exc}") from exc
    return comments


def dump_comments_jsonl(path, comments: Iterable[RawComment]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in comments:
            fh.write(json.dumps(
                {"id": c.id, "source": c.source, "article_id": c.article_id,
                 "text": c.text}, sort_keys=True) + "\n")


def load_lexicon_tsv(path, kind: str) -> Lexicon:
    """Read term<TAB>weight lines; duplicate terms are an error."""
    entries: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise SchemaError(f"expected term<TAB>weight on line {i} of {path}")
            term = parts[0].strip().lower()
            try:
                weight = float(parts[1])
            except ValueError as exc:
                raise SchemaError(f"bad weight on line {i} of {path}: {parts[1]!r}") from exc
            if term in entries:
                raise SchemaError(f"duplicate lexicon term {term!r} on line {i} of {path}")
            entries[term] = weight
    try:
        return Lexicon(entries=entries, kind=kind)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def load_term_list(path) -> frozenset[str]:
    """One term per line, lowercased; blank lines ignored."""
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())

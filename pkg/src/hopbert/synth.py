"""Seeded synthetic fixtures: planted-pattern training corpora and curation inputs.

Training texts plant class marker tokens ("marker0".."marker5") among filler
words so the bias score is derivable from the text; annotators vote the
planted class (occasionally with one low-confidence off-by-one vote, which
never moves the argmax). Curation fixtures plant sentiment words, racial
terms and hate terms so candidate selection has real structure.
"""

from __future__ import annotations

import numpy as np

from .corpus import Lexicon, RawComment
from .labels import N_CLASSES, AnnotatedSample, Annotation

FILLER_WORDS = (
    "the a and then so while people think say watch read news story comment "
    "video post today never always maybe still also about after before over "
    "under again really very quite just same other even more less"
).split()

POSITIVE_WORDS = ("good", "great", "kind", "fair", "calm", "happy")
NEGATIVE_WORDS = ("bad", "awful", "ugly", "angry", "cruel", "nasty")
HATE_TERMS = ("slurone", "slurtwo", "slurthree", "slurfour")
RACIAL_TERMS = ("groupa", "groupb", "groupc")

_TRAIN_SOURCES = ("FoxNews", "Breitbart")


def _marker(c: int) -> str:
    return f"marker{c}"


def _sample_text(rng: np.random.Generator, cls: int) -> str:
    n_filler = int(rng.integers(6, 14))
    words = list(rng.choice(FILLER_WORDS, size=n_filler))
    words += [_marker(cls)] * int(rng.integers(2, 4))
    rng.shuffle(words)
    return " ".join(words)


def _sample_annotations(rng: np.random.Generator, cls: int,
                        single_annotator: bool) -> list[Annotation]:
    if single_annotator:
        return [Annotation(cls, int(rng.integers(3, 6)))]
    votes = [Annotation(cls, int(rng.integers(3, 6)))
             for _ in range(int(rng.integers(2, 4)))]
    if rng.random() < 0.2:
        # Low-confidence dissent; planted-class mass stays strictly larger.
        off = min(N_CLASSES - 1, max(0, cls + int(rng.choice((-1, 1)))))
        if off != cls:
            votes.append(Annotation(off, 1))
    return votes


def make_training_corpus(n_train_pool: int, n_youtube: int, seed: int,
                         single_annotator: bool = False) -> list[AnnotatedSample]:
    """Balanced 6-class corpus; YouTube-tagged samples form the test split,
    the rest alternate between FoxNews and Breitbart."""
    rng = np.random.default_rng(seed)
    samples = []
    total = n_train_pool + n_youtube
    for i in range(total):
        cls = i % N_CLASSES
        source = "YouTube" if i < n_youtube else _TRAIN_SOURCES[i % len(_TRAIN_SOURCES)]
        samples.append(AnnotatedSample(
            id=f"s{i:06d}",
            text=_sample_text(rng, cls),
            source=source,
            annotations=_sample_annotations(rng, cls, single_annotator),
        ))
    return samples


def sample_true_class(sample: AnnotatedSample) -> int:
    """Recover the planted class from the marker token (fixture helper)."""
    for tok in sample.text.split():
        if tok.startswith("marker"):
            return int(tok[len("marker"):])
    raise ValueError(f"sample {sample.id} has no marker token")


def make_sentiment_lexicon() -> Lexicon:
    entries = {w: 1.0 for w in POSITIVE_WORDS}
    entries.update({w: -1.0 for w in NEGATIVE_WORDS})
    return Lexicon(entries=entries, kind="sentiment")


def make_hate_lexicon() -> Lexicon:
    # Deliberately on a different magnitude scale (adjusted at scoring time).
    return Lexicon(entries={t: -4.0 for t in HATE_TERMS}, kind="hate")


def make_curation_corpus(n_comments: int, seed: int,
                         ) -> tuple[list[RawComment], Lexicon, Lexicon, frozenset[str]]:
    """Raw comments with planted sentiment/racial/hate structure.

    Roughly half the comments mention a racial term; their negativity varies
    so bottom-fraction selection is meaningful. Articles hold ~10 comments
    each so candidates always have same-article controls available.
    """
    rng = np.random.default_rng(seed)
    sources = ("FoxNews", "Breitbart", "YouTube")
    comments = []
    for i in range(n_comments):
        words = list(rng.choice(FILLER_WORDS, size=int(rng.integers(5, 12))))
        negativity = rng.random()
        n_sentiment = int(rng.integers(1, 4))
        pool = NEGATIVE_WORDS if negativity > 0.4 else POSITIVE_WORDS
        words += list(rng.choice(pool, size=n_sentiment))
        if rng.random() < 0.5:
            words.append(str(rng.choice(RACIAL_TERMS)))
            if negativity > 0.7:
                words.append(str(rng.choice(HATE_TERMS)))
        if rng.random() < 0.1:
            words.append("@someuser")
        if rng.random() < 0.1:
            words.append("https://example.com/x")
        rng.shuffle(words)
        comments.append(RawComment(
            id=f"c{i:06d}",
            source=sources[i % len(sources)],
            article_id=f"a{i // 10:05d}",
            text=" ".join(words),
        ))
    return comments, make_sentiment_lexicon(), make_hate_lexicon(), frozenset(RACIAL_TERMS)


def annotate_samples(samples: list[AnnotatedSample], biased_ids: frozenset[str],
                     seed: int) -> list[AnnotatedSample]:
    """Stand-in for the crowd-labeling stage: biased ids get high bias votes,
    the rest low ones. Returns new samples, inputs untouched."""
    rng = np.random.default_rng(seed)
    labeled = []
    for s in samples:
        if s.id in biased_ids:
            cls = int(rng.integers(3, N_CLASSES))
        else:
            cls = int(rng.integers(0, 3))
        labeled.append(AnnotatedSample(
            id=s.id, text=s.text, source=s.source,
            annotations=_sample_annotations(rng, cls, single_annotator=False),
        ))
    return labeled

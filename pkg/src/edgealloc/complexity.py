"""Complexity classification of query statements via fused token similarity.

A statement is compared against a labelled corpus of past statements.  For
every corpus entry, several token-level similarity metrics are computed,
ranked by a significance level (how many of the other metric values agree
with each one), and the top-n are folded with the Hamacher product.  The
per-entry scores are then aggregated per complexity class with a
quasi-arithmetic mean, yielding one membership degree per class.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError

__all__ = [
    "ComplexityClass",
    "DEFAULT_CLASSES",
    "ComplexityParams",
    "ComplexityVector",
    "TokenFeature",
    "TrainingQueryCorpus",
    "ComplexityClassifier",
    "SIMILARITY_METRICS",
    "tokenize_statement",
    "similarity_metric",
    "distance_to_similarity",
    "significance_levels",
    "hamacher_fold",
    "quasi_arithmetic_mean",
    "fuse_similarities",
    "per_tuple_similarity",
    "classify_complexity",
    "leave_one_out_accuracy",
    "load_corpus",
    "save_corpus",
]

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Metric evaluation order; index is the last tie-break key when ranking.
SIMILARITY_METRICS = ("hamming", "jaccard", "cosine")


@dataclass(frozen=True)
class ComplexityClass:
    """One member of the fixed complexity class set.

    Ids must be unique and contiguous from 0; the class set is frozen before
    any classification happens.
    """

    id: int
    label: str


DEFAULT_CLASSES = (
    ComplexityClass(0, "O(n log n)"),
    ComplexityClass(1, "O(n)"),
    ComplexityClass(2, "O(n^2)"),
)


@dataclass(frozen=True)
class ComplexityParams:
    """Tuning knobs for the similarity fusion pipeline.

    gamma: neighbourhood radius used when counting how many metric values
        support each other.
    delta1, delta2: slope / offset of the sigmoid that turns a support count
        into a significance level.
    top_n: how many metric values (ranked by significance) survive into the
        Hamacher fold.
    hamacher_a: Hamacher product parameter; 1.0 reduces the fold to a plain
        product.
    alpha: exponent of the quasi-arithmetic mean aggregating per-entry scores
        into class memberships.
    threshold: minimum membership required to resolve a class.
    """

    gamma: float = 0.1
    delta1: float = 1.0
    delta2: float = 1.0
    top_n: int = 2
    hamacher_a: float = 1.0
    alpha: float = 1.0
    threshold: float = 0.8

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")
        if self.hamacher_a < 0:
            raise ValueError(f"hamacher_a must be >= 0, got {self.hamacher_a}")
        if self.alpha == 0:
            raise ValueError("alpha must be non-zero")
        if not 0 < self.threshold <= 1:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")


@dataclass(frozen=True)
class ComplexityVector:
    """One membership degree in [0, 1] per complexity class."""

    memberships: tuple

    def __post_init__(self) -> None:
        for m in self.memberships:
            if not (0.0 <= m <= 1.0):
                raise ValueError(f"membership {m} outside [0, 1]")

    def argmax(self) -> int:
        best = 0
        for i, m in enumerate(self.memberships):
            if m > self.memberships[best]:
                best = i
        return best

    def max(self) -> float:
        return max(self.memberships)


@dataclass(frozen=True)
class TokenFeature:
    """Normalised token multiset of one statement.

    Binary vocabulary vectors are implied: any comparison builds its
    vocabulary from the union of the two token sets involved.
    """

    counts: tuple  # ((token, count), ...) sorted for hashability

    @property
    def tokens(self) -> frozenset:
        return frozenset(t for t, _ in self.counts)

    @property
    def total(self) -> int:
        return sum(c for _, c in self.counts)

    def as_counter(self) -> Counter:
        return Counter(dict(self.counts))


def tokenize_statement(statement: str) -> TokenFeature:
    """Case-fold and split a statement into its token multiset.

    Tokens are maximal runs of ASCII letters/digits; everything else
    (punctuation, operators, quotes) acts as a separator.
    """
    if not statement or not statement.strip():
        raise ValueError("statement must be non-empty")
    tokens = _TOKEN_RE.findall(statement.lower())
    if not tokens:
        raise ValueError(f"statement contains no tokens: {statement!r}")
    counts = Counter(tokens)
    return TokenFeature(counts=tuple(sorted(counts.items())))


def distance_to_similarity(d: float) -> float:
    """Map a non-negative distance to a similarity in (0, 1] via 1 / (1 + d)."""
    if d < 0:
        raise ValueError(f"distance must be non-negative, got {d}")
    return 1.0 / (1.0 + d)


def similarity_metric(kind: str, x: TokenFeature, y: TokenFeature) -> float:
    """Similarity of two token features in [0, 1]; 1 means identical.

    ``jaccard`` works on distinct-token sets, ``cosine`` on token count
    vectors, and ``hamming`` counts presence/absence mismatches over the
    vocabulary built from both inputs, normalised by that vocabulary's size
    and mapped through ``distance_to_similarity``.
    """
    xs, ys = x.tokens, y.tokens
    inter = len(xs & ys)
    union = len(xs | ys)
    if kind == "jaccard":
        return inter / union if union else 1.0
    if kind == "hamming":
        if union == 0:
            return 1.0
        mismatches = union - inter  # symmetric difference over the shared vocab
        return distance_to_similarity(mismatches / union)
    if kind == "cosine":
        cx, cy = x.as_counter(), y.as_counter()
        dot = sum(cx[t] * cy[t] for t in xs & ys)
        nx = math.sqrt(sum(c * c for c in cx.values()))
        ny = math.sqrt(sum(c * c for c in cy.values()))
        if nx == 0 or ny == 0:
            return 0.0
        return dot / (nx * ny)
    raise ValueError(f"unknown similarity metric {kind!r}")


def significance_levels(
    values: Sequence[float], gamma: float, delta1: float, delta2: float
) -> list:
    """Significance level in (0, 1) for each value.

    The support count c_i is the number of values (the value itself
    included) within absolute distance ``gamma``; the level is
    sigmoid(delta1 * c_i - delta2).  Isolated values are pushed towards the
    low end of the scale.
    """
    if len(values) == 0:
        raise ValueError("values must be non-empty")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    out = []
    for v in values:
        count = sum(1 for w in values if abs(v - w) <= gamma)
        out.append(1.0 / (1.0 + math.exp(-(delta1 * count - delta2))))
    return out


def hamacher_fold(values: Sequence[float], a: float) -> float:
    """Left-fold of the binary Hamacher product over ``values``.

    omega(x, y) = x*y / (a + (1 - a) * (x + y - x*y)).  A singleton list
    returns its element.  The 0/0 case (a == 0 with both operands 0)
    returns 0 by convention.
    """
    if a < 0:
        raise ValueError(f"Hamacher parameter must be >= 0, got {a}")
    if len(values) == 0:
        raise ValueError("values must be non-empty")
    acc = float(values[0])
    for v in values[1:]:
        num = acc * v
        den = a + (1.0 - a) * (acc + v - acc * v)
        acc = 0.0 if den == 0.0 else num / den
    return acc


def quasi_arithmetic_mean(values: Sequence[float], alpha: float) -> float:
    """Power mean ((1/m) * sum(v ** alpha)) ** (1/alpha) of non-negative values."""
    if alpha == 0:
        raise ValueError("alpha must be non-zero")
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("values must be non-empty")
    if np.any(arr < 0):
        raise ValueError("values must be non-negative")
    with np.errstate(divide="ignore"):
        return float(np.mean(np.power(arr, alpha)) ** (1.0 / alpha))


def fuse_similarities(values: Sequence[float], params: ComplexityParams) -> float:
    """Fuse metric values into one score: rank by significance, fold the top-n.

    Ranking is by significance descending, ties by value descending, then by
    metric index; the fold order follows the ranking (relevant when
    hamacher_a != 1).
    """
    sls = significance_levels(values, params.gamma, params.delta1, params.delta2)
    order = sorted(range(len(values)), key=lambda i: (-sls[i], -values[i], i))
    kept = [values[i] for i in order[: min(params.top_n, len(values))]]
    return hamacher_fold(kept, params.hamacher_a)


def per_tuple_similarity(
    query_feature: TokenFeature, corpus_feature: TokenFeature, params: ComplexityParams
) -> float:
    """Fused similarity of a query statement with one corpus entry."""
    values = [similarity_metric(kind, query_feature, corpus_feature) for kind in SIMILARITY_METRICS]
    return fuse_similarities(values, params)


class TrainingQueryCorpus:
    """Labelled statements used to score unseen queries.

    Every complexity class must be represented by at least one entry.
    Immutable after construction; safe to share between classifier instances.
    """

    def __init__(self, entries: Sequence, classes: Sequence[ComplexityClass] = DEFAULT_CLASSES):
        self.classes = tuple(classes)
        self.entries = tuple((str(s), int(c)) for s, c in entries)
        if not self.entries:
            raise DataError("corpus is empty")
        known = {c.id for c in self.classes}
        present = {c for _, c in self.entries}
        unknown = present - known
        if unknown:
            raise DataError(f"corpus references unknown class ids {sorted(unknown)}")
        missing = known - present
        if missing:
            raise DataError(f"no corpus entries for class ids {sorted(missing)}")

    def __len__(self) -> int:
        return len(self.entries)


def load_corpus(path, classes: Sequence[ComplexityClass] = DEFAULT_CLASSES) -> TrainingQueryCorpus:
    """Read a tab-separated ``statement<TAB>class_label`` corpus file."""
    by_label = {c.label: c.id for c in classes}
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'statement<TAB>label'")
            statement, label = parts
            if label not in by_label:
                raise DataError(f"{path}:{lineno}: unknown class label {label!r}")
            entries.append((statement, by_label[label]))
    return TrainingQueryCorpus(entries, classes)


def save_corpus(path, corpus: TrainingQueryCorpus) -> None:
    labels = {c.id: c.label for c in corpus.classes}
    with open(path, "w", encoding="utf-8") as fh:
        for statement, cid in corpus.entries:
            fh.write(f"{statement}\t{labels[cid]}\n")


class ComplexityClassifier:
    """Reusable classifier over a fixed corpus.

    Tokenises the corpus once; per-statement scoring is vectorised so the
    classifier can sit on the allocation hot path.
    """

    def __init__(self, corpus: TrainingQueryCorpus, params: ComplexityParams = ComplexityParams()):
        self.corpus = corpus
        self.params = params
        features = [tokenize_statement(s) for s, _ in corpus.entries]
        vocab = {}
        for f in features:
            for tok in f.tokens:
                vocab.setdefault(tok, len(vocab))
        self._vocab = vocab
        m, v = len(features), len(vocab)
        counts = np.zeros((m, v), dtype=np.float64)
        for i, f in enumerate(features):
            for tok, c in f.counts:
                counts[i, vocab[tok]] = c
        self._counts = counts
        # 0/1 floats, not bools: matmul against bools collapses to logical any
        self._binary = (counts > 0).astype(np.float64)
        self._distinct = self._binary.sum(axis=1)
        self._norms = np.sqrt((counts**2).sum(axis=1))
        self._labels = np.array([c for _, c in corpus.entries], dtype=np.int64)
        self._class_masks = [self._labels == c.id for c in corpus.classes]
        for c, mask in zip(corpus.classes, self._class_masks):
            if not mask.any():
                raise DataError(f"no corpus entries for class {c.label!r}")

    def pairwise_scores(self, feature: TokenFeature, exclude: Optional[int] = None) -> np.ndarray:
        """Fused similarity of ``feature`` with every corpus entry."""
        vocab = self._vocab
        qv = np.zeros(len(vocab), dtype=np.float64)
        oov_distinct = 0
        oov_sumsq = 0.0
        for tok, c in feature.counts:
            j = vocab.get(tok)
            if j is None:
                oov_distinct += 1
                oov_sumsq += c * c
            else:
                qv[j] = c
        qbin = (qv > 0).astype(np.float64)
        q_distinct = int(qbin.sum()) + oov_distinct
        q_norm = math.sqrt(float((qv**2).sum()) + oov_sumsq)

        inter = self._binary @ qbin
        union = self._distinct + q_distinct - inter
        jaccard = np.divide(inter, union, out=np.ones_like(inter), where=union > 0)
        dot = self._counts @ qv
        denom = self._norms * q_norm
        cosine = np.divide(dot, denom, out=np.zeros_like(dot), where=denom > 0)
        mism = np.divide(union - inter, union, out=np.zeros_like(inter), where=union > 0)
        hamming = 1.0 / (1.0 + mism)

        values = np.stack([hamming, jaccard, cosine], axis=1)
        p = self.params
        # support count per metric value: how many of the row's values sit
        # within gamma of it (itself included)
        diffs = np.abs(values[:, :, None] - values[:, None, :])
        support = (diffs <= p.gamma).sum(axis=2).astype(np.float64)
        sls = 1.0 / (1.0 + np.exp(-(p.delta1 * support - p.delta2)))
        cols = np.broadcast_to(np.arange(values.shape[1]), values.shape)
        order = np.lexsort((cols, -values, -sls), axis=1)
        n_keep = min(p.top_n, values.shape[1])
        top = np.take_along_axis(values, order[:, :n_keep], axis=1)

        acc = top[:, 0].copy()
        a = p.hamacher_a
        for j in range(1, n_keep):
            v = top[:, j]
            num = acc * v
            den = a + (1.0 - a) * (acc + v - acc * v)
            acc = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
        if exclude is not None:
            acc[exclude] = np.nan
        return acc

    def memberships_from_scores(self, scores: np.ndarray) -> ComplexityVector:
        alpha = self.params.alpha
        out = []
        with np.errstate(divide="ignore"):
            for mask in self._class_masks:
                vals = scores[mask]
                vals = vals[~np.isnan(vals)]
                if vals.size == 0:
                    raise DataError("a class has no corpus entries after exclusion")
                out.append(min(1.0, float(np.mean(np.power(vals, alpha)) ** (1.0 / alpha))))
        return ComplexityVector(memberships=tuple(out))

    def classify_statement(self, statement: str):
        """Return (ComplexityVector, resolved class or None)."""
        feature = tokenize_statement(statement)
        scores = self.pairwise_scores(feature)
        vector = self.memberships_from_scores(scores)
        return vector, self.resolve(vector)

    def resolve(self, vector: ComplexityVector) -> Optional[ComplexityClass]:
        best = vector.argmax()  # ties by lowest class index
        if vector.memberships[best] >= self.params.threshold:
            return self.corpus.classes[best]
        return None


def classify_complexity(
    query, corpus: TrainingQueryCorpus, params: ComplexityParams = ComplexityParams()
):
    """Score a query (anything with a ``statement`` attribute, or a raw string)
    against ``corpus``; return (ComplexityVector, resolved class or None)."""
    statement = getattr(query, "statement", query)
    return ComplexityClassifier(corpus, params).classify_statement(statement)


def leave_one_out_accuracy(
    corpus: TrainingQueryCorpus, params: ComplexityParams = ComplexityParams()
) -> float:
    """Fraction of corpus entries whose class is recovered when held out.

    An unresolved entry (best membership below the threshold) counts as
    incorrect.
    """
    clf = ComplexityClassifier(corpus, params)
    correct = 0
    for i, (statement, true_class) in enumerate(corpus.entries):
        scores = clf.pairwise_scores(tokenize_statement(statement), exclude=i)
        vector = clf.memberships_from_scores(scores)
        resolved = clf.resolve(vector)
        if resolved is not None and resolved.id == true_class:
            correct += 1
    return correct / len(corpus)

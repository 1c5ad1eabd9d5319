"""Similarity metrics mapping a (candidate, reference) text pair into [0, 1].

Four selected metrics drive the composite score: character edit similarity,
BLEU, TF-IDF cosine, and embedding cosine (the last one lives in
:mod:`ethicseval.embeddings`). The remaining functions here are the candidate
subset evaluated by the metric-selection study.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from difflib import SequenceMatcher
from enum import Enum

from .textprep import TokenStream, ngrams, tokenize

# Precision floor applied when an n-gram level has zero matches; unsmoothed
# BLEU on short sections would otherwise collapse to 0.
BLEU_EPSILON = 1e-9
BLEU_MAX_N = 4


class UnknownMetric(KeyError):
    pass


class EmptyCollection(ValueError):
    pass


class MetricCategory(Enum):
    LEXICAL = "lexical"
    NGRAM = "ngram"
    SETBASED = "setbased"
    COSINE = "cosine"
    SEMANTIC = "semantic"

    @property
    def excluded_from_weighting(self) -> bool:
        # Set-based metrics performed poorly across the board and never enter
        # the weighted composite.
        return self is MetricCategory.SETBASED


class MetricId(Enum):
    # Selected metrics, one per weighted category.
    DL_LEXICAL = "dl_lexical"
    BLEU_NGRAM = "bleu_ngram"
    TFIDF_COSINE = "tfidf_cosine"
    EMBED_SEMANTIC = "embed_semantic"
    # Candidate subset used by the selection study.
    EXACT_MATCH = "exact_match"
    GESTALT = "gestalt"
    ROUGE_N = "rouge_n"
    JACCARD = "jaccard"
    OVERLAP_COEFF = "overlap_coeff"
    WORDFREQ_COSINE = "wordfreq_cosine"


CATEGORY_OF: dict[MetricId, MetricCategory] = {
    MetricId.DL_LEXICAL: MetricCategory.LEXICAL,
    MetricId.EXACT_MATCH: MetricCategory.LEXICAL,
    MetricId.GESTALT: MetricCategory.LEXICAL,
    MetricId.BLEU_NGRAM: MetricCategory.NGRAM,
    MetricId.ROUGE_N: MetricCategory.NGRAM,
    MetricId.JACCARD: MetricCategory.SETBASED,
    MetricId.OVERLAP_COEFF: MetricCategory.SETBASED,
    MetricId.TFIDF_COSINE: MetricCategory.COSINE,
    MetricId.WORDFREQ_COSINE: MetricCategory.COSINE,
    MetricId.EMBED_SEMANTIC: MetricCategory.SEMANTIC,
}

SELECTED_METRICS: tuple[MetricId, ...] = (
    MetricId.DL_LEXICAL,
    MetricId.BLEU_NGRAM,
    MetricId.TFIDF_COSINE,
    MetricId.EMBED_SEMANTIC,
)

CANDIDATE_METRICS: tuple[MetricId, ...] = (
    MetricId.EXACT_MATCH,
    MetricId.GESTALT,
    MetricId.ROUGE_N,
    MetricId.JACCARD,
    MetricId.OVERLAP_COEFF,
    MetricId.WORDFREQ_COSINE,
)


@dataclass(frozen=True)
class MetricScore:
    metric: MetricId
    value: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.metric.value} score {self.value} outside [0, 1]")


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def dl_distance(a: str, b: str) -> int:
    """Edit distance with adjacent transpositions (optimal string alignment).

    Insertions, deletions, substitutions, and swaps of adjacent characters each
    cost 1; no substring is edited twice, so e.g. ("CA", "ABC") costs 3 rather
    than the 2 an unrestricted transposition would allow.
    """
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev2: list[int] = []
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        row = [i] + [0] * lb
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            best = min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                best = min(best, prev2[j - 2] + 1)
            row[j] = best
        prev2, prev = prev, row
    return prev[lb]


def dl_similarity(a: str, b: str) -> float:
    """Edit distance normalized into [0, 1]; identical strings score 1."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return _clamp01(1.0 - dl_distance(a, b) / longest)


def bleu(candidate: TokenStream, reference: TokenStream, max_n: int = BLEU_MAX_N) -> float:
    """Single-reference BLEU: geometric mean of modified n-gram precisions
    times the brevity penalty ``min(1, e^(1 - r/c))``.

    An n-gram level with zero matches (including levels the candidate is too
    short to populate) contributes the :data:`BLEU_EPSILON` floor instead of
    zeroing the whole score. An empty candidate scores 0.
    """
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    c, r = len(candidate), len(reference)
    if c == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = ngrams(candidate, n).counts
        ref_counts = ngrams(reference, n).counts
        total = sum(cand_counts.values())
        clipped = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        precision = clipped / total if total and clipped else BLEU_EPSILON
        log_sum += math.log(precision)
    geo_mean = math.exp(log_sum / max_n)
    bp = min(1.0, math.exp(1.0 - r / c))
    return _clamp01(geo_mean * bp)


class IdfTable:
    """Smoothed inverse document frequencies over one run's section texts.

    ``idf(t) = ln((1 + N) / (1 + df(t))) + 1``; unseen terms get the df = 0
    value. Built once per evaluation run and treated as immutable.
    """

    def __init__(self, values: dict[str, float], default: float, n_docs: int):
        self._values = values
        self.default = default
        self.n_docs = n_docs

    def __getitem__(self, term: str) -> float:
        return self._values.get(term, self.default)

    def __contains__(self, term: str) -> bool:
        return term in self._values

    def __len__(self) -> int:
        return len(self._values)


def build_idf(documents: list[TokenStream]) -> IdfTable:
    """IDF table over a document collection; raises on an empty collection."""
    if not documents:
        raise EmptyCollection("cannot build an IDF table from zero documents")
    n = len(documents)
    df: Counter = Counter()
    for doc in documents:
        df.update(set(doc))
    values = {term: math.log((1 + n) / (1 + count)) + 1.0 for term, count in df.items()}
    return IdfTable(values, default=math.log(1 + n) + 1.0, n_docs=n)


def _cosine(weights_a: dict, weights_b: dict) -> float:
    norm_a = math.sqrt(sum(w * w for w in weights_a.values()))
    norm_b = math.sqrt(sum(w * w for w in weights_b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    if weights_a == weights_b:
        # identical vectors score exactly 1; the quotient below can round down
        return 1.0
    dot = sum(w * weights_b[t] for t, w in weights_a.items() if t in weights_b)
    return _clamp01(dot / (norm_a * norm_b))


def tfidf_cosine(candidate: TokenStream, reference: TokenStream, idf_table: IdfTable) -> float:
    """Cosine between TF-IDF vectors; either side empty of terms scores 0."""
    weights_a = {t: count * idf_table[t] for t, count in Counter(candidate).items()}
    weights_b = {t: count * idf_table[t] for t, count in Counter(reference).items()}
    return _cosine(weights_a, weights_b)


def exact_match(candidate: str, reference: str) -> float:
    return 1.0 if candidate == reference else 0.0


def gestalt(candidate: str, reference: str) -> float:
    """Ratcliff/Obershelp matching-character ratio on raw strings.

    The greedy block matching underneath is order-sensitive, so the pair is
    evaluated in a canonical order to keep the metric symmetric.
    """
    if not candidate and not reference:
        return 1.0
    first, second = sorted((candidate, reference))
    return _clamp01(SequenceMatcher(None, first, second, autojunk=False).ratio())


def rouge_n(candidate: TokenStream, reference: TokenStream, n: int = 1) -> float:
    """N-gram recall: matched reference n-grams over total reference n-grams."""
    ref_counts = ngrams(reference, n).counts
    total = sum(ref_counts.values())
    if total == 0:
        return 0.0
    cand_counts = ngrams(candidate, n).counts
    matched = sum(min(count, cand_counts[gram]) for gram, count in ref_counts.items())
    return _clamp01(matched / total)


def jaccard(candidate: TokenStream, reference: TokenStream) -> float:
    sa, sb = set(candidate), set(reference)
    if not sa and not sb:
        return 1.0
    union = sa | sb
    return _clamp01(len(sa & sb) / len(union))


def overlap_coeff(candidate: TokenStream, reference: TokenStream) -> float:
    sa, sb = set(candidate), set(reference)
    if not sa and not sb:
        return 1.0
    smaller = min(len(sa), len(sb))
    if smaller == 0:
        return 0.0
    return _clamp01(len(sa & sb) / smaller)


def wordfreq_cosine(candidate: TokenStream, reference: TokenStream) -> float:
    """Cosine on raw term-frequency vectors."""
    return _cosine(dict(Counter(candidate)), dict(Counter(reference)))


def candidate_metric(metric: MetricId, candidate: str, reference: str) -> MetricScore:
    """Evaluate one candidate-subset metric on raw texts.

    Token-level metrics tokenize with the shared tokenizer; character-level
    ones see the raw strings.
    """
    if metric is MetricId.EXACT_MATCH:
        value = exact_match(candidate, reference)
    elif metric is MetricId.GESTALT:
        value = gestalt(candidate, reference)
    elif metric is MetricId.ROUGE_N:
        value = rouge_n(tokenize(candidate), tokenize(reference))
    elif metric is MetricId.JACCARD:
        value = jaccard(tokenize(candidate), tokenize(reference))
    elif metric is MetricId.OVERLAP_COEFF:
        value = overlap_coeff(tokenize(candidate), tokenize(reference))
    elif metric is MetricId.WORDFREQ_COSINE:
        value = wordfreq_cosine(tokenize(candidate), tokenize(reference))
    else:
        raise UnknownMetric(f"{metric} is not a candidate-subset metric")
    return MetricScore(metric, value)

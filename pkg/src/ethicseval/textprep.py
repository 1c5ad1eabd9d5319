"""Shared tokenization and n-gram extraction for the lexical and vector metrics.

One tokenizer serves every word-level metric so scores stay comparable across
metric families. Character-level metrics operate on raw strings and do not go
through here.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

# Unicode word characters minus underscore; everything else is a separator.
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

TokenStream = list[str]


class InvalidN(ValueError):
    """Raised when an n-gram order below 1 is requested."""


@dataclass
class NgramCounts:
    """Multiset of n-token windows.

    The total count always equals ``max(0, len(tokens) - n + 1)``.
    """

    n: int
    counts: Counter = field(default_factory=Counter)

    def total(self) -> int:
        return sum(self.counts.values())


def tokenize(text: str) -> TokenStream:
    """Lowercased Unicode word tokens; punctuation is dropped."""
    return [m.group(0).lower() for m in _WORD_RE.finditer(text)]


def ngrams(tokens: TokenStream, n: int) -> NgramCounts:
    """Sliding-window n-gram counts over a token stream."""
    if n < 1:
        raise InvalidN(f"n-gram order must be >= 1, got {n}")
    counts: Counter = Counter()
    for i in range(len(tokens) - n + 1):
        counts[tuple(tokens[i : i + n])] += 1
    return NgramCounts(n=n, counts=counts)

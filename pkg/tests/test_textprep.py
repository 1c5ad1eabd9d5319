from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ethicseval.textprep import InvalidN, ngrams, tokenize

token_streams = st.lists(
    st.text(alphabet="abcdefg", min_size=1, max_size=4), min_size=0, max_size=30
)


def test_tokenize_basic():
    assert tokenize("The cat sat.") == ["the", "cat", "sat"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_strips_punctuation_and_underscores():
    assert tokenize("don't stop_here; really!") == ["don", "t", "stop", "here", "really"]


def test_tokenize_unicode():
    assert tokenize("Éthique  naïve") == ["éthique", "naïve"]


@given(st.text(max_size=200))
def test_tokenize_idempotent(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


def test_ngrams_unigrams():
    counts = ngrams(["a", "b", "a"], 1).counts
    assert counts[("a",)] == 2 and counts[("b",)] == 1


def test_ngrams_bigrams():
    counts = ngrams(["a", "b", "a"], 2).counts
    assert counts[("a", "b")] == 1 and counts[("b", "a")] == 1


def test_ngrams_short_stream_empty():
    assert ngrams(["a"], 3).total() == 0


def test_ngrams_invalid_n():
    with pytest.raises(InvalidN):
        ngrams(["a"], 0)


@given(token_streams, st.integers(min_value=1, max_value=6))
def test_ngram_total_matches_direct_enumeration(tokens, n):
    # Oracle: enumerate every window explicitly.
    windows = [tuple(tokens[i : i + n]) for i in range(len(tokens)) if len(tokens[i : i + n]) == n]
    result = ngrams(tokens, n)
    assert result.total() == len(windows) == max(0, len(tokens) - n + 1)
    for window in set(windows):
        assert result.counts[window] == windows.count(window)

from __future__ import annotations

from pathlib import Path

import pytest

from ethicseval.corpus import Corpus, load_corpus
from ethicseval.embeddings import FallbackProvider
from ethicseval.scoring import RunResult, score_run

REPO_ROOT = Path(__file__).resolve().parents[1]
DEMO_CORPUS = REPO_ROOT / "demo" / "corpus"


@pytest.fixture(scope="session")
def demo_corpus() -> Corpus:
    return load_corpus(DEMO_CORPUS)


@pytest.fixture(scope="session")
def demo_run(demo_corpus: Corpus) -> RunResult:
    return score_run(demo_corpus, provider=FallbackProvider())


@pytest.fixture
def demo_corpus_dir() -> Path:
    return DEMO_CORPUS

"""Evaluation engine for structured free-text answers to ethical dilemmas.

Answers are decomposed into five fixed sections, compared section by section
against expert reference summaries with four complementary similarity metrics,
and aggregated into a single weighted score. The package also houses the
machinery that selected those metrics (inversion counting against hand-made
rankings) and derived their weights (inverted softmax and the analytic
hierarchy process).
"""

from .corpus import (
    Corpus,
    DilemmaCase,
    ReferenceSet,
    SectionKind,
    StructuredResponse,
    load_corpus,
    parse_sectioned_text,
    render_sectioned_text,
)
from .metrics import (
    CATEGORY_OF,
    SELECTED_METRICS,
    MetricCategory,
    MetricId,
    bleu,
    build_idf,
    dl_distance,
    dl_similarity,
    tfidf_cosine,
)
from .embeddings import (
    EmbeddingProvider,
    FallbackProvider,
    RemoteProvider,
    embed_semantic_similarity,
    fallback_embed,
)
from .ranking import Ranking, RankingStudy, inversion_loss, run_selection_study, scores_to_ranking
from .scoring import ScoreReport, ScoringConfig, score_response, score_run
from .weighting import (
    DEFAULT_CATEGORY_WEIGHTS,
    CategoryWeights,
    ahp_weights,
    combine_weights,
    inverted_softmax,
)

__version__ = "0.1.0"

__all__ = [
    "CATEGORY_OF",
    "DEFAULT_CATEGORY_WEIGHTS",
    "SELECTED_METRICS",
    "CategoryWeights",
    "Corpus",
    "DilemmaCase",
    "EmbeddingProvider",
    "FallbackProvider",
    "MetricCategory",
    "MetricId",
    "Ranking",
    "RankingStudy",
    "ReferenceSet",
    "RemoteProvider",
    "ScoreReport",
    "ScoringConfig",
    "SectionKind",
    "StructuredResponse",
    "ahp_weights",
    "bleu",
    "build_idf",
    "combine_weights",
    "dl_distance",
    "dl_similarity",
    "embed_semantic_similarity",
    "fallback_embed",
    "inversion_loss",
    "inverted_softmax",
    "load_corpus",
    "parse_sectioned_text",
    "render_sectioned_text",
    "run_selection_study",
    "score_response",
    "score_run",
    "scores_to_ranking",
    "tfidf_cosine",
]

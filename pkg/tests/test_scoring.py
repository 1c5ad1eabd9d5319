from __future__ import annotations

import json
import random

import pytest

from ethicseval.corpus import (
    SECTION_ORDER,
    Corpus,
    DilemmaCase,
    ReferenceSet,
    SectionKind,
    Source,
    StructuredResponse,
)
from ethicseval.embeddings import FallbackProvider
from ethicseval.metrics import CATEGORY_OF, MetricCategory, MetricId
from ethicseval.scoring import (
    CaseMismatch,
    EmptySectionPolicy,
    NoReferences,
    ScoringConfig,
    ScoringError,
    SimilarityEngine,
    config_from_dict,
    engine_for_texts,
    fit_section_weights,
    load_config,
    manifest_hash,
    report_from_dict,
    report_json,
    report_to_dict,
    score_response,
    score_run,
    uniform_section_weights,
)
from ethicseval.weighting import CategoryWeights, WeightProvenance

rng = random.Random(99)


def sections(tag: str) -> dict[SectionKind, str]:
    return {kind: f"{tag} text for {kind.name.lower()} with enough tokens" for kind in SECTION_ORDER}


def make_refs(case_id: str, texts: list[dict[SectionKind, str]]) -> ReferenceSet:
    return ReferenceSet(
        case_id,
        [StructuredResponse.expert(case_id, f"prep_{i}", t) for i, t in enumerate(texts)],
    )


class _FixedEngine(SimilarityEngine):
    """Engine double returning scripted values."""

    def __init__(self, fn):
        self._fn = fn

    def score(self, metric, candidate, reference):
        return self._fn(metric, candidate, reference)


def one_metric_config(**kwargs) -> ScoringConfig:
    return ScoringConfig(
        metric_weights=CategoryWeights(
            {MetricCategory.SEMANTIC: 1.0}, WeightProvenance.SOFTMAX
        ),
        selected_metrics=(MetricId.EMBED_SEMANTIC,),
        **kwargs,
    )


# ---------------------------------------------------------------- score_response


def test_identical_candidate_scores_one():
    shared = sections("shared")
    refs = make_refs("c1", [shared, shared, shared, shared])
    candidate = StructuredResponse.llm("c1", "model", dict(shared))
    result = score_response(candidate, refs, ScoringConfig())
    for section_score in result.sections:
        for value in section_score.per_metric.values():
            assert value == pytest.approx(1.0, abs=1e-9)
    assert result.final == pytest.approx(1.0, abs=1e-9)


def test_human_candidate_single_section():
    refs = make_refs("c1", [sections("ref")])
    human = StructuredResponse.human("c1", "p1", "the key factors are fairness and process")
    result = score_response(human, refs, ScoringConfig())
    assert len(result.sections) == 1
    assert result.sections[0].section is SectionKind.KEY_FACTORS
    assert result.final == pytest.approx(result.sections[0].weighted)


def test_reference_averaging_two_sets():
    ref_a = sections("alpha")
    ref_b = sections("beta")
    refs = make_refs("c1", [ref_a, ref_b])
    candidate = StructuredResponse.llm("c1", "m", sections("candidate"))

    def fn(metric, cand, ref):
        return 0.2 if ref.startswith("alpha") else 0.6

    result = score_response(candidate, refs, one_metric_config(), _FixedEngine(fn))
    for section_score in result.sections:
        assert section_score.weighted == pytest.approx(0.4)
    assert result.final == pytest.approx(0.4)


def test_case_mismatch():
    refs = make_refs("c1", [sections("r")])
    candidate = StructuredResponse.llm("c2", "m", sections("c"))
    with pytest.raises(CaseMismatch):
        score_response(candidate, refs, ScoringConfig())


def test_no_references():
    refs = ReferenceSet("c1", [])
    candidate = StructuredResponse.llm("c1", "m", sections("c"))
    with pytest.raises(NoReferences):
        score_response(candidate, refs, ScoringConfig())


def test_final_is_weighted_section_sum():
    refs = make_refs("c1", [sections("a"), sections("b")])
    candidate = StructuredResponse.llm("c1", "m", sections("c"))
    cfg = ScoringConfig()
    result = score_response(candidate, refs, cfg)
    expected = sum(cfg.section_weight(s.section) * s.weighted for s in result.sections)
    assert result.final == pytest.approx(expected, abs=1e-9)


def test_monotone_in_any_per_metric_value():
    refs = make_refs("c1", [sections("ref")])
    candidate = StructuredResponse.llm("c1", "m", sections("cand"))
    cfg = ScoringConfig()

    def engine_with(value: float):
        def fn(metric, cand, ref):
            if metric is MetricId.BLEU_NGRAM and cand.startswith("cand text for intro"):
                return value
            return 0.5

        return _FixedEngine(fn)

    low = score_response(candidate, refs, cfg, engine_with(0.1)).final
    high = score_response(candidate, refs, cfg, engine_with(0.9)).final
    assert high >= low


def test_reference_order_permutation_invariant():
    texts = [sections("a"), sections("b"), sections("c")]
    candidate = StructuredResponse.llm("c1", "m", sections("cand"))
    cfg = ScoringConfig()
    engine = engine_for_texts(
        [t for s in texts for t in s.values()] + list(candidate.sections.values())
    )
    baseline = score_response(candidate, make_refs("c1", texts), cfg, engine)
    for _ in range(3):
        shuffled = texts[:]
        rng.shuffle(shuffled)
        permuted = score_response(candidate, make_refs("c1", shuffled), cfg, engine)
        assert permuted.final == pytest.approx(baseline.final, abs=1e-12)


def test_one_hot_keyfactors_expert_equals_human():
    factors = "documentation, fairness, and a neutral process are the key factors"
    expert_sections = sections("expert")
    expert_sections[SectionKind.KEY_FACTORS] = factors
    refs = make_refs("c1", [sections("ref"), sections("other ref")])
    expert = StructuredResponse.llm("c1", "model", expert_sections)
    human = StructuredResponse.human("c1", "p1", factors)
    cfg = ScoringConfig(section_weights={SectionKind.KEY_FACTORS: 1.0})
    engine = engine_for_texts(
        [t for r in refs.references for t in r.sections.values()]
        + list(expert.sections.values())
    )
    assert score_response(expert, refs, cfg, engine).final == pytest.approx(
        score_response(human, refs, cfg, engine).final, abs=1e-12
    )


# ---------------------------------------------------------------- empty-section policies


def _candidate_with_empty_historical() -> StructuredResponse:
    body = sections("cand")
    body[SectionKind.HISTORICAL] = ""
    return StructuredResponse.llm("c1", "m", body)


def test_policy_score_as_empty_keeps_section():
    refs = make_refs("c1", [sections("ref")])
    result = score_response(_candidate_with_empty_historical(), refs, ScoringConfig())
    by_section = {s.section: s for s in result.sections}
    assert SectionKind.HISTORICAL in by_section
    assert by_section[SectionKind.HISTORICAL].weighted == pytest.approx(0.0, abs=1e-6)


def test_policy_skip_renormalizes():
    refs = make_refs("c1", [sections("ref")])
    cfg = ScoringConfig(empty_section_policy=EmptySectionPolicy.SKIP_AND_RENORMALIZE)
    result = score_response(_candidate_with_empty_historical(), refs, cfg)
    scored = {s.section for s in result.sections}
    assert SectionKind.HISTORICAL not in scored
    expected = sum(0.2 * s.weighted for s in result.sections) / (0.2 * len(scored))
    assert result.final == pytest.approx(expected, abs=1e-12)


def test_policy_skip_drops_empty_reference_sections():
    ref_full = sections("ref")
    ref_blank = sections("blank")
    ref_blank[SectionKind.HISTORICAL] = ""
    refs = make_refs("c1", [ref_full, ref_blank])
    candidate = StructuredResponse.llm("c1", "m", sections("cand"))
    cfg = one_metric_config(empty_section_policy=EmptySectionPolicy.SKIP_AND_RENORMALIZE)

    seen = []

    def fn(metric, cand, ref):
        seen.append(ref)
        return 0.5

    score_response(candidate, refs, cfg, _FixedEngine(fn))
    assert "" not in seen


# ---------------------------------------------------------------- config


def test_config_section_weights_must_sum():
    with pytest.raises(ScoringError):
        ScoringConfig(section_weights={SectionKind.KEY_FACTORS: 0.5})


def test_config_rejects_negative_section_weight():
    weights = uniform_section_weights()
    weights[SectionKind.INTRODUCTION] = -0.2
    weights[SectionKind.KEY_FACTORS] = 0.6
    with pytest.raises(ScoringError):
        ScoringConfig(section_weights=weights)


def test_config_requires_weight_for_selected_metric_category():
    with pytest.raises(ScoringError):
        ScoringConfig(
            metric_weights=CategoryWeights(
                {MetricCategory.SEMANTIC: 1.0}, WeightProvenance.SOFTMAX
            )
        )


def test_config_round_trip_dict():
    cfg = ScoringConfig(empty_section_policy=EmptySectionPolicy.SKIP_AND_RENORMALIZE)
    again = config_from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_load_config_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {
                "section_weights": {"key_factors": 1.0},
                "empty_section_policy": "score_as_empty",
            }
        ),
        encoding="utf-8",
    )
    cfg = load_config(path)
    assert cfg.section_weight(SectionKind.KEY_FACTORS) == 1.0
    assert cfg.section_weight(SectionKind.INTRODUCTION) == 0.0


# ---------------------------------------------------------------- score_run


def _tiny_corpus() -> Corpus:
    corpus = Corpus()
    for case_id in ("c1", "c2"):
        corpus.cases[case_id] = DilemmaCase(
            case_id, "t", "a dilemma description", "Authorship", Source.GEORGIA_CTSA
        )
        corpus.references[case_id] = make_refs(
            case_id, [sections(f"{case_id} ref one"), sections(f"{case_id} ref two")]
        )
    corpus.responses = [
        StructuredResponse.llm("c1", "model_a", sections("c1 answer a")),
        StructuredResponse.llm("c2", "model_a", sections("c2 answer a")),
        StructuredResponse.llm("c1", "model_b", sections("c1 answer b")),
        # model_b has no answer for c2
    ]
    corpus.humans = [
        StructuredResponse.human("c1", "p1", "key points about fairness and records"),
        StructuredResponse.human("c2", "p1", "main considerations and honest reporting"),
    ]
    return corpus


def test_score_run_reports_and_missing():
    result = score_run(_tiny_corpus(), provider=FallbackProvider())
    by_model = {r.model: r for r in result.reports}
    assert set(by_model) == {"model_a", "model_b", "p1"}
    assert by_model["model_a"].aggregate.n_cases == 2
    assert by_model["model_b"].aggregate.n_cases == 1
    assert by_model["p1"].cohort == "human"
    assert [(m.model, m.case_id) for m in result.missing] == [("model_b", "c2")]
    assert result.manifest["missing"] == [{"model": "model_b", "case_id": "c2"}]


def test_score_run_aggregate_means():
    result = score_run(_tiny_corpus(), provider=FallbackProvider())
    report = next(r for r in result.reports if r.model == "model_a")
    finals = [score.final for score in report.case_scores.values()]
    assert report.aggregate.final_mean == pytest.approx(sum(finals) / len(finals))


def test_score_run_response_order_irrelevant():
    base = _tiny_corpus()
    shuffled = _tiny_corpus()
    shuffled.responses = list(reversed(shuffled.responses))
    shuffled.humans = list(reversed(shuffled.humans))
    a = score_run(base, provider=FallbackProvider())
    b = score_run(shuffled, provider=FallbackProvider())
    assert [report_to_dict(r) for r in a.reports] == [report_to_dict(r) for r in b.reports]


def test_score_run_deterministic():
    a = score_run(_tiny_corpus(), provider=FallbackProvider())
    b = score_run(_tiny_corpus(), provider=FallbackProvider())
    assert [report_json(r) for r in a.reports] == [report_json(r) for r in b.reports]
    assert manifest_hash(a.manifest) == manifest_hash(b.manifest)


def test_score_run_empty_corpus_raises():
    with pytest.raises(NoReferences):
        score_run(Corpus(), provider=FallbackProvider())


def test_manifest_carries_config_and_hash():
    result = score_run(_tiny_corpus(), provider=FallbackProvider())
    manifest = result.manifest
    assert manifest["provider_id"].startswith("hash-trigram")
    assert manifest["config"]["selected_metrics"] == [
        "dl_lexical",
        "bleu_ngram",
        "tfidf_cosine",
        "embed_semantic",
    ]
    assert "conventions" in manifest
    for report in result.reports:
        assert report.manifest["corpus_hash"] == manifest["corpus_hash"]


def test_report_round_trip():
    result = score_run(_tiny_corpus(), provider=FallbackProvider())
    for report in result.reports:
        again = report_from_dict(json.loads(report_json(report)))
        assert report_to_dict(again) == report_to_dict(report)


# ---------------------------------------------------------------- calibration utility


def test_fit_section_weights_recovers_generator():
    true = [0.1, 0.4, 0.1, 0.2, 0.2]
    section_means = {}
    finals = {}
    for model in ("m1", "m2", "m3", "m4", "m5", "m6"):
        means = [rng.uniform(0.2, 0.8) for _ in SECTION_ORDER]
        section_means[model] = dict(zip(SECTION_ORDER, means))
        finals[model] = sum(w * x for w, x in zip(true, means))
    fitted = fit_section_weights(section_means, finals)
    assert sum(fitted.values()) == pytest.approx(1.0, abs=1e-9)
    for kind, want in zip(SECTION_ORDER, true):
        assert fitted[kind] == pytest.approx(want, abs=1e-3)

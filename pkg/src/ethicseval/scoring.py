"""The composite scoring pipeline.

Each candidate answer is compared section by section against every expert
reference of its case; per-metric scores are averaged across the reference
set, combined with the category weights into a section score, and the section
scores are combined with the section weights into the final score. Human
answers carry only the key-factors section, and their final score is exactly
that section's weighted score.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from statistics import fmean

import numpy as np

from .corpus import (
    SECTION_ORDER,
    AuthorKind,
    Corpus,
    ReferenceSet,
    SectionKind,
    StructuredResponse,
)
from .embeddings import (
    CachedProvider,
    EmbeddingProvider,
    FallbackProvider,
    embed_semantic_similarity,
)
from .metrics import (
    CATEGORY_OF,
    SELECTED_METRICS,
    IdfTable,
    MetricCategory,
    MetricId,
    bleu,
    build_idf,
    candidate_metric,
    dl_similarity,
    tfidf_cosine,
)
from .textprep import tokenize
from .weighting import DEFAULT_CATEGORY_WEIGHTS, CategoryWeights, WeightProvenance

# Run-level computation conventions, embedded in every manifest so that any
# emitted number can be traced back to the exact rules that produced it.
CONVENTIONS: dict[str, str | int] = {
    "tokenizer": "unicode-words-lowercased-punctuation-dropped",
    "edit_distance": "optimal-string-alignment",
    "bleu_max_n": 4,
    "bleu_smoothing": "epsilon-floor-1e-09",
    "idf": "smoothed ln((1+N)/(1+df))+1 over all run section texts (candidates + references)",
    "negative_cosine": "clamped-to-zero",
    "reference_aggregation": "arithmetic-mean",
}


class ScoringError(Exception):
    pass


class CaseMismatch(ScoringError):
    pass


class NoReferences(ScoringError):
    pass


class EmptySectionPolicy(Enum):
    SCORE_AS_EMPTY = "score_as_empty"
    SKIP_AND_RENORMALIZE = "skip_and_renormalize"


def uniform_section_weights() -> dict[SectionKind, float]:
    return {kind: 1.0 / len(SECTION_ORDER) for kind in SECTION_ORDER}


@dataclass(frozen=True)
class ScoringConfig:
    """Weights, policies, and metric selection for one evaluation run.

    The default section weights are uniform; they are a neutral choice, not a
    calibrated one, and the manifest records whatever a run actually used.
    """

    metric_weights: CategoryWeights = DEFAULT_CATEGORY_WEIGHTS
    section_weights: dict[SectionKind, float] = field(default_factory=uniform_section_weights)
    empty_section_policy: EmptySectionPolicy = EmptySectionPolicy.SCORE_AS_EMPTY
    provider_id: str = ""
    selected_metrics: tuple[MetricId, ...] = SELECTED_METRICS

    def __post_init__(self) -> None:
        total = sum(self.section_weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ScoringError(f"section weights sum to {total!r}, expected 1")
        for kind, value in self.section_weights.items():
            if value < 0.0:
                raise ScoringError(f"section weight for {kind.name} is negative")
        for metric in self.selected_metrics:
            if CATEGORY_OF[metric] not in self.metric_weights.categories():
                raise ScoringError(
                    f"no category weight for {metric.value} ({CATEGORY_OF[metric].value})"
                )

    def section_weight(self, kind: SectionKind) -> float:
        return self.section_weights.get(kind, 0.0)

    def to_dict(self) -> dict:
        return {
            "metric_weights": {
                c.value: w for c, w in sorted(self.metric_weights.weights.items(), key=lambda kv: kv[0].value)
            },
            "metric_weights_provenance": self.metric_weights.provenance.value,
            "section_weights": {
                k.name.lower(): self.section_weights.get(k, 0.0) for k in SECTION_ORDER
            },
            "empty_section_policy": self.empty_section_policy.value,
            "provider_id": self.provider_id,
            "selected_metrics": [m.value for m in self.selected_metrics],
        }


def config_from_dict(data: dict) -> ScoringConfig:
    kwargs: dict = {}
    if "metric_weights" in data:
        provenance = WeightProvenance(data.get("metric_weights_provenance", "combined"))
        kwargs["metric_weights"] = CategoryWeights(
            {MetricCategory(k): float(v) for k, v in data["metric_weights"].items()},
            provenance,
        )
    if "section_weights" in data:
        by_name = {k.name.lower(): k for k in SECTION_ORDER}
        kwargs["section_weights"] = {
            by_name[k.lower()]: float(v) for k, v in data["section_weights"].items()
        }
    if "empty_section_policy" in data:
        kwargs["empty_section_policy"] = EmptySectionPolicy(data["empty_section_policy"])
    if "provider_id" in data:
        kwargs["provider_id"] = data["provider_id"]
    if "selected_metrics" in data:
        kwargs["selected_metrics"] = tuple(MetricId(m) for m in data["selected_metrics"])
    return ScoringConfig(**kwargs)


def load_config(path: str | Path) -> ScoringConfig:
    """Read a config file; JSON always, TOML when the interpreter ships tomllib."""
    raw = Path(path).read_bytes()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError as exc:
            raise ScoringError("TOML configs need Python >= 3.11; use JSON") from exc
        return config_from_dict(tomllib.loads(raw.decode("utf-8")))
    return config_from_dict(json.loads(raw.decode("utf-8")))


class SimilarityEngine:
    """Applies any metric to a raw text pair, holding run-wide state.

    The IDF table is built once per run; embeddings are cached per text. All
    methods are read-only after construction, so one engine may be shared by
    concurrent scoring tasks.
    """

    def __init__(self, idf: IdfTable, provider: EmbeddingProvider):
        self.idf = idf
        self.provider = provider if isinstance(provider, CachedProvider) else CachedProvider(provider)

    def score(self, metric: MetricId, candidate: str, reference: str) -> float:
        if metric is MetricId.DL_LEXICAL:
            return dl_similarity(candidate, reference)
        if metric is MetricId.BLEU_NGRAM:
            return bleu(tokenize(candidate), tokenize(reference))
        if metric is MetricId.TFIDF_COSINE:
            return tfidf_cosine(tokenize(candidate), tokenize(reference), self.idf)
        if metric is MetricId.EMBED_SEMANTIC:
            return embed_semantic_similarity(candidate, reference, self.provider)
        return candidate_metric(metric, candidate, reference).value


def engine_for_texts(
    texts: list[str], provider: EmbeddingProvider | None = None
) -> SimilarityEngine:
    """Engine whose IDF collection is exactly the given section texts."""
    provider = provider or FallbackProvider()
    return SimilarityEngine(build_idf([tokenize(t) for t in texts]), provider)


@dataclass(frozen=True)
class SectionScore:
    section: SectionKind
    per_metric: dict[MetricId, float]
    weighted: float


@dataclass(frozen=True)
class ResponseScore:
    case_id: str
    responder: str
    sections: tuple[SectionScore, ...]
    final: float


def _sections_to_score(candidate: StructuredResponse) -> tuple[SectionKind, ...]:
    if candidate.author.kind is AuthorKind.HUMAN:
        return (SectionKind.KEY_FACTORS,)
    return SECTION_ORDER


def score_response(
    candidate: StructuredResponse,
    refs: ReferenceSet,
    cfg: ScoringConfig,
    engine: SimilarityEngine | None = None,
) -> ResponseScore:
    """Score one answer against one reference set.

    Without an explicit engine, a local one is built over just this pair's
    section texts with the fallback embedder; run-level scoring passes the
    shared engine instead.
    """
    if candidate.case_id != refs.case_id:
        raise CaseMismatch(f"candidate {candidate.case_id!r} vs references {refs.case_id!r}")
    if not refs.references:
        raise NoReferences(f"no references for case {refs.case_id!r}")
    if engine is None:
        texts = [t for r in refs.references for t in r.sections.values()]
        texts += list(candidate.sections.values())
        engine = engine_for_texts(texts)

    skip_empty = cfg.empty_section_policy is EmptySectionPolicy.SKIP_AND_RENORMALIZE
    section_scores: list[SectionScore] = []
    for section in _sections_to_score(candidate):
        cand_text = candidate.sections.get(section, "")
        ref_texts = [r.sections.get(section, "") for r in refs.references]
        if skip_empty:
            ref_texts = [t for t in ref_texts if t.strip()]
            if not cand_text.strip() or not ref_texts:
                continue
        per_metric = {
            metric: fmean(engine.score(metric, cand_text, ref_text) for ref_text in ref_texts)
            for metric in cfg.selected_metrics
        }
        weighted = sum(
            cfg.metric_weights[CATEGORY_OF[metric]] * value
            for metric, value in per_metric.items()
        )
        section_scores.append(SectionScore(section, per_metric, weighted))

    if candidate.author.kind is AuthorKind.HUMAN:
        final = section_scores[0].weighted if section_scores else 0.0
    elif skip_empty:
        denom = sum(cfg.section_weight(s.section) for s in section_scores)
        final = (
            sum(cfg.section_weight(s.section) * s.weighted for s in section_scores) / denom
            if denom > 0.0
            else 0.0
        )
    else:
        by_section = {s.section: s.weighted for s in section_scores}
        final = sum(cfg.section_weight(k) * by_section.get(k, 0.0) for k in SECTION_ORDER)

    return ResponseScore(
        case_id=candidate.case_id,
        responder=candidate.author.name,
        sections=tuple(section_scores),
        final=final,
    )


@dataclass(frozen=True)
class Aggregate:
    per_section: dict[SectionKind, float]
    per_metric: dict[MetricId, float]
    final_mean: float
    n_cases: int


@dataclass(frozen=True)
class MissingResponse:
    model: str
    case_id: str


@dataclass(frozen=True)
class ScoreReport:
    model: str
    cohort: str  # "llm" or "human"
    case_scores: dict[str, ResponseScore]
    aggregate: Aggregate
    manifest: dict


@dataclass(frozen=True)
class RunResult:
    reports: tuple[ScoreReport, ...]
    manifest: dict
    missing: tuple[MissingResponse, ...]


def _aggregate(scores: list[ResponseScore]) -> Aggregate:
    per_section: dict[SectionKind, list[float]] = {}
    per_metric: dict[MetricId, list[float]] = {}
    for response in scores:
        for section_score in response.sections:
            per_section.setdefault(section_score.section, []).append(section_score.weighted)
            for metric, value in section_score.per_metric.items():
                per_metric.setdefault(metric, []).append(value)
    return Aggregate(
        per_section={k: fmean(v) for k, v in per_section.items()},
        per_metric={k: fmean(v) for k, v in per_metric.items()},
        final_mean=fmean([r.final for r in scores]) if scores else 0.0,
        n_cases=len(scores),
    )


def _run_idf_documents(
    corpus: Corpus, responders: list[StructuredResponse], case_ids: list[str]
) -> list[list[str]]:
    docs = []
    for case_id in case_ids:
        for ref in corpus.references[case_id].references:
            docs.extend(tokenize(text) for text in ref.sections.values())
    for response in responders:
        if response.case_id in case_ids:
            docs.extend(tokenize(text) for text in response.sections.values())
    return docs


def score_run(
    corpus: Corpus,
    cfg: ScoringConfig | None = None,
    models: list[str] | None = None,
    include_humans: bool = True,
    provider: EmbeddingProvider | None = None,
) -> RunResult:
    """Score every responder over every case that has references.

    Responder/case pairs without a response are reported in the manifest, not
    silently skipped. Output is deterministic for a fixed provider and config:
    cases are scored in sorted id order and aggregates are arithmetic means.
    """
    cfg = cfg or ScoringConfig()
    provider = provider or FallbackProvider()
    case_ids = sorted(corpus.references)
    if not case_ids:
        raise NoReferences("corpus contains no reference sets")

    llm_models = models if models is not None else corpus.llm_models()
    human_names = corpus.human_participants() if include_humans else []
    candidates = [r for r in corpus.responses if r.author.name in llm_models]
    candidates += [r for r in corpus.humans if r.author.name in human_names]

    engine = SimilarityEngine(
        build_idf(_run_idf_documents(corpus, candidates, case_ids)), provider
    )
    cfg = ScoringConfig(
        metric_weights=cfg.metric_weights,
        section_weights=cfg.section_weights,
        empty_section_policy=cfg.empty_section_policy,
        provider_id=engine.provider.id,
        selected_metrics=cfg.selected_metrics,
    )

    missing: list[MissingResponse] = []
    reports: list[ScoreReport] = []
    manifest = {
        "config": cfg.to_dict(),
        "provider_id": engine.provider.id,
        "corpus_hash": corpus.fingerprint(),
        "conventions": dict(CONVENTIONS),
        "cases_scored": case_ids,
        "cases_without_references": sorted(set(corpus.cases) - set(case_ids)),
    }

    for cohort, names in (("llm", llm_models), ("human", human_names)):
        for name in sorted(names):
            by_case = {
                r.case_id: r
                for r in (corpus.responses if cohort == "llm" else corpus.humans)
                if r.author.name == name
            }
            scores: dict[str, ResponseScore] = {}
            for case_id in case_ids:
                if case_id not in by_case:
                    missing.append(MissingResponse(name, case_id))
                    continue
                scores[case_id] = score_response(
                    by_case[case_id], corpus.references[case_id], cfg, engine
                )
            report_manifest = dict(manifest)
            report_manifest["missing"] = [
                {"model": m.model, "case_id": m.case_id} for m in missing if m.model == name
            ]
            reports.append(
                ScoreReport(
                    model=name,
                    cohort=cohort,
                    case_scores=scores,
                    aggregate=_aggregate(list(scores.values())),
                    manifest=report_manifest,
                )
            )

    manifest["missing"] = [{"model": m.model, "case_id": m.case_id} for m in missing]
    return RunResult(tuple(reports), manifest, tuple(missing))


def manifest_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def report_to_dict(report: ScoreReport) -> dict:
    return {
        "model": report.model,
        "cohort": report.cohort,
        "manifest": report.manifest,
        "manifest_hash": manifest_hash(report.manifest),
        "cases": {
            case_id: {
                "final": response.final,
                "sections": [
                    {
                        "section": s.section.name.lower(),
                        "per_metric": {m.value: v for m, v in sorted(s.per_metric.items(), key=lambda kv: kv[0].value)},
                        "weighted": s.weighted,
                    }
                    for s in response.sections
                ],
            }
            for case_id, response in sorted(report.case_scores.items())
        },
        "aggregate": {
            "per_section": {
                k.name.lower(): v
                for k, v in sorted(report.aggregate.per_section.items(), key=lambda kv: kv[0].name)
            },
            "per_metric": {
                k.value: v
                for k, v in sorted(report.aggregate.per_metric.items(), key=lambda kv: kv[0].value)
            },
            "final_mean": report.aggregate.final_mean,
            "n_cases": report.aggregate.n_cases,
        },
    }


def report_from_dict(data: dict) -> ScoreReport:
    by_name = {k.name.lower(): k for k in SECTION_ORDER}
    case_scores = {}
    for case_id, case in data["cases"].items():
        sections = tuple(
            SectionScore(
                section=by_name[s["section"]],
                per_metric={MetricId(m): v for m, v in s["per_metric"].items()},
                weighted=s["weighted"],
            )
            for s in case["sections"]
        )
        case_scores[case_id] = ResponseScore(
            case_id=case_id,
            responder=data["model"],
            sections=sections,
            final=case["final"],
        )
    aggregate = Aggregate(
        per_section={by_name[k]: v for k, v in data["aggregate"]["per_section"].items()},
        per_metric={MetricId(k): v for k, v in data["aggregate"]["per_metric"].items()},
        final_mean=data["aggregate"]["final_mean"],
        n_cases=data["aggregate"]["n_cases"],
    )
    return ScoreReport(
        model=data["model"],
        cohort=data["cohort"],
        case_scores=case_scores,
        aggregate=aggregate,
        manifest=data["manifest"],
    )


def report_json(report: ScoreReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def fit_section_weights(
    section_means: dict[str, dict[SectionKind, float]],
    finals: dict[str, float],
) -> dict[SectionKind, float]:
    """Least-squares fit of simplex section weights to observed final scores.

    Diagnostic utility: given per-model section means and final means, find
    non-negative weights summing to 1 that best explain the finals. The result
    characterizes a scoring table; it is not ground truth for any run.
    """
    from scipy.optimize import minimize

    models = sorted(section_means)
    a = np.array([[section_means[m].get(k, 0.0) for k in SECTION_ORDER] for m in models])
    b = np.array([finals[m] for m in models])

    def objective(w: np.ndarray) -> float:
        return float(np.sum((a @ w - b) ** 2))

    n = len(SECTION_ORDER)
    result = minimize(
        objective,
        x0=np.full(n, 1.0 / n),
        bounds=[(0.0, 1.0)] * n,
        constraints=[{"type": "eq", "fun": lambda w: np.sum(w) - 1.0}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 1000},
    )
    weights = np.clip(result.x, 0.0, None)
    weights /= weights.sum()
    return {k: float(w) for k, w in zip(SECTION_ORDER, weights)}

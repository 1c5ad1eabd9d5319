"""Command-line entry points for the evaluation pipeline."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .corpus import Corpus, load_corpus
from .embeddings import provider_from_env
from .harness import (
    HttpChatClient,
    ReplayCache,
    ReplayClient,
    generate_batch,
    preprocess_expert_batch,
    preprocess_human_batch,
)
from .metrics import (
    CANDIDATE_METRICS,
    SELECTED_METRICS,
    MetricCategory,
    build_idf,
)
from .ranking import Ranking, RankingStudy, run_selection_study
from .report import emit_all
from .scoring import (
    ScoringConfig,
    SimilarityEngine,
    load_config,
    manifest_hash,
    report_from_dict,
    report_json,
    score_run,
)
from .textprep import tokenize
from .weighting import (
    DEFAULT_CATEGORY_WEIGHTS,
    CategoryWeights,
    CombineMethod,
    WeightProvenance,
    ahp_weights,
    bundled_judgment_matrix,
    combine_weights,
    inverted_softmax,
    load_judgment_matrix,
)


@click.group()
def main() -> None:
    """Structured-answer evaluation pipeline."""


def _build_client(client_id: str, replay_cache: str, base_url: str, model: str, key_env: str):
    inner = None
    if base_url:
        inner = HttpChatClient(client_id, base_url, model or client_id, key_env)
    return ReplayClient(client_id, ReplayCache(replay_cache), inner)


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
def ingest(corpus_dir: str) -> None:
    """Load and cross-validate a corpus directory."""
    corpus = load_corpus(corpus_dir)
    click.echo(f"cases: {len(corpus.cases)}")
    click.echo(f"reference sets: {len(corpus.references)}")
    click.echo(f"llm responses: {len(corpus.responses)} ({', '.join(corpus.llm_models()) or 'none'})")
    click.echo(f"human responses: {len(corpus.humans)} ({', '.join(corpus.human_participants()) or 'none'})")
    click.echo(f"fingerprint: {corpus.fingerprint()}")


@main.group()
def preprocess() -> None:
    """Expert and human preprocessing flows."""


@preprocess.command("expert")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--opinions", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of <case_id>.txt raw expert opinions.")
@click.option("--client-id", "client_ids", multiple=True, required=True)
@click.option("--replay-cache", required=True, type=click.Path(file_okay=False))
@click.option("--base-url", default="", help="Live provider URL; omit for replay-only.")
@click.option("--model", default="")
@click.option("--key-env", default="")
def preprocess_expert_cmd(corpus_dir, opinions, client_ids, replay_cache, base_url, model, key_env):
    """Summarize raw opinions into reference sets, one per client id."""
    corpus = load_corpus(corpus_dir)
    opinion_texts = {
        p.stem: p.read_text(encoding="utf-8") for p in sorted(Path(opinions).glob("*.txt"))
    }
    clients = [_build_client(cid, replay_cache, base_url, model, key_env) for cid in client_ids]
    written, failed = preprocess_expert_batch(
        list(corpus.cases.values()), opinion_texts, clients, corpus_dir
    )
    click.echo(f"written: {len(written)}, failed: {len(failed)}")
    if failed:
        raise SystemExit(1)


@preprocess.command("human")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--answers", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of <participant>/<case_id>.txt raw answers.")
@click.option("--client-id", required=True)
@click.option("--replay-cache", required=True, type=click.Path(file_okay=False))
@click.option("--base-url", default="")
@click.option("--model", default="")
@click.option("--key-env", default="")
def preprocess_human_cmd(corpus_dir, answers, client_id, replay_cache, base_url, model, key_env):
    """Extend raw human answers into key-factors-only records."""
    corpus = load_corpus(corpus_dir)
    raw: dict[str, dict[str, str]] = {}
    for person_dir in sorted(p for p in Path(answers).iterdir() if p.is_dir()):
        raw[person_dir.name] = {
            p.stem: p.read_text(encoding="utf-8") for p in sorted(person_dir.glob("*.txt"))
        }
    client = _build_client(client_id, replay_cache, base_url, model, key_env)
    written, failed = preprocess_human_batch(list(corpus.cases.values()), raw, client, corpus_dir)
    click.echo(f"written: {len(written)}, failed: {len(failed)}")
    if failed:
        raise SystemExit(1)


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--client-id", required=True)
@click.option("--replay-cache", required=True, type=click.Path(file_okay=False))
@click.option("--base-url", default="", help="Live provider URL; omit for replay-only.")
@click.option("--model", default="")
@click.option("--key-env", default="")
@click.option("--workers", default=1, type=int)
def generate(corpus_dir, client_id, replay_cache, base_url, model, key_env, workers):
    """Generate model answers for every case into the corpus layout."""
    corpus = load_corpus(corpus_dir)
    client = _build_client(client_id, replay_cache, base_url, model, key_env)
    written, failed = generate_batch(
        list(corpus.cases.values()), client, corpus_dir, max_workers=workers
    )
    click.echo(f"written: {len(written)}, failed: {len(failed)}")
    if failed:
        click.echo("failed cases archived under failures/", err=True)
        raise SystemExit(1)


@main.command("select-metrics")
@click.option("--ground-truth", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--responses", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of <item_id>.txt candidate texts.")
@click.option("--references", required=True, type=click.Path(exists=True),
              help="Reference text file, or a directory of them.")
@click.option("--out", "out_path", default="", type=click.Path(dir_okay=False))
def select_metrics(ground_truth, responses, references, out_path):
    """Rank candidate texts with every metric and count inversions."""
    truth = Ranking.load(ground_truth)
    items = {p.stem: p.read_text(encoding="utf-8") for p in sorted(Path(responses).glob("*.txt"))}
    ref_root = Path(references)
    ref_texts = (
        [p.read_text(encoding="utf-8") for p in sorted(ref_root.glob("*.txt"))]
        if ref_root.is_dir()
        else [ref_root.read_text(encoding="utf-8")]
    )
    docs = [tokenize(t) for t in list(items.values()) + ref_texts]
    engine = SimilarityEngine(build_idf(docs), provider_from_env())

    per_metric_scores = {
        metric: [
            (item_id, sum(engine.score(metric, text, ref) for ref in ref_texts) / len(ref_texts))
            for item_id, text in sorted(items.items())
        ]
        for metric in (*SELECTED_METRICS, *CANDIDATE_METRICS)
    }
    result = run_selection_study(RankingStudy(truth, per_metric_scores))
    payload = {
        "inversions": {m.value: n for m, n in sorted(result.inversions.items(), key=lambda kv: kv[0].value)},
        "selections": {
            cat.value: {
                "metric": sel.metric.value,
                "inversions": sel.inversions,
                "excluded": sel.excluded,
                "tied": sel.tied,
            }
            for cat, sel in sorted(result.selections.items(), key=lambda kv: kv[0].value)
        },
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


@main.command()
@click.option("--inversions", "inversions_path", default="", type=click.Path(dir_okay=False),
              help='JSON {"ngram": 5, "lexical": 1, ...} of per-category inversion counts.')
@click.option("--ahp", "ahp_path", default="", type=click.Path(dir_okay=False),
              help="Judgment matrix JSON; 'bundled' uses the shipped instance.")
@click.option("--method", type=click.Choice([m.value for m in CombineMethod]),
              default=CombineMethod.ARITHMETIC_MEAN.value)
@click.option("--alpha", default=0.5, type=float)
@click.option("--allow-inconsistent", is_flag=True)
@click.option("--out", "out_path", default="", type=click.Path(dir_okay=False))
def weigh(inversions_path, ahp_path, method, alpha, allow_inconsistent, out_path):
    """Derive category weights via inverted softmax, AHP, or both."""
    softmax_w = ahp_w = None
    consistency = None
    if inversions_path:
        counts = json.loads(Path(inversions_path).read_text(encoding="utf-8"))
        softmax_w = inverted_softmax({MetricCategory(k): v for k, v in counts.items()})
    if ahp_path:
        matrix = bundled_judgment_matrix() if ahp_path == "bundled" else load_judgment_matrix(ahp_path)
        ahp_w, consistency = ahp_weights(matrix, allow_inconsistent=allow_inconsistent)

    if softmax_w and ahp_w:
        weights: CategoryWeights = combine_weights(softmax_w, ahp_w, CombineMethod(method), alpha)
    else:
        weights = softmax_w or ahp_w or DEFAULT_CATEGORY_WEIGHTS

    payload: dict = {
        "weights": {c.value: w for c, w in sorted(weights.weights.items(), key=lambda kv: kv[0].value)},
        "provenance": weights.provenance.value,
    }
    if consistency is not None:
        payload["consistency"] = {
            "lambda_max": consistency.lambda_max,
            "ci": consistency.ci,
            "cr": consistency.cr,
            "ri_used": consistency.ri_used,
            "consistent": consistency.consistent,
        }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


def _load_weights_file(path: str) -> CategoryWeights:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return CategoryWeights(
        {MetricCategory(k): float(v) for k, v in data["weights"].items()},
        WeightProvenance(data.get("provenance", "combined")),
    )


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", default="", type=click.Path(dir_okay=False))
@click.option("--weights", "weights_path", default="", type=click.Path(dir_okay=False),
              help="Weights JSON from `weigh`; overrides the config's metric weights.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--model", "models", multiple=True, help="Restrict to these models.")
@click.option("--no-humans", is_flag=True)
def evaluate(corpus_dir, config_path, weights_path, out_dir, models, no_humans):
    """Score every responder against the reference sets and write reports."""
    corpus: Corpus = load_corpus(corpus_dir)
    cfg = load_config(config_path) if config_path else ScoringConfig()
    if weights_path:
        cfg = ScoringConfig(
            metric_weights=_load_weights_file(weights_path),
            section_weights=cfg.section_weights,
            empty_section_policy=cfg.empty_section_policy,
            selected_metrics=cfg.selected_metrics,
        )
    result = score_run(
        corpus,
        cfg,
        models=list(models) or None,
        include_humans=not no_humans,
        provider=provider_from_env(),
    )
    out = Path(out_dir)
    reports_dir = out / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    for report in result.reports:
        path = reports_dir / f"{report.cohort}__{report.model}.json"
        path.write_text(report_json(report), encoding="utf-8")
    (out / "run_manifest.json").write_text(
        json.dumps(result.manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    click.echo(f"reports: {len(result.reports)}")
    click.echo(f"missing responses: {len(result.missing)}")
    click.echo(f"manifest hash: {manifest_hash(result.manifest)}")


@main.command("report")
@click.option("--reports", "reports_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def report_cmd(reports_dir, out_dir):
    """Emit the score matrix, metric distributions, and comparison table."""
    paths = sorted(Path(reports_dir).glob("*.json"))
    if not paths:
        raise click.ClickException(f"no report JSON files under {reports_dir}")
    reports = [report_from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in paths]
    written = emit_all(reports, out_dir)
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()

"""Presentation artifacts derived from score reports.

Everything emitted here is recomputable from the report JSON alone: a model x
section score matrix, per-metric distribution summaries, and the side-by-side
human/model key-factors table. File headers carry the manifest hash and the
quantile convention so a table can always be traced to its run.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import SECTION_ORDER, SectionKind
from .metrics import MetricId
from .scoring import ScoreReport, manifest_hash

# Quantiles use linear interpolation at p * (n - 1), matching numpy's default.
QUANTILE_CONVENTION = "linear interpolation at p*(n-1)"

TABLE_COLUMNS = ("Intro", "Factors", "Historical", "Resolution", "Takeaways", "Final")
_COLUMN_SECTION = dict(zip(TABLE_COLUMNS[:5], SECTION_ORDER))


class ReportError(Exception):
    pass


class MissingCohort(ReportError):
    pass


@dataclass(frozen=True)
class SummaryStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ReportError("summary requires at least one value")
        if not self.min <= self.q1 <= self.median <= self.q3 <= self.max:
            raise ReportError("summary quantiles are not monotone")

    def to_dict(self) -> dict:
        return {
            "min": self.min,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.max,
            "mean": self.mean,
            "n": self.n,
        }


def summarize(values: list[float]) -> SummaryStats:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ReportError("summary requires at least one value")
    q = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
    return SummaryStats(
        min=float(q[0]),
        q1=float(q[1]),
        median=float(q[2]),
        q3=float(q[3]),
        max=float(q[4]),
        mean=float(arr.mean()),
        n=int(arr.size),
    )


def table_by_category(reports: list[ScoreReport]) -> list[dict[str, float | str | None]]:
    """Model x section matrix of mean scores plus the mean final score.

    Sections a report never scored (human reports outside key factors) render
    as None so the CSV cell stays empty.
    """
    if not reports:
        raise ReportError("no reports")
    rows: list[dict[str, float | str | None]] = []
    for report in reports:
        row: dict[str, float | str | None] = {"Model": report.model}
        for column, section in _COLUMN_SECTION.items():
            row[column] = report.aggregate.per_section.get(section)
        row["Final"] = report.aggregate.final_mean
        rows.append(row)
    return rows


def metric_distributions(reports: list[ScoreReport]) -> dict[str, dict[str, SummaryStats]]:
    """Five-number summary plus mean per (model, metric) over all case-section
    scores; human reports contribute only their key-factors scores by
    construction."""
    if not reports:
        raise ReportError("no reports")
    out: dict[str, dict[str, SummaryStats]] = {}
    for report in reports:
        values: dict[MetricId, list[float]] = {}
        for response in report.case_scores.values():
            for section_score in response.sections:
                for metric, value in section_score.per_metric.items():
                    values.setdefault(metric, []).append(value)
        out[report.model] = {
            metric.value: summarize(vals) for metric, vals in sorted(values.items(), key=lambda kv: kv[0].value)
        }
    return out


def human_vs_llm_table(reports: list[ScoreReport]) -> list[dict[str, float | str]]:
    """Key-factors-only per-metric means for every human and every model.

    Models are restricted to their key-factors section scores so both cohorts
    are compared on the same footing.
    """
    humans = [r for r in reports if r.cohort == "human"]
    llms = [r for r in reports if r.cohort == "llm"]
    if not humans or not llms:
        raise MissingCohort("need at least one human and one llm report")
    rows = []
    for report in humans + llms:
        sums: dict[MetricId, list[float]] = {}
        for response in report.case_scores.values():
            for section_score in response.sections:
                if section_score.section is not SectionKind.KEY_FACTORS:
                    continue
                for metric, value in section_score.per_metric.items():
                    sums.setdefault(metric, []).append(value)
        row: dict[str, float | str] = {"Responder": report.model, "Cohort": report.cohort}
        for metric, vals in sorted(sums.items(), key=lambda kv: kv[0].value):
            row[metric.value] = float(np.mean(vals))
        rows.append(row)
    return rows


def _header_comment(reports: list[ScoreReport]) -> str:
    hashes = sorted({manifest_hash(r.manifest) for r in reports})
    tag = hashes[0] if len(hashes) == 1 else ",".join(h[:12] for h in hashes)
    return f"# manifest={tag} quantiles={QUANTILE_CONVENTION}"


def _write_csv(path: Path, header_comment: str, fieldnames: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    buf.write(header_comment + "\n")
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_csv_table(path: str | Path) -> list[dict[str, str]]:
    """Read back an emitted CSV, skipping the header comment."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = [line for line in lines if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def emit_all(reports: list[ScoreReport], out_dir: str | Path) -> list[Path]:
    """Write table_by_category.csv, metric_distributions.json, human_vs_llm.csv.

    The comparison table is skipped (with a note in the return value) when a
    cohort is absent rather than failing the whole emission.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    table = table_by_category(reports)
    table_path = out / "table_by_category.csv"
    _write_csv(table_path, _header_comment(reports), ["Model", *TABLE_COLUMNS], table)
    written.append(table_path)

    dists = metric_distributions(reports)
    dist_path = out / "metric_distributions.json"
    payload = {
        "manifest_hashes": sorted({manifest_hash(r.manifest) for r in reports}),
        "quantile_convention": QUANTILE_CONVENTION,
        "distributions": {
            model: {metric: stats.to_dict() for metric, stats in by_metric.items()}
            for model, by_metric in sorted(dists.items())
        },
    }
    dist_path.write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    written.append(dist_path)

    try:
        comparison = human_vs_llm_table(reports)
    except MissingCohort:
        return written
    fields = ["Responder", "Cohort"] + sorted(
        {k for row in comparison for k in row if k not in ("Responder", "Cohort")}
    )
    comparison_path = out / "human_vs_llm.csv"
    _write_csv(comparison_path, _header_comment(reports), fields, comparison)
    written.append(comparison_path)
    return written

"""Inversion counting between rankings and the metric-selection study.

The loss between a metric-induced ordering and a hand-made ground truth is the
number of discordant pairs: pairs the ground truth orders strictly one way and
the metric orders strictly the other way. Ties on either side are never
discordant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .metrics import CATEGORY_OF, MetricCategory, MetricId


class RankingError(Exception):
    pass


class ItemSetMismatch(RankingError):
    pass


class NonFiniteScore(RankingError):
    pass


class EmptyCategory(RankingError):
    pass


@dataclass(frozen=True)
class Ranking:
    """Items with positive integer ranks; equal ranks express ties."""

    items: tuple[str, ...]
    rank_of: dict[str, int]

    def __post_init__(self) -> None:
        if len(set(self.items)) != len(self.items):
            raise RankingError("duplicate items in ranking")
        if set(self.items) != set(self.rank_of):
            raise RankingError("rank_of must cover exactly the item list")
        for item, rank in self.rank_of.items():
            if rank < 1:
                raise RankingError(f"rank of {item!r} must be a positive integer, got {rank}")

    @classmethod
    def from_ranks(cls, rank_of: dict[str, int]) -> "Ranking":
        items = tuple(sorted(rank_of, key=lambda item: (rank_of[item], item)))
        return cls(items, dict(rank_of))

    @classmethod
    def load(cls, path: str | Path) -> "Ranking":
        """Read the ground-truth file format ``{"items": [...], "ranks": {...}}``."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tuple(data["items"]), {k: int(v) for k, v in data["ranks"].items()})


def scores_to_ranking(scores: list[tuple[str, float]], higher_is_better: bool = True) -> Ranking:
    """Competition ranking of items by score: ties share a rank, and the next
    distinct score resumes at its 1-based sorted position."""
    if not scores:
        raise RankingError("cannot rank an empty score list")
    for item, value in scores:
        if not math.isfinite(value):
            raise NonFiniteScore(f"score for {item!r} is {value}")

    def beats(x: float, y: float) -> bool:
        return x > y if higher_is_better else x < y

    rank_of = {
        item: 1 + sum(1 for _, other in scores if beats(other, value))
        for item, value in scores
    }
    items = [item for item, _ in scores]
    items.sort(key=lambda it: rank_of[it])  # stable: input order within ties
    return Ranking(tuple(items), rank_of)


def inversion_loss(sigma: Ranking, pi: Ranking) -> int:
    """Number of discordant pairs between prediction sigma and ground truth pi.

    Counted with a merge-sort pass: items are laid out in ground-truth order
    (ties broken by ascending sigma rank so tied groups contribute nothing)
    and strict descents of the sigma ranks are accumulated.
    """
    if set(sigma.items) != set(pi.items):
        raise ItemSetMismatch("rankings cover different item sets")
    ordered = sorted(pi.items, key=lambda item: (pi.rank_of[item], sigma.rank_of[item]))
    sequence = [sigma.rank_of[item] for item in ordered]
    _, count = _merge_count(sequence)
    return count


def _merge_count(seq: list[int]) -> tuple[list[int], int]:
    if len(seq) <= 1:
        return seq, 0
    mid = len(seq) // 2
    left, inv_left = _merge_count(seq[:mid])
    right, inv_right = _merge_count(seq[mid:])
    merged: list[int] = []
    inversions = inv_left + inv_right
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            # right[j] strictly precedes the remaining left items
            inversions += len(left) - i
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, inversions


@dataclass(frozen=True)
class RankingStudy:
    """Ground-truth ranking plus per-metric score lists over the same items."""

    ground_truth: Ranking
    per_metric_scores: dict[MetricId, list[tuple[str, float]]]

    def __post_init__(self) -> None:
        truth_items = set(self.ground_truth.items)
        for metric, scores in self.per_metric_scores.items():
            if {item for item, _ in scores} != truth_items:
                raise ItemSetMismatch(
                    f"{metric.value} scores do not cover the ground-truth item set"
                )


@dataclass(frozen=True)
class CategorySelection:
    category: MetricCategory
    metric: MetricId
    inversions: int
    excluded: bool
    tied: bool


@dataclass(frozen=True)
class SelectionStudyResult:
    sigma: dict[MetricId, Ranking]
    inversions: dict[MetricId, int]
    selections: dict[MetricCategory, CategorySelection]

    def winners(self) -> dict[MetricCategory, MetricId]:
        return {
            cat: sel.metric for cat, sel in self.selections.items() if not sel.excluded
        }


def select_by_inversions(
    inversions: dict[MetricId, int],
    require_all_categories: bool = True,
) -> dict[MetricCategory, CategorySelection]:
    """Pick the lowest-inversion metric per category.

    Ties break by :class:`MetricId` declaration order and are flagged. The
    set-based category is reported but marked excluded. With
    ``require_all_categories`` every non-excluded category must have at least
    one scored metric.
    """
    metric_order = list(MetricId)
    selections: dict[MetricCategory, CategorySelection] = {}
    for category in MetricCategory:
        members = [m for m in inversions if CATEGORY_OF[m] is category]
        if not members:
            if require_all_categories and not category.excluded_from_weighting:
                raise EmptyCategory(f"no scored metrics in category {category.value}")
            continue
        members.sort(key=metric_order.index)
        best = min(members, key=lambda m: (inversions[m], metric_order.index(m)))
        tied = sum(1 for m in members if inversions[m] == inversions[best]) > 1
        selections[category] = CategorySelection(
            category=category,
            metric=best,
            inversions=inversions[best],
            excluded=category.excluded_from_weighting,
            tied=tied,
        )
    return selections


def run_selection_study(
    study: RankingStudy,
    require_all_categories: bool = True,
) -> SelectionStudyResult:
    """Rank every metric's scores, count inversions against the ground truth,
    and select a winner per category."""
    sigma = {
        metric: scores_to_ranking(scores)
        for metric, scores in study.per_metric_scores.items()
    }
    inversions = {
        metric: inversion_loss(ranked, study.ground_truth)
        for metric, ranked in sigma.items()
    }
    selections = select_by_inversions(inversions, require_all_categories)
    return SelectionStudyResult(sigma=sigma, inversions=inversions, selections=selections)

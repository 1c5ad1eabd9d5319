"""Metric-category weight derivation.

Three routes produce weights on the probability simplex: an inverted softmax
over inversion counts (fewer inversions, more weight), the analytic hierarchy
process over a reciprocal pairwise-comparison matrix, and a combination of the
two. The shipped default weights are the published endpoint of that process
and are used verbatim unless a run derives its own.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .metrics import MetricCategory

WEIGHT_SUM_TOL = 1e-9
CONSISTENCY_THRESHOLD = 0.1

# Saaty random indices for matrices of order n; order 1 and 2 matrices are
# consistent by construction.
RANDOM_INDEX = {
    1: 0.0,
    2: 0.0,
    3: 0.58,
    4: 0.90,
    5: 1.12,
    6: 1.24,
    7: 1.32,
    8: 1.41,
    9: 1.45,
    10: 1.49,
}


class WeightingError(Exception):
    pass


class TooFewCategories(WeightingError):
    pass


class NotReciprocal(WeightingError):
    pass


class NonPositiveEntry(WeightingError):
    pass


class NoConvergence(WeightingError):
    pass


class Inconsistent(WeightingError):
    def __init__(self, cr: float):
        self.cr = cr
        super().__init__(
            f"consistency ratio {cr:.4f} >= {CONSISTENCY_THRESHOLD}; "
            "adjust the judgment matrix or pass allow_inconsistent=True"
        )


class CategoryMismatch(WeightingError):
    pass


class WeightProvenance(Enum):
    SOFTMAX = "softmax"
    AHP = "ahp"
    COMBINED = "combined"
    PAPER_DEFAULT = "paper_default"


class CombineMethod(Enum):
    ARITHMETIC_MEAN = "arithmetic_mean"
    GEOMETRIC_MEAN = "geometric_mean_renormalized"
    CONVEX_BLEND = "convex_blend"


@dataclass(frozen=True)
class CategoryWeights:
    """Positive weights summing to 1 over the weighted metric categories."""

    weights: dict[MetricCategory, float]
    provenance: WeightProvenance

    def __post_init__(self) -> None:
        if not self.weights:
            raise TooFewCategories("no categories")
        for category, value in self.weights.items():
            if category.excluded_from_weighting:
                raise WeightingError(f"{category.value} is excluded from weighting")
            if value <= 0.0:
                raise WeightingError(f"weight for {category.value} must be > 0, got {value}")
        total = sum(self.weights.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise WeightingError(f"weights sum to {total!r}, expected 1")

    def __getitem__(self, category: MetricCategory) -> float:
        return self.weights[category]

    def categories(self) -> set[MetricCategory]:
        return set(self.weights)


# Published default weights; a run that derives its own replaces these.
DEFAULT_CATEGORY_WEIGHTS = CategoryWeights(
    weights={
        MetricCategory.LEXICAL: 0.0768,
        MetricCategory.NGRAM: 0.1547,
        MetricCategory.COSINE: 0.2299,
        MetricCategory.SEMANTIC: 0.5386,
    },
    provenance=WeightProvenance.PAPER_DEFAULT,
)


@dataclass(frozen=True)
class ConsistencyReport:
    lambda_max: float
    ci: float
    cr: float
    ri_used: float
    consistent: bool


@dataclass(frozen=True)
class JudgmentMatrix:
    """Reciprocal positive pairwise-comparison matrix with labeled rows."""

    a: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=np.float64)
        object.__setattr__(self, "a", a)
        n = a.shape[0]
        if a.ndim != 2 or a.shape != (n, n) or n < 2:
            raise WeightingError(f"judgment matrix must be square with n >= 2, got {a.shape}")
        if len(self.labels) != n:
            raise WeightingError(f"{len(self.labels)} labels for an order-{n} matrix")
        if np.any(a <= 0.0):
            raise NonPositiveEntry("judgment matrix entries must be positive")
        if not np.allclose(a * a.T, 1.0, atol=1e-6):
            raise NotReciprocal("matrix violates a[i][j] * a[j][i] == 1")
        if not np.allclose(np.diag(a), 1.0, atol=1e-9):
            raise NotReciprocal("diagonal entries must equal 1")

    @property
    def n(self) -> int:
        return self.a.shape[0]


def _parse_entry(value) -> float:
    # Matrix files may write reciprocals as "1/8" for readability.
    if isinstance(value, str):
        return float(Fraction(value))
    return float(value)


def load_judgment_matrix(path: str | Path) -> JudgmentMatrix:
    """Read ``{"order": [...], "matrix": [[...]...]}``; entries may be numbers
    or fraction strings like "1/12"."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    matrix = np.array([[_parse_entry(v) for v in row] for row in data["matrix"]])
    return JudgmentMatrix(matrix, tuple(data["order"]))


def bundled_judgment_matrix() -> JudgmentMatrix:
    """The shipped 4x4 pairwise-comparison instance."""
    ref = resources.files("ethicseval").joinpath("assets/ahp_paper.json")
    data = json.loads(ref.read_text(encoding="utf-8"))
    matrix = np.array([[_parse_entry(v) for v in row] for row in data["matrix"]])
    return JudgmentMatrix(matrix, tuple(data["order"]))


def power_iteration_weights(
    matrix: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> tuple[np.ndarray, ConsistencyReport]:
    """Principal right eigenvector of a positive matrix, normalized to sum 1.

    Iterates ``v <- A v`` with sum-normalization until the largest component
    change is below ``tol`` relative to the vector scale, then takes lambda_max
    from the Rayleigh quotient.
    """
    a = np.asarray(matrix, dtype=np.float64)
    n = a.shape[0]
    v = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        v_next = a @ v
        v_next /= v_next.sum()
        delta = float(np.max(np.abs(v_next - v)))
        v = v_next
        if delta <= tol * float(np.max(v)):
            break
    else:
        raise NoConvergence(f"power iteration did not converge in {max_iter} iterations")
    av = a @ v
    lambda_max = float(np.dot(v, av) / np.dot(v, v))
    ci = (lambda_max - n) / (n - 1)
    ri = RANDOM_INDEX.get(n, RANDOM_INDEX[10])
    cr = 0.0 if ri == 0.0 else ci / ri
    report = ConsistencyReport(
        lambda_max=lambda_max,
        ci=ci,
        cr=cr,
        ri_used=ri,
        consistent=cr < CONSISTENCY_THRESHOLD,
    )
    return v, report


def ahp_weights(
    m: JudgmentMatrix,
    allow_inconsistent: bool = False,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> tuple[CategoryWeights, ConsistencyReport]:
    """Category weights from the principal eigenvector of a judgment matrix.

    Refuses to emit weights when the consistency ratio crosses the acceptance
    threshold unless explicitly overridden.
    """
    vector, report = power_iteration_weights(m.a, tol=tol, max_iter=max_iter)
    if not report.consistent and not allow_inconsistent:
        raise Inconsistent(report.cr)
    weights = {
        MetricCategory(label): float(value) for label, value in zip(m.labels, vector)
    }
    return CategoryWeights(weights, WeightProvenance.AHP), report


def inverted_softmax(inversions: dict[MetricCategory, float]) -> CategoryWeights:
    """Weights from inversion counts: min-max scale, flip so fewer inversions
    score higher, then softmax.

    When every category has the same count the scaling degenerates (division
    by zero); the symmetric completion is uniform weights.
    """
    if len(inversions) < 2:
        raise TooFewCategories(f"need >= 2 categories, got {len(inversions)}")
    categories = list(inversions)
    s = np.array([float(inversions[c]) for c in categories])
    if not np.all(np.isfinite(s)):
        raise WeightingError("inversion counts must be finite")
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        weights = np.full(len(s), 1.0 / len(s))
    else:
        exponents = np.exp(1.0 - (s - lo) / (hi - lo))
        weights = exponents / exponents.sum()
    return CategoryWeights(
        {c: float(w) for c, w in zip(categories, weights)},
        WeightProvenance.SOFTMAX,
    )


def combine_weights(
    softmax_w: CategoryWeights,
    ahp_w: CategoryWeights,
    method: CombineMethod = CombineMethod.ARITHMETIC_MEAN,
    alpha: float = 0.5,
) -> CategoryWeights:
    """Merge two weight vectors over the same categories onto the simplex.

    ``alpha`` only applies to the convex blend: ``alpha * softmax + (1 - alpha)
    * ahp``.
    """
    if softmax_w.categories() != ahp_w.categories():
        raise CategoryMismatch(
            f"category sets differ: {sorted(c.value for c in softmax_w.categories())} "
            f"vs {sorted(c.value for c in ahp_w.categories())}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise WeightingError(f"alpha must lie in [0, 1], got {alpha}")
    categories = sorted(softmax_w.categories(), key=lambda c: c.value)
    x = np.array([softmax_w[c] for c in categories])
    y = np.array([ahp_w[c] for c in categories])
    if method is CombineMethod.ARITHMETIC_MEAN:
        merged = (x + y) / 2.0
    elif method is CombineMethod.GEOMETRIC_MEAN:
        merged = np.sqrt(x * y)
    elif method is CombineMethod.CONVEX_BLEND:
        merged = alpha * x + (1.0 - alpha) * y
    else:
        raise WeightingError(f"unknown combine method {method!r}")
    merged /= merged.sum()
    return CategoryWeights(
        {c: float(w) for c, w in zip(categories, merged)},
        WeightProvenance.COMBINED,
    )

"""Dual-criterion (data quantity + data quality) aggregation weights.

Each client's weight blends its share of the total training data with its
share of the summed evaluation scores::

    v_i = |D_i| / sum |D_j|
    q_i = score_i / sum score_j
    f_i = lam * q_i + (1 - lam) * v_i
    w_i = f_i / sum f_j

and the server picks ``lam`` each round from a grid by validation accuracy.
Normalisations are computed with exact rational sums and a single rounding,
so equal inputs give exactly equal weights and ``lam = 0`` reproduces the
size-weighted mean bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .data import Dataset
from .learner import ClientReport, ModelSpec, evaluate_score
from .params import weighted_sum

logger = logging.getLogger(__name__)

DEFAULT_GRID = tuple(i / 10 for i in range(11))


class DegenerateQualityError(ValueError):
    """Every client reported a zero score, so quality factors are undefined."""


@dataclass(frozen=True)
class DualWeights:
    v: list[float]
    q: list[float] | None
    lam: float
    f: list[float]
    w: list[float]


@dataclass
class LambdaGrid:
    values: tuple[float, ...] = DEFAULT_GRID
    chosen: float | None = field(default=None)

    def __post_init__(self):
        self.values = tuple(float(v) for v in self.values)
        if not self.values:
            raise ValueError("lambda grid must not be empty")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError(f"lambda values must lie in [0, 1]: {self.values}")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError(f"lambda grid must be strictly ascending: {self.values}")


def _normalize_exact(xs: Sequence[float]) -> list[float]:
    exact = [Fraction(x) for x in xs]
    total = sum(exact)
    return [float(x / total) for x in exact]


def quantity_factors(sizes: Sequence[int]) -> list[float]:
    if len(sizes) == 0:
        raise ValueError("no client sizes given")
    if any(s < 1 for s in sizes):
        raise ValueError(f"dataset sizes must be >= 1: {list(sizes)}")
    return _normalize_exact([int(s) for s in sizes])


def quality_factors(scores: Sequence[float]) -> list[float]:
    if len(scores) == 0:
        raise ValueError("no client scores given")
    if any(not (s >= 0 and math.isfinite(s)) for s in scores):
        raise ValueError(f"scores must be finite and non-negative: {list(scores)}")
    if not any(s > 0 for s in scores):
        raise DegenerateQualityError("all client scores are zero")
    return _normalize_exact(scores)


def blend(q: Sequence[float], v: Sequence[float], lam: float) -> list[float]:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if len(q) != len(v):
        raise ValueError(f"{len(q)} quality factors but {len(v)} quantity factors")
    return [lam * qi + (1.0 - lam) * vi for qi, vi in zip(q, v)]


def normalize_weights(f: Sequence[float]) -> list[float]:
    if any(x < 0 or not math.isfinite(x) for x in f):
        raise ValueError(f"weights must be finite and non-negative: {list(f)}")
    if not sum(f) > 0:
        raise ValueError("weights must have a positive sum")
    return _normalize_exact(f)


def dual_weights(sizes: Sequence[int], scores: Sequence[float], lam: float) -> DualWeights:
    """Run the full weight pipeline; all-zero scores fall back to pure quantity."""
    v = quantity_factors(sizes)
    try:
        q = quality_factors(scores)
    except DegenerateQualityError:
        logger.warning("all client scores are zero; weighting by dataset size only")
        return DualWeights(v, None, lam, list(v), normalize_weights(v))
    f = blend(q, v, lam)
    return DualWeights(v, q, lam, f, normalize_weights(f))


def canonical(reports: Sequence[ClientReport]) -> list[ClientReport]:
    """Reports sorted by client id; duplicate ids are rejected."""
    if len(reports) == 0:
        raise ValueError("no client reports to aggregate")
    ordered = sorted(reports, key=lambda r: r.client_id)
    ids = [r.client_id for r in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate client ids in reports: {ids}")
    return ordered


def dualcrit_weights(reports: Sequence[ClientReport], lam: float) -> DualWeights:
    reports = canonical(reports)
    return dual_weights([r.size for r in reports], [r.score for r in reports], lam)


def dualcrit_aggregate(reports: Sequence[ClientReport], lam: float) -> np.ndarray:
    reports = canonical(reports)
    weights = dualcrit_weights(reports, lam)
    return weighted_sum([r.parameters for r in reports], weights.w)


def select_lambda(
    reports: Sequence[ClientReport],
    grid: LambdaGrid | Sequence[float],
    validation_set: Dataset,
    spec: ModelSpec,
) -> tuple[float, np.ndarray]:
    """Aggregate once per grid value and keep the best on ``validation_set``.

    Ties go to the smallest lambda, i.e. towards plain size weighting.
    """
    if not isinstance(grid, LambdaGrid):
        grid = LambdaGrid(tuple(grid))
    if len(validation_set) == 0:
        raise ValueError("validation set is empty")
    candidates = []
    for lam in grid.values:
        model = dualcrit_aggregate(reports, lam)
        candidates.append((evaluate_score(model, validation_set, spec), lam, model))
    best_acc, best_lam, best_model = min(candidates, key=lambda c: (-c[0], c[1]))
    grid.chosen = best_lam
    return best_lam, best_model

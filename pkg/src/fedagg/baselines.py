"""Baseline aggregation rules the dual-criterion method is compared with.

Every aggregator first puts the reports in client-id order, so results do not
depend on the order reports arrived in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import round_half_away_array
from .dualcrit import canonical, normalize_weights, quantity_factors
from .learner import ClientReport
from .params import StructureError, as_params, weighted_sum

STRATEGIES = ("simple", "weighted", "median", "momentum", "personalized", "dp", "quantized", "dualcrit")


@dataclass(frozen=True)
class BaselineConfig:
    alpha: float = 0.5
    epsilon: float = 1.0
    q_level: int = 8
    beta: float = 0.9
    eta: float = 1.0
    noise_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.q_level < 1:
            raise ValueError(f"q_level must be >= 1, got {self.q_level}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")


@dataclass(frozen=True)
class MomentumState:
    velocity: np.ndarray
    beta: float = 0.9
    eta: float = 1.0

    @classmethod
    def zeros(cls, length: int, beta: float = 0.9, eta: float = 1.0) -> "MomentumState":
        return cls(as_params(np.zeros(length)), beta, eta)


def _params(reports):
    return [r.parameters for r in reports]


def uniform_weights(n: int) -> list[float]:
    return normalize_weights([1.0] * n)


def size_weights(reports) -> list[float]:
    return normalize_weights(quantity_factors([r.size for r in canonical(reports)]))


def simple_average(reports: list[ClientReport]) -> np.ndarray:
    reports = canonical(reports)
    return weighted_sum(_params(reports), uniform_weights(len(reports)))


def weighted_mean(reports: list[ClientReport]) -> np.ndarray:
    reports = canonical(reports)
    return weighted_sum(_params(reports), size_weights(reports))


def median_aggregate(reports: list[ClientReport]) -> np.ndarray:
    """Coordinate-wise median; an even count averages the two middle values."""
    reports = canonical(reports)
    return as_params(np.median(np.stack(_params(reports)), axis=0))


def momentum_aggregate(
    reports: list[ClientReport], prev_global: np.ndarray, state: MomentumState
) -> tuple[np.ndarray, MomentumState]:
    """Server momentum on the size-weighted mean.

    ``M <- beta * M + (mean - prev)`` and ``theta <- prev + eta * M``; the model
    update is evaluated in the expanded form
    ``eta * mean + (1 - eta) * prev + eta * beta * M_old``, which is
    algebraically the same and returns ``mean`` exactly when ``beta = 0`` and
    ``eta = 1`` and ``prev`` exactly when ``eta = 0``.
    """
    if state.velocity.shape != prev_global.shape:
        raise StructureError(
            f"length mismatch: momentum {state.velocity.size} vs model {prev_global.size}"
        )
    mean = weighted_mean(reports)
    if mean.shape != prev_global.shape:
        raise StructureError(f"length mismatch: clients {mean.size} vs model {prev_global.size}")
    beta, eta = state.beta, state.eta
    velocity = as_params(beta * state.velocity + (mean - prev_global))
    model = as_params(eta * mean + (1.0 - eta) * prev_global + (eta * beta) * state.velocity)
    return model, MomentumState(velocity, beta, eta)


def personalized_aggregate(
    reports: list[ClientReport], prev_global: np.ndarray, alpha: float
) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    mean = simple_average(reports)
    if mean.shape != prev_global.shape:
        raise StructureError(f"length mismatch: clients {mean.size} vs model {prev_global.size}")
    return as_params(alpha * prev_global + (1.0 - alpha) * mean)


def laplace_noise(size: int, epsilon: float, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).laplace(0.0, 1.0 / epsilon, size=size)


def dp_average(reports: list[ClientReport], epsilon: float, noise_seed: int) -> np.ndarray:
    """Simple average plus i.i.d. Laplace(0, 1/epsilon) noise on every coordinate.

    The noise scale is taken as ``1/epsilon`` with no clipping or sensitivity
    bound, so this does not carry a formal privacy guarantee.
    """
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon}")
    mean = simple_average(reports)
    return as_params(mean + laplace_noise(mean.size, epsilon, noise_seed))


def quantize_vector(p: np.ndarray, q_level: int) -> np.ndarray:
    """Quantise ``p`` to ``2**q_level - 1`` steps over its own [min, max] range.

    Values are mapped to [0, 1], rounded half away from zero, and mapped back
    as ``(1 - s) * lo + s * hi`` so both range endpoints survive exactly. A
    constant vector is returned unchanged.
    """
    if q_level < 1:
        raise ValueError(f"q_level must be >= 1, got {q_level}")
    p = np.asarray(p, dtype=np.float64)
    lo, hi = float(p.min()), float(p.max())
    if hi == lo:
        return as_params(p)
    steps = float(2**q_level - 1)
    t = (p - lo) / (hi - lo) * steps
    s = round_half_away_array(t) / steps
    return as_params((1.0 - s) * lo + s * hi)


def quantize_aggregate(reports: list[ClientReport], q_level: int) -> np.ndarray:
    reports = canonical(reports)
    quantized = [quantize_vector(r.parameters, q_level) for r in reports]
    return weighted_sum(quantized, uniform_weights(len(reports)))


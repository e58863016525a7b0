"""Local client training and accuracy scoring.

Models are softmax classifiers with zero or more ReLU hidden layers. The
parameters live in one flat vector laid out layer by layer: each weight
matrix (shape ``in x out``, row-major) followed by its bias.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset, DatasetShard, client_name
from .params import as_params

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Local training produced non-finite parameters."""

    def __init__(self, message: str, round_index: int | None = None, client_id: int | None = None):
        super().__init__(message)
        self.round_index = round_index
        self.client_id = client_id


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    num_classes: int
    hidden_dims: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if min((self.input_dim, self.num_classes) + self.hidden_dims) < 1:
            raise ValueError(f"all layer widths must be >= 1: {self}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        widths = [self.input_dim, *self.hidden_dims, self.num_classes]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def num_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    local_epochs: int = 1
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("local_epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class ClientReport:
    client_id: int
    parameters: np.ndarray
    score: float
    size: int

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.size < 1:
            raise ValueError(f"dataset size must be >= 1, got {self.size}")


def unflatten(params: np.ndarray, spec: ModelSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of ``params`` as ``(weight, bias)`` pairs, one per layer."""
    if params.size != spec.num_params:
        raise ValueError(f"parameter vector has {params.size} entries, model needs {spec.num_params}")
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes:
        w = params[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return as_params(rng.uniform(-0.1, 0.1, size=spec.num_params))


def logits(params: np.ndarray, spec: ModelSpec, features: np.ndarray) -> np.ndarray:
    layers = unflatten(params, spec)
    h = features
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
    w, b = layers[-1]
    return h @ w + b


def predict(params: np.ndarray, spec: ModelSpec, features: np.ndarray) -> np.ndarray:
    return np.argmax(logits(params, spec, features), axis=1)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grad(
    params: np.ndarray, spec: ModelSpec, features: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient."""
    layers = unflatten(params, spec)
    n = features.shape[0]
    activations = [features]
    pre = []
    h = features
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        pre.append(z)
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0)
            activations.append(h)
    logp = _log_softmax(pre[-1])
    loss = -logp[np.arange(n), labels].mean()

    delta = np.exp(logp)
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append((activations[i].T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w.T) * (pre[i - 1] > 0)
    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in reversed(grads)])
    return float(loss), flat


def mean_loss(params: np.ndarray, spec: ModelSpec, data: Dataset) -> float:
    return loss_and_grad(params, spec, data.features, data.labels)[0]


def train_local(
    init: np.ndarray,
    shard: DatasetShard,
    spec: ModelSpec,
    cfg: TrainConfig,
    round_index: int | None = None,
) -> np.ndarray:
    """Mini-batch gradient descent on ``shard`` starting from ``init``.

    Batches are drawn from a fresh seeded shuffle every epoch, so the result is
    a pure function of the arguments.
    """
    if init.size != spec.num_params:
        raise ValueError(f"init has {init.size} parameters, model needs {spec.num_params}")
    if shard.size == 0:
        raise ValueError(f"shard for {shard.name} is empty")
    rng = np.random.default_rng(cfg.seed)
    params = np.array(init, dtype=np.float64)
    x, y = shard.data.features, shard.data.labels
    for _ in range(cfg.local_epochs):
        order = rng.permutation(shard.size)
        # Overflow is caught by the finiteness check below.
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, shard.size, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                _, grad = loss_and_grad(params, spec, x[idx], y[idx])
                params -= cfg.learning_rate * grad
        if not np.all(np.isfinite(params)):
            where = f"round {round_index}, " if round_index is not None else ""
            raise TrainingError(
                f"training diverged ({where}client {shard.name})",
                round_index=round_index,
                client_id=shard.client_id,
            )
    return as_params(params)


def evaluate_score(params: np.ndarray, eval_set: Dataset, spec: ModelSpec) -> float:
    """Fraction of ``eval_set`` classified correctly."""
    if len(eval_set) == 0:
        raise ValueError("evaluation set is empty")
    hits = np.count_nonzero(predict(params, spec, eval_set.features) == eval_set.labels)
    return hits / len(eval_set)


def make_report(
    init: np.ndarray,
    shard: DatasetShard,
    eval_set: Dataset,
    spec: ModelSpec,
    cfg: TrainConfig,
    round_index: int | None = None,
) -> ClientReport:
    trained = train_local(init, shard, spec, cfg, round_index)
    score = evaluate_score(trained, eval_set, spec)
    logger.debug("round %s %s score=%.4f", round_index, client_name(shard.client_id), score)
    return ClientReport(shard.client_id, trained, score, shard.size)

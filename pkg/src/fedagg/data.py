"""Synthetic data, client shards and the held-out evaluation/validation sets.

Datasets are stored column-wise: a feature matrix, a label vector and an
``ids`` vector giving each example a stable identity so that disjointness
between shards and held-out sets can be checked.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.ids.shape != (n,):
            raise ValueError(
                f"features, labels and ids disagree in length: "
                f"{n}, {self.labels.shape[0]}, {self.ids.shape[0]}"
            )
        for arr in (self.features, self.labels, self.ids):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def take(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.ids[index])


@dataclass(frozen=True)
class DatasetShard:
    client_id: int
    data: Dataset
    noise_fraction: float = 0.0

    @property
    def size(self) -> int:
        return len(self.data)

    @property
    def name(self) -> str:
        return client_name(self.client_id)


@dataclass(frozen=True)
class DataLayout:
    shards: list[DatasetShard]
    evaluation_set: Dataset
    validation_set: Dataset
    num_classes: int = field(default=2)

    def shard(self, client_id: int) -> DatasetShard:
        for s in self.shards:
            if s.client_id == client_id:
                return s
        raise KeyError(f"no shard for client {client_name(client_id)}")


def client_name(client_id: int) -> str:
    return f"C{client_id}"


def parse_client_name(name: str) -> int:
    name = name.strip()
    if not (name[:1] in "Cc" and name[1:].isdigit()):
        raise ValueError(f"client name must look like C1, C2, ...: {name!r}")
    return int(name[1:])


def class_means(d: int, num_classes: int, radius: float) -> np.ndarray:
    """Class centres at distance ``radius`` from the origin.

    When the dimension allows it (``num_classes <= d + 1``) the centres are the
    vertices of a regular simplex; otherwise they form a regular polygon in
    the first two coordinates.
    """
    means = np.zeros((num_classes, d))
    if num_classes <= d + 1:
        centred = np.eye(num_classes) - 1.0 / num_classes
        # Orthonormal basis of the (C-1)-dim subspace the centred vertices span.
        u, _, _ = np.linalg.svd(centred)
        coords = centred @ u[:, : num_classes - 1]
        coords /= np.linalg.norm(coords[0])
        means[:, : num_classes - 1] = coords
    else:
        angles = 2 * np.pi * np.arange(num_classes) / num_classes
        means[:, 0] = np.cos(angles)
        means[:, 1] = np.sin(angles)
    return means * radius


def generate_synthetic(
    n: int, d: int, num_classes: int, seed: int, radius: float = 2.0
) -> Dataset:
    """Draw ``n`` labelled points from unit-covariance Gaussian class clusters."""
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if d < 2:
        raise ValueError(f"need at least 2 feature dimensions, got {d}")
    if n < num_classes:
        raise ValueError(f"need n >= number of classes ({n} < {num_classes})")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % num_classes)
    means = class_means(d, num_classes, radius)
    features = means[labels] + rng.standard_normal((n, d))
    return Dataset(features, labels.astype(np.int64), np.arange(n, dtype=np.int64))


def partition(data: Dataset, sizes: Sequence[int], seed: int) -> list[DatasetShard]:
    """Split ``data`` into disjoint shards of exactly ``sizes``; client ids start at 1."""
    total = sum(sizes)
    if any(s < 0 for s in sizes):
        raise ValueError(f"shard sizes must be non-negative: {list(sizes)}")
    if total > len(data):
        raise ValueError(f"requested {total} examples but only {len(data)} available")
    order = np.random.default_rng(seed).permutation(len(data))
    shards = []
    start = 0
    for i, size in enumerate(sizes):
        shards.append(DatasetShard(i + 1, data.take(order[start : start + size])))
        start += size
    return shards


def round_half_away_array(x) -> np.ndarray:
    """Round to the nearest integer, halves away from zero."""
    mag = np.abs(np.asarray(x, dtype=np.float64))
    whole = np.floor(mag)
    # mag - whole is exact, unlike mag + 0.5 which can round up at 0.49999...
    return np.copysign(whole + (mag - whole >= 0.5), x)


def round_half_away(x: float) -> int:
    return int(round_half_away_array(x))


def corrupt_labels(
    shard: DatasetShard, fraction: float, seed: int, num_classes: int
) -> DatasetShard:
    """Resample the labels of ``round(fraction * size)`` examples.

    Each chosen label is replaced by one drawn uniformly from the other
    ``num_classes - 1`` classes, so every chosen example ends up mislabelled.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"noise fraction must lie in [0, 1], got {fraction}")
    if fraction == 0.0:
        return shard
    count = round_half_away(fraction * shard.size)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(shard.size, size=count, replace=False)
    labels = shard.data.labels.copy()
    labels[chosen] = (labels[chosen] + rng.integers(1, num_classes, size=count)) % num_classes
    data = Dataset(shard.data.features, labels, shard.data.ids)
    return replace(shard, data=data, noise_fraction=count / shard.size)


def build_layout(
    sizes: Sequence[int],
    noise: Sequence[float],
    eval_size: int,
    val_size: int,
    dim: int,
    num_classes: int,
    seed: int,
    radius: float = 2.0,
    source: Dataset | None = None,
) -> DataLayout:
    """Carve evaluation, validation and client shards out of one pool.

    The pool is ``source`` when given, otherwise a fresh synthetic draw of
    exactly the required size.
    """
    if len(noise) != len(sizes):
        raise ValueError(f"{len(sizes)} client sizes but {len(noise)} noise fractions")
    if eval_size < 1 or val_size < 1:
        raise ValueError("evaluation and validation sets must be non-empty")
    needed = eval_size + val_size + sum(sizes)
    seeds = np.random.SeedSequence([seed, 0xDA7A]).generate_state(3 + len(sizes))
    if source is None:
        source = generate_synthetic(needed, dim, num_classes, int(seeds[0]), radius)
    elif len(source) < needed:
        raise ValueError(f"requested {needed} examples but only {len(source)} available")
    order = np.random.default_rng(int(seeds[1])).permutation(len(source))
    evaluation = source.take(order[:eval_size])
    validation = source.take(order[eval_size : eval_size + val_size])
    pool = source.take(order[eval_size + val_size :])
    shards = partition(pool, sizes, int(seeds[2]))
    shards = [
        corrupt_labels(s, frac, int(seeds[3 + i]), num_classes)
        for i, (s, frac) in enumerate(zip(shards, noise))
    ]
    return DataLayout(shards, evaluation, validation, num_classes)


def load_csv(path: str | Path) -> Dataset:
    """Read a dataset: header row, feature columns, then an integer label column."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row required") from None
        if len(header) < 2:
            raise ValueError(f"{path}: need at least one feature column and a label column")
        rows = [r for r in reader if r]
    features = np.empty((len(rows), len(header) - 1))
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: line {i + 2} has {len(row)} columns, expected {len(header)}")
        features[i] = [float(v) for v in row[:-1]]
        labels[i] = int(row[-1])
    if labels.size and labels.min() < 0:
        raise ValueError(f"{path}: labels must be non-negative class indices")
    return Dataset(features, labels, np.arange(len(rows), dtype=np.int64))

"""Flat parameter vectors and the arithmetic aggregators are built from.

A parameter vector is a read-only 1-D ``float64`` numpy array. Every
operation here returns a fresh read-only array, so vectors can be shared
between threads without copying.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

MAGIC = b"FAGG"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sBQ")


class StructureError(ValueError):
    """Parameter vectors of incompatible shape were combined."""


def as_params(values) -> np.ndarray:
    """Validate ``values`` and return them as a read-only float64 vector."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise StructureError("parameter vector must have length > 0")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector contains non-finite values")
    arr.flags.writeable = False
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError("operation produced non-finite parameters")
    arr.flags.writeable = False
    return arr


def _check_lengths(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise StructureError(f"length mismatch: {a.size} vs {b.size}")


def zeros(length: int) -> np.ndarray:
    return as_params(np.zeros(length))


def scale(p: np.ndarray, c: float) -> np.ndarray:
    if not math.isfinite(c):
        raise ValueError(f"scale factor must be finite, got {c}")
    return _frozen(np.multiply(p, float(c)))


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _check_lengths(a, b)
    return _frozen(np.add(a, b))


def weighted_sum(
    ps: Sequence[np.ndarray],
    ws: Sequence[float],
    keys: Sequence[Hashable] | None = None,
) -> np.ndarray:
    """Return ``sum(ws[i] * ps[i])`` accumulated in float64.

    Terms are accumulated left to right. When ``keys`` is given the terms are
    first sorted by key, which makes the result independent of the order the
    inputs arrived in.
    """
    if len(ps) == 0:
        raise ValueError("weighted_sum needs at least one vector")
    if len(ps) != len(ws):
        raise StructureError(f"{len(ps)} vectors but {len(ws)} weights")
    order = range(len(ps))
    if keys is not None:
        if len(keys) != len(ps):
            raise StructureError(f"{len(ps)} vectors but {len(keys)} keys")
        order = sorted(order, key=lambda i: keys[i])
    first = np.asarray(ps[0])
    acc = np.zeros(first.shape, dtype=np.float64)
    for i in order:
        w = float(ws[i])
        if not math.isfinite(w):
            raise ValueError(f"weight {i} is not finite: {w}")
        p = np.asarray(ps[i], dtype=np.float64)
        _check_lengths(first, p)
        acc += w * p
    return _frozen(acc)


def save_checkpoint(path: str | Path, p: np.ndarray) -> None:
    """Write ``p`` in the FAGG binary checkpoint format."""
    p = np.asarray(p, dtype="<f8")
    payload = _HEADER.pack(MAGIC, FORMAT_VERSION, p.size) + p.tobytes()
    Path(path).write_bytes(payload)


def load_checkpoint(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise StructureError(f"{path}: truncated checkpoint header")
    magic, version, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise StructureError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise StructureError(f"{path}: unsupported format version {version}")
    body = data[_HEADER.size:]
    if len(body) != 8 * length:
        raise StructureError(
            f"{path}: header declares {length} values but body holds {len(body) / 8:g}"
        )
    return as_params(np.frombuffer(body, dtype="<f8"))

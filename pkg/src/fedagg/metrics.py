"""Classification metrics computed from a confusion matrix.

Undefined per-class ratios (zero denominators) count as 0 rather than being
dropped from the macro average.
"""

from __future__ import annotations

import math

import numpy as np


def _check(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} labels")
    if pred.size == 0:
        raise ValueError("need at least one prediction")
    return pred, truth


def confusion_matrix(pred, truth, num_classes: int) -> np.ndarray:
    """Counts indexed ``[true_class, predicted_class]``."""
    pred, truth = _check(pred, truth)
    if pred.max() >= num_classes or truth.max() >= num_classes or min(pred.min(), truth.min()) < 0:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def accuracy(pred, truth) -> float:
    pred, truth = _check(pred, truth)
    return np.count_nonzero(pred == truth) / pred.size


def _per_class_precision_recall(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tp = np.diag(cm).astype(np.float64)
    return _safe_div(tp, cm.sum(axis=0)), _safe_div(tp, cm.sum(axis=1))


def precision(pred, truth, num_classes: int, average: str = "macro") -> float:
    cm = confusion_matrix(pred, truth, num_classes)
    if average == "micro":
        return float(np.trace(cm) / cm.sum())
    if average != "macro":
        raise ValueError(f"unknown averaging mode {average!r}")
    prec, _ = _per_class_precision_recall(cm)
    return float(prec.mean())


def f1(pred, truth, num_classes: int, average: str = "macro") -> float:
    cm = confusion_matrix(pred, truth, num_classes)
    if average == "micro":
        # Micro precision and recall both equal accuracy in single-label problems.
        return float(np.trace(cm) / cm.sum())
    if average != "macro":
        raise ValueError(f"unknown averaging mode {average!r}")
    prec, rec = _per_class_precision_recall(cm)
    return float(_safe_div(2 * prec * rec, prec + rec).mean())


def precision_macro(pred, truth, num_classes: int) -> float:
    return precision(pred, truth, num_classes, "macro")


def f1_macro(pred, truth, num_classes: int) -> float:
    return f1(pred, truth, num_classes, "macro")


def mcc(pred, truth, num_classes: int) -> float:
    """Matthews correlation coefficient, generalised to ``num_classes`` classes.

    Returns 0 when either marginal is constant (zero denominator).
    """
    cm = confusion_matrix(pred, truth, num_classes).astype(np.float64)
    n = cm.sum()
    correct = np.trace(cm)
    t = cm.sum(axis=1)
    p = cm.sum(axis=0)
    cov_tp = correct * n - t @ p
    cov_tt = n * n - t @ t
    cov_pp = n * n - p @ p
    den = cov_tt * cov_pp
    if den == 0:
        return 0.0
    return float(np.clip(cov_tp / math.sqrt(den), -1.0, 1.0))


def classification_report(pred, truth, num_classes: int, average: str = "macro") -> dict[str, float]:
    return {
        "accuracy": accuracy(pred, truth),
        "precision": precision(pred, truth, num_classes, average),
        "f1": f1(pred, truth, num_classes, average),
        "mcc": mcc(pred, truth, num_classes),
    }

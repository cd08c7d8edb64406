"""Classification metrics: micro and macro F1.

Micro-F1 over single-label multi-class predictions equals plain accuracy.
Macro-F1 averages per-class F1 over all declared classes; a class with no
predictions and no true members contributes 0 (conservative and
deterministic).
"""

from __future__ import annotations

import numpy as np


def micro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) == 0:
        raise ValueError("micro_f1: empty input")
    return float(np.mean(y_true == y_pred))


def per_class_f1(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    out = np.zeros(n_classes, dtype=np.float64)
    for c in range(n_classes):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        denom = 2 * tp + fp + fn
        out[c] = 2.0 * tp / denom if denom > 0 else 0.0
    return out


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    if len(np.asarray(y_true)) == 0:
        raise ValueError("macro_f1: empty input")
    return float(per_class_f1(y_true, y_pred, n_classes).mean())

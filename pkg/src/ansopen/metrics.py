"""Evaluation over C known categories plus the open class.

Predictions and golds use -1 for open; internally the open class sits
at index C so the confusion matrix is a dense (C+1) x (C+1) array with
gold on rows and predictions on columns. Macro F1 averages over all
C+1 one-vs-all problems, with empty classes scoring zero rather than
being skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

OPEN_LABEL = -1


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    f1_macro: float
    f1_known: float
    f1_open: float
    per_class_f1: tuple[float, ...]
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_macro": self.f1_macro,
            "f1_known": self.f1_known,
            "f1_open": self.f1_open,
            "per_class_f1": list(self.per_class_f1),
            "confusion": self.confusion.tolist(),
        }


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def evaluate(preds, golds, num_known: int | None = None) -> EvalReport:
    """Score predictions against golds, both using -1 for open.

    ``num_known`` pins the number of known categories; omitted, it is
    inferred as one past the largest label seen anywhere.
    """
    golds = np.asarray(golds, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if golds.ndim != 1 or golds.shape != preds.shape:
        raise ValidationError(
            f"golds and preds must be matching 1-D arrays, got shapes "
            f"{golds.shape} and {preds.shape}"
        )
    if golds.shape[0] == 0:
        raise ValidationError("cannot evaluate zero samples")
    if golds.min() < OPEN_LABEL or preds.min() < OPEN_LABEL:
        raise ValidationError("labels below the open sentinel -1")

    seen_max = int(max(golds.max(), preds.max()))
    if num_known is None:
        num_known = max(seen_max + 1, 0)
    elif seen_max >= num_known:
        raise ValidationError(f"label {seen_max} outside the declared {num_known} categories")

    c = num_known
    g = np.where(golds == OPEN_LABEL, c, golds)
    p = np.where(preds == OPEN_LABEL, c, preds)
    confusion = np.zeros((c + 1, c + 1), dtype=np.int64)
    np.add.at(confusion, (g, p), 1)

    per_class = []
    for k in range(c + 1):
        tp = int(confusion[k, k])
        fp = int(confusion[:, k].sum() - tp)
        fn = int(confusion[k, :].sum() - tp)
        per_class.append(_f1(tp, fp, fn))

    accuracy = float(np.trace(confusion) / golds.shape[0])
    f1_macro = float(np.mean(per_class))
    f1_known = float(np.mean(per_class[:c])) if c else 0.0
    f1_open = per_class[c]
    return EvalReport(
        accuracy=accuracy,
        f1_macro=f1_macro,
        f1_known=f1_known,
        f1_open=f1_open,
        per_class_f1=tuple(per_class),
        confusion=confusion,
    )

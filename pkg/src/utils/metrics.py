from dataclasses import dataclass
from typing import Dict

import numpy as np

from src.utils.errors import EvaluationError


@dataclass
class Scores:
    accuracy: float
    micro_f1: float
    macro_f1: float

    def as_dict(self) -> Dict[str, float]:
        return {"accuracy": self.accuracy, "micro_f1": self.micro_f1, "macro_f1": self.macro_f1}


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """counts[t, p] = number of samples of class t predicted as p."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise EvaluationError(f"y_true {y_true.shape} and y_pred {y_pred.shape} must be equal-length vectors")
    if y_true.size == 0:
        raise EvaluationError("cannot score an empty prediction set")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise EvaluationError(f"{name} has labels outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return counts


def _f1(tp, fp, fn) -> np.ndarray:
    denom = 2 * tp + fp + fn
    return np.divide(2 * tp, denom, out=np.zeros_like(denom, dtype=np.float64), where=denom > 0)


def metrics(y_true, y_pred, n_classes: int) -> Scores:
    """
    Accuracy, micro F1 (pooled TP/FP/FN) and macro F1 (unweighted mean of
    per-class F1; a class with 2TP+FP+FN = 0 scores 0).
    """
    counts = confusion_matrix(y_true, y_pred, n_classes)
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp

    accuracy = float(tp.sum() / counts.sum())
    micro = float(_f1(np.array(tp.sum()), np.array(fp.sum()), np.array(fn.sum())))
    macro = float(_f1(tp, fp, fn).mean())
    return Scores(accuracy=accuracy, micro_f1=micro, macro_f1=macro)

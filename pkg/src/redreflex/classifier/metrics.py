"""Evaluation metrics with abnormal as the positive class.

Every summary statistic is derived from the confusion counts by its textbook
formula; ROC-AUC uses the rank statistic with tie correction, equivalent to
the pairwise comparison count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .head import CLASSES, confidence_of, forward_batch, predict_label_index


def label_to_index(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label in (0, 1):
            return int(label)
        raise DataError(f"label index {label} outside {{0, 1}}")
    if label not in CLASSES:
        raise DataError(f"record with unusable label {label!r} in evaluation set")
    return CLASSES.index(label)


def rank_with_ties(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties averaged."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(y_true: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney AUC of the positive-class scores."""
    y = np.asarray(y_true, dtype=np.intp)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC-AUC needs both classes in the evaluation set")
    ranks = rank_with_ties(np.asarray(scores, dtype=np.float64))
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    specificity: float
    accuracy: float
    f1: float
    roc_auc: float
    probabilities: np.ndarray   # (N, 2), columns ordered (normal, abnormal)
    confidences: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray

    @classmethod
    def from_scores(cls, y_true, probabilities) -> "EvalReport":
        y = np.asarray(y_true, dtype=np.intp)
        probs = np.asarray(probabilities, dtype=np.float64)
        preds = np.fromiter((predict_label_index(p) for p in probs), dtype=np.intp,
                            count=len(probs))
        tp = int(np.sum((preds == 1) & (y == 1)))
        fp = int(np.sum((preds == 1) & (y == 0)))
        tn = int(np.sum((preds == 0) & (y == 0)))
        fn = int(np.sum((preds == 0) & (y == 1)))
        n = tp + fp + tn + fn
        return cls(
            tp=tp, fp=fp, tn=tn, fn=fn,
            precision=tp / (tp + fp) if tp + fp else 0.0,
            recall=tp / (tp + fn) if tp + fn else 0.0,
            specificity=tn / (tn + fp) if tn + fp else 0.0,
            accuracy=(tp + tn) / n if n else 0.0,
            f1=2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0,
            roc_auc=roc_auc(y, probs[:, 1]),
            probabilities=probs,
            confidences=probs.max(axis=1),
            y_true=y,
            y_pred=preds,
        )

    def metric_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall,
                "specificity": self.specificity, "accuracy": self.accuracy,
                "f1": self.f1, "roc_auc": self.roc_auc}


def predict_probabilities(model, images, providers) -> np.ndarray:
    """Softmax outputs for a list of 224x224 crops, for a single head or an
    ensemble. `providers` maps provider name to instance."""
    from .ensemble import Ensemble  # local import to avoid a cycle

    if isinstance(model, Ensemble):
        member_probs = [predict_probabilities(m, images, providers) for m in model.members]
        return np.mean(member_probs, axis=0)
    provider = providers[model.provider_name]
    feats = np.stack([provider.embed(img) for img in images])
    _, probs, _ = forward_batch(model, feats)
    return probs


def evaluate(model, samples, providers) -> EvalReport:
    """Score (image, label) pairs; images must already be 224x224 crops."""
    if not samples:
        raise DataError("evaluation set is empty")
    y = np.array([label_to_index(lab) for _, lab in samples], dtype=np.intp)
    probs = predict_probabilities(model, [img for img, _ in samples], providers)
    return EvalReport.from_scores(y, probs)


def confidence_and_prediction(probs: np.ndarray) -> tuple[int, float]:
    return predict_label_index(probs), confidence_of(probs)

"""Accuracy, balanced accuracy and confusion matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numcore import ContractError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with ground truth on rows and predictions on columns."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise ContractError(f"confusion matrix must be k x k, got {c.shape}")
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise ContractError("confusion counts must be nonnegative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_labels(cls, truth, pred, k: int) -> "ConfusionMatrix":
        truth, pred = np.asarray(truth, dtype=np.int64), np.asarray(pred, dtype=np.int64)
        if truth.shape != pred.shape:
            raise ContractError(f"{truth.shape[0]} labels vs {pred.shape[0]} predictions")
        if truth.size and (truth.min() < 0 or pred.min() < 0 or truth.max() >= k or pred.max() >= k):
            raise ContractError(f"labels must lie in [0, {k})")
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (truth, pred), 1)
        return cls(counts)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def positives(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def accuracy(self) -> float:
        if self.total == 0:
            raise ContractError("accuracy of an empty confusion matrix")
        return float(np.trace(self.counts) / self.total)

    def per_class_recall(self) -> list:
        """TP_i / P_i, or None for classes absent from the ground truth."""
        pos = self.positives
        return [None if pos[i] == 0 else float(self.counts[i, i] / pos[i]) for i in range(self.k)]

    def balanced_accuracy(self) -> float:
        """Mean recall over the classes that occur in the ground truth."""
        recalls = [r for r in self.per_class_recall() if r is not None]
        if not recalls:
            raise ContractError("balanced accuracy needs at least one class with positives")
        return float(np.mean(recalls))


def accuracy(cm: ConfusionMatrix) -> float:
    return cm.accuracy()


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    return cm.balanced_accuracy()


def report(cm: ConfusionMatrix) -> dict:
    return {
        "accuracy": cm.accuracy(),
        "balanced_accuracy": cm.balanced_accuracy(),
        "per_class_recall": cm.per_class_recall(),
        "confusion": cm.counts.tolist(),
        "n_samples": cm.total,
    }


def report_json(cm: ConfusionMatrix) -> str:
    return json.dumps(report(cm), indent=2)

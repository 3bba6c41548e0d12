"""
Confusion matrix and the accuracy measures derived from it: overall accuracy, the Kappa coefficient and the
frequency-weighted intersection over union. Counts stay exact integers until the final division.
"""

from __future__ import annotations

import logging
from fractions import Fraction
from typing import Any

import numpy as np
from cached_property import cached_property
from numpy.typing import NDArray

from crpmnet.shared.exceptions import DegenerateMetricError, EmptyMatrixError, IncompatibleDataError

logger = logging.getLogger(__name__)


class ConfusionMatrix:
    """N[i][j] counts labeled pixels of true class i predicted as class j (internal, 0-based indices)"""

    def __init__(self, counts: Any) -> None:
        matrix = np.asarray(counts)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise IncompatibleDataError(f"Confusion matrices are square, got shape {matrix.shape}")
        if (matrix < 0).any():
            raise IncompatibleDataError("Confusion counts must be non-negative")
        self.counts: list[list[int]] = [[int(v) for v in row] for row in matrix.tolist()]

    def __repr__(self) -> str:
        return f"ConfusionMatrix({self.counts})"

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        """Merge counts accumulated on separate regions"""
        if self.class_count != other.class_count:
            raise IncompatibleDataError("Cannot add confusion matrices of different sizes")
        return ConfusionMatrix(
            [[a + b for a, b in zip(row_a, row_b)] for row_a, row_b in zip(self.counts, other.counts)]
        )

    @property
    def class_count(self) -> int:
        return len(self.counts)

    @cached_property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    @cached_property
    def trace(self) -> int:
        return sum(self.counts[i][i] for i in range(self.class_count))

    @cached_property
    def row_totals(self) -> list[int]:
        return [sum(row) for row in self.counts]

    @cached_property
    def col_totals(self) -> list[int]:
        return [sum(row[j] for row in self.counts) for j in range(self.class_count)]

    def _require_counts(self) -> None:
        if self.total == 0:
            raise EmptyMatrixError("The confusion matrix is empty: no labeled pixels were compared")

    def overall_accuracy(self) -> float:
        self._require_counts()
        return float(Fraction(self.trace, self.total))

    def kappa(self) -> float:
        """(sum N_ii * N - sum row_i * col_i) / (N^2 - sum row_i * col_i)"""
        self._require_counts()
        chance = sum(r * c for r, c in zip(self.row_totals, self.col_totals))
        denominator = self.total * self.total - chance
        if denominator == 0:
            raise DegenerateMetricError("Kappa is undefined when the expected agreement is total")
        return float(Fraction(self.trace * self.total - chance, denominator))

    def fwiou(self) -> float:
        """sum_i (row_i / N) * N_ii / (row_i + col_i - N_ii); classes absent from truth and prediction are skipped"""
        self._require_counts()
        result = Fraction(0)
        for i in range(self.class_count):
            union = self.row_totals[i] + self.col_totals[i] - self.counts[i][i]
            if union == 0:
                continue
            result += Fraction(self.row_totals[i], self.total) * Fraction(self.counts[i][i], union)
        return float(result)

    def per_class_accuracy(self) -> list[float | None]:
        """N_ii / row_i, None for classes without labeled pixels"""
        return [
            float(Fraction(self.counts[i][i], row)) if row else None for i, row in enumerate(self.row_totals)
        ]

    def report(self) -> dict[str, Any]:
        """Fields in the order oa, kappa, fwiou, per_class_accuracy, confusion"""
        return {
            "oa": self.overall_accuracy(),
            "kappa": self.kappa(),
            "fwiou": self.fwiou(),
            "per_class_accuracy": self.per_class_accuracy(),
            "confusion": self.counts,
        }


def confusion(pred: NDArray[np.integer], labels: NDArray[np.integer], class_count: int | None = None) -> ConfusionMatrix:
    """
    Compare predicted classes with reference labels, both 1..K. Pixels labeled 0 are skipped; the class count
    defaults to the largest class in either map.
    """
    pred = np.asarray(pred).astype(np.int64)
    labels = np.asarray(labels).astype(np.int64)
    if pred.shape != labels.shape:
        raise IncompatibleDataError(f"Prediction {pred.shape} and labels {labels.shape} differ in shape")
    if class_count is None:
        class_count = int(max(pred.max(initial=0), labels.max(initial=0)))
    mask = labels > 0
    truth, guess = labels[mask] - 1, pred[mask] - 1
    if guess.size and (guess.min() < 0 or guess.max() >= class_count):
        raise IncompatibleDataError(f"Predicted classes must lie in 1..{class_count} at labeled pixels")
    if truth.size and truth.max() >= class_count:
        raise IncompatibleDataError(f"Reference classes must lie in 1..{class_count}")
    counts = np.bincount(truth * class_count + guess, minlength=class_count * class_count)
    logger.debug("Compared %d labeled pixels over %d classes", int(mask.sum()), class_count)
    return ConfusionMatrix(counts.reshape(class_count, class_count))

"""
Semantic segmentation metrics
=============================

Confusion counts are integers and every ratio is formed with
:class:`fractions.Fraction`, so results agree exactly with a per-pixel count.
Macro averages cover foreground classes that occur in the truth or the
prediction; background (class 0) only enters when no foreground class does.

.. autosummary::
    ~ConfusionMatrix
    ~accumulate_confusion
    ~semantic_metrics
"""

import logging
from fractions import Fraction
from typing import Dict, Iterable, List, Optional

import numpy as np

from ..errors import DatasetError, ShapeError
from ..models import IGNORE_INDEX, SemanticMetrics

logger = logging.getLogger(__name__)

BACKGROUND = 0


class ConfusionMatrix:
    """N x N pixel counts, rows are truth and columns are prediction"""

    def __init__(self, n_classes: int, counts: Optional[np.ndarray] = None):
        if n_classes < 1:
            raise ValueError("n_classes must be positive")
        self.n_classes = n_classes
        if counts is None:
            counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (n_classes, n_classes):
            raise ShapeError("confusion counts must be N x N", counts.shape)
        if np.any(counts < 0):
            raise ValueError("confusion counts must be non-negative")
        self.counts = counts

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.n_classes != self.n_classes:
            raise ShapeError("cannot add confusion matrices", self.counts.shape, other.counts.shape)
        return ConfusionMatrix(self.n_classes, self.counts + other.counts)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __repr__(self) -> str:
        return f"ConfusionMatrix(n_classes={self.n_classes}, total={self.total})"


def accumulate_confusion(
    pred: np.ndarray,
    truth: np.ndarray,
    n_classes: int,
    ignore_index: int = IGNORE_INDEX,
    into: Optional[ConfusionMatrix] = None,
) -> ConfusionMatrix:
    """Count (truth, prediction) pairs over non-ignored pixels, adding to ``into`` if given."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError("prediction and truth maps differ", pred.shape, truth.shape)
    valid = truth != ignore_index
    t = truth[valid].astype(np.int64)
    p = pred[valid].astype(np.int64)
    for name, values in (("truth", t), ("prediction", p)):
        if values.size and (values.min() < 0 or values.max() >= n_classes):
            raise DatasetError(f"{name} contains a class id outside [0, {n_classes})")
    counts = np.bincount(n_classes * t + p, minlength=n_classes * n_classes)
    cm = ConfusionMatrix(n_classes, counts.reshape(n_classes, n_classes))
    return cm if into is None else into + cm


def _ratio(num: int, den: int) -> Optional[Fraction]:
    return Fraction(num, den) if den else None


def semantic_metrics(cm: ConfusionMatrix) -> SemanticMetrics:
    if cm.total == 0:
        raise DatasetError("no evaluated pixels in confusion matrix")
    counts = cm.counts
    tp = np.diag(counts)
    truth_totals = counts.sum(axis=1)
    pred_totals = counts.sum(axis=0)

    per_class: Dict[int, Dict[str, Optional[float]]] = {}
    present: List[int] = []
    exact: Dict[int, Dict[str, Fraction]] = {}
    for c in range(cm.n_classes):
        hit, row, col = int(tp[c]), int(truth_totals[c]), int(pred_totals[c])
        precision = _ratio(hit, col)
        recall = _ratio(hit, row)
        iou = _ratio(hit, row + col - hit)
        per_class[c] = {
            "precision": None if precision is None else float(precision),
            "recall": None if recall is None else float(recall),
            "iou": None if iou is None else float(iou),
        }
        if row + col > 0:
            present.append(c)
            # a present class with no predictions (or no truth) scores zero there
            exact[c] = {
                "precision": precision or Fraction(0),
                "recall": recall or Fraction(0),
                "iou": iou or Fraction(0),
            }

    macro = [c for c in present if c != BACKGROUND] or present
    if macro != [c for c in present if c != BACKGROUND]:
        logger.debug("No foreground class present; macro averages include background")

    def macro_mean(key: str) -> Fraction:
        return sum((exact[c][key] for c in macro), Fraction(0)) / len(macro)

    precision = macro_mean("precision")
    recall = macro_mean("recall")
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else Fraction(0)
    return SemanticMetrics(
        pixel_accuracy=float(Fraction(int(tp.sum()), cm.total)),
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        miou=float(macro_mean("iou")),
        per_class=per_class,
    )


def evaluate_maps(
    pairs: Iterable, n_classes: int, ignore_index: int = IGNORE_INDEX
) -> SemanticMetrics:
    """Metrics over an iterable of (prediction, truth) map pairs."""
    cm = ConfusionMatrix(n_classes)
    for pred, truth in pairs:
        cm = accumulate_confusion(pred, truth, n_classes, ignore_index, into=cm)
    return semantic_metrics(cm)

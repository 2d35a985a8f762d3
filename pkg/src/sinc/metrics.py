"""Selection scores for estimated edge sets and coefficient supports.

Edges are scored over the unordered pairs i < j only; coefficient supports
over every entry. Ratios with a zero denominator are reported as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Tuple

import numpy as np

from .errors import UniverseMismatch


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


class Scores(NamedTuple):
    tpr: float
    fpr: float
    f1: float
    mcc: float


def _as_bool(a, name):
    arr = np.asarray(a)
    if arr.dtype != bool:
        if not np.all(np.isin(arr, (0, 1))):
            raise ValueError(f"{name} must contain only 0/1 values")
        arr = arr.astype(bool)
    return arr


def confusion(est, truth) -> ConfusionCounts:
    """Confusion counts of two boolean arrays over the same index universe."""
    est = _as_bool(est, "estimate")
    truth = _as_bool(truth, "truth")
    if est.shape != truth.shape:
        raise UniverseMismatch(f"estimate has shape {est.shape}, truth has {truth.shape}")
    tp = int(np.sum(est & truth))
    fp = int(np.sum(est & ~truth))
    fn = int(np.sum(~est & truth))
    tn = int(np.sum(~est & ~truth))
    return ConfusionCounts(tp, fp, fn, tn)


def upper_pairs(adjacency) -> np.ndarray:
    """Entries i < j of a square matrix, row by row."""
    A = np.asarray(adjacency)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise UniverseMismatch(f"adjacency must be square, got shape {A.shape}")
    return A[np.triu_indices(A.shape[0], 1)]


def confusion_edges(est_adjacency, true_adjacency) -> ConfusionCounts:
    """Confusion counts over the p(p-1)/2 unordered node pairs."""
    est = np.asarray(est_adjacency)
    truth = np.asarray(true_adjacency)
    if est.shape != truth.shape:
        raise UniverseMismatch(f"estimate has shape {est.shape}, truth has {truth.shape}")
    return confusion(upper_pairs(est), upper_pairs(truth))


def edge_set_to_adjacency(edges: Iterable[Tuple[int, int]], p: int) -> np.ndarray:
    """Symmetric boolean adjacency from (i, j) pairs (0-based)."""
    A = np.zeros((p, p), dtype=bool)
    for i, j in edges:
        if i == j:
            continue
        A[i, j] = A[j, i] = True
    return A


def _ratio(num, den):
    return num / den if den else 0.0


def scores(c: ConfusionCounts) -> Scores:
    """TPR, FPR, F1 and Matthews correlation of a confusion table."""
    tpr = _ratio(c.tp, c.tp + c.fn)
    fpr = _ratio(c.fp, c.fp + c.tn)
    f1 = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)
    # integer products keep the margin product exact before the square root
    margins = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    mcc = _ratio(c.tp * c.tn - c.fp * c.fn, float(np.sqrt(float(margins)))) if margins else 0.0
    return Scores(float(tpr), float(fpr), float(f1), float(mcc))


def roc_auc(points) -> float:
    """Trapezoidal area under (fpr, tpr) points joined to (0, 0) and (1, 1)."""
    pts = [(float(f), float(t)) for f, t in points]
    if not pts:
        raise ValueError("at least one ROC point is required")
    pts = sorted(pts + [(0.0, 0.0), (1.0, 1.0)])
    # exact rational sum: points on the diagonal integrate to exactly 1/2
    area = Fraction(0)
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (Fraction(x1) - Fraction(x0)) * (Fraction(y1) + Fraction(y0)) / 2
    return float(area)

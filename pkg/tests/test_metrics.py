from fractions import Fraction

import numpy as np
import pytest

from sinc.errors import UniverseMismatch
from sinc.metrics import (
    ConfusionCounts,
    confusion,
    confusion_edges,
    edge_set_to_adjacency,
    roc_auc,
    scores,
)


def test_identical_sets():
    truth = np.array([1, 0, 1, 0, 0], dtype=bool)
    c = confusion(truth, truth)
    assert (c.fp, c.fn, c.tp, c.tn) == (0, 0, 2, 3)


def test_empty_estimate():
    truth = np.array([1, 1, 0, 1, 0, 0, 0], dtype=bool)
    c = confusion(np.zeros(7, dtype=bool), truth)
    assert (c.tp, c.fn, c.tn, c.fp) == (0, 3, 4, 0)


def test_four_node_edges():
    truth = edge_set_to_adjacency([(0, 1), (2, 3)], 4)
    est = edge_set_to_adjacency([(0, 1), (0, 2)], 4)
    c = confusion_edges(est, truth)
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 3)
    assert c.total == 6


def test_edge_diagonal_ignored():
    truth = edge_set_to_adjacency([(0, 1)], 3)
    est = truth.copy()
    np.fill_diagonal(est, True)
    assert confusion_edges(est, truth) == ConfusionCounts(1, 0, 0, 2)


def test_universe_mismatch():
    with pytest.raises(UniverseMismatch):
        confusion(np.zeros(3, bool), np.zeros(4, bool))
    with pytest.raises(UniverseMismatch):
        confusion_edges(np.zeros((3, 3), bool), np.zeros((4, 4), bool))


def test_scores_direct_formulas():
    s = scores(ConfusionCounts(tp=2, fp=1, fn=1, tn=6))
    assert s.tpr == pytest.approx(2 / 3, rel=1e-15)
    assert s.fpr == pytest.approx(1 / 7, rel=1e-15)
    assert Fraction(s.f1).limit_denominator(1000) == Fraction(2, 3)
    assert Fraction(s.mcc).limit_denominator(1000) == Fraction(11, 21)
    assert s.mcc == pytest.approx(11 / 21, rel=1e-12)


def test_perfect_and_inverted():
    truth = np.array([1, 0, 1, 1, 0, 0], dtype=bool)
    assert tuple(scores(confusion(truth, truth))) == (1.0, 0.0, 1.0, 1.0)
    assert scores(confusion(~truth, truth)).mcc == -1.0


def test_zero_denominators_are_zero():
    s = scores(ConfusionCounts(0, 0, 0, 5))
    assert tuple(s) == (0.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize("points,expected", [
    ([(0.5, 1.0)], 0.75),
    ([(0.2, 0.2), (0.7, 0.7)], 0.5),
    ([(0.0, 1.0)], 1.0),
])
def test_auc_examples(points, expected):
    assert roc_auc(points) == pytest.approx(expected, rel=1e-15)


def test_auc_needs_points():
    with pytest.raises(ValueError):
        roc_auc([])

import numpy as np
import pytest

from projloss.metrics import (error_rate, mean_absolute_error, multilabel_accuracy,
                              multilabel_f1, ranking_hamming)


def test_perfect_predictions():
    perms = np.array([np.eye(3).ravel(), np.eye(3)[[1, 0, 2]].ravel()])
    assert ranking_hamming(perms, perms, 3) == 0
    assert mean_absolute_error([1, 2, 3], [1, 2, 3]) == 0
    ml = np.array([[1, 0, 1], [0, 0, 0]])
    assert multilabel_accuracy(ml, ml) == 100
    assert multilabel_f1(ml, ml) == 100
    assert error_rate([0, 1], [0, 1]) == 0


def test_ranking_swap_is_fifty():
    ident, swap = np.eye(2).ravel(), np.eye(2)[[1, 0]].ravel()
    assert ranking_hamming([ident, swap], [ident, ident], 2) == 50.0
    assert ranking_hamming([[0, 1], [1, 0]], [[0, 1], [0, 1]]) == 50.0


def test_ranking_rows_counted_once():
    # Two rows of a 3x3 matrix differ: two of three positions are wrong.
    truth = np.eye(3).ravel()
    pred = np.eye(3)[[1, 0, 2]].ravel()
    assert ranking_hamming([pred], [truth], 3) == pytest.approx(200 / 3)


def test_multilabel_partial():
    pred, truth = [[1, 1, 0]], [[1, 0, 0]]
    assert multilabel_accuracy(pred, truth) == pytest.approx(66.67, abs=0.01)
    assert multilabel_f1(pred, truth) == pytest.approx(66.67, abs=0.01)


def test_f1_empty_conventions():
    assert multilabel_f1([[0, 0]], [[0, 0]]) == 100
    assert multilabel_f1([[1, 0]], [[0, 0]]) == 0
    assert multilabel_f1([[0, 0]], [[0, 1]]) == 0


def test_mae_and_error():
    assert mean_absolute_error([0, 2], [1, 4]) == 1.5
    assert error_rate([0, 1, 1, 0], [0, 0, 1, 1]) == 50.0

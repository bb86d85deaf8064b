"""Target losses and dataset-level evaluation metrics.

Per-sample losses take 0-based labels and are computed directly from their
definitions (no decomposition), so they can serve as references for
:mod:`projloss.encoding`.  Aggregate metrics work on encoded predictions
and ground truth and are reported on a 0-100 scale, except MAE.
"""

import numpy as np

from .encoding import ndcg_normalizer, ndcg_weights


def zero_one_loss(yhat, y):
    return float(yhat != y)


def hamming_multilabel_loss(yhat, y):
    return float(len(set(yhat) ^ set(y)))


def hamming_ranking_loss(yhat, y):
    return float(sum(a != b for a, b in zip(yhat, y)))


def absolute_loss(yhat, y):
    return float(abs(yhat - y))


def ndcg_loss(perm, relevance):
    relevance = np.asarray(relevance, dtype=float)
    w = ndcg_weights(len(relevance))
    gain = float(relevance @ w[list(perm)])
    return 1.0 - gain / ndcg_normalizer(relevance, w)


def precision_at_k_loss(perm, relevance, k):
    relevance = np.asarray(relevance, dtype=float)
    k_eff = min(k, int(relevance.sum()))
    top = [i for i, pos in enumerate(perm) if pos < k]
    return 1.0 - float(relevance[top].sum()) / k_eff


def ranking_hamming(pred, truth, k=None):
    """100 x mean fraction of positions where the predicted ranking is wrong.

    Works on permutation matrices (flattened ``k*k``, compared row by row,
    so non-permutation decodings are scored too) or on rank vectors.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if k is not None and pred.shape[-1] == k * k:
        pred = pred.reshape(len(pred), k, k)
        truth = truth.reshape(len(truth), k, k)
        wrong = np.any(pred != truth, axis=-1)
    else:
        wrong = pred != truth
    return 100.0 * float(np.mean(wrong))


def mean_absolute_error(pred, truth):
    return float(np.mean(np.abs(np.asarray(pred, float) - np.asarray(truth, float))))


def multilabel_accuracy(pred, truth):
    """100 x mean per-label agreement (Hamming accuracy)."""
    pred = np.asarray(pred) > 0.5
    truth = np.asarray(truth) > 0.5
    return 100.0 * float(np.mean(pred == truth))


def multilabel_f1(pred, truth):
    """Example-based F1 averaged over samples.

    Both empty scores 100; exactly one empty scores 0.
    """
    pred = np.asarray(pred) > 0.5
    truth = np.asarray(truth) > 0.5
    inter = np.sum(pred & truth, axis=-1)
    denom = np.sum(pred, axis=-1) + np.sum(truth, axis=-1)
    f1 = np.where(denom == 0, 1.0, 2.0 * inter / np.maximum(denom, 1))
    return 100.0 * float(np.mean(f1))


def error_rate(pred, truth):
    return 100.0 * float(np.mean(np.asarray(pred) != np.asarray(truth)))

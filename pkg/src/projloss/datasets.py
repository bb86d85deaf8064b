"""Small built-in datasets used by the experiments and tests."""

import os

import numpy as np
from sklearn.datasets import load_iris
from sklearn.naive_bayes import GaussianNB

from .dataio import RawDataset, parse_ranking_csv

IRIS_PATH_ENV = "PROJLOSS_IRIS_PATH"


def iris_ranking():
    """Iris as a label-ranking problem over its three classes.

    Read from ``$PROJLOSS_IRIS_PATH`` (ranking CSV) when set.  Otherwise it
    is rebuilt from the bundled classification data the usual way: a
    Gaussian naive Bayes model fitted on all samples ranks the classes of
    each sample by predicted probability, ties going to the lower index.
    """
    path = os.environ.get(IRIS_PATH_ENV)
    if path:
        return parse_ranking_csv(path, 3)
    data = load_iris()
    proba = GaussianNB().fit(data.data, data.target).predict_proba(data.data)
    order = np.argsort(-proba, axis=1, kind="stable")
    perms = np.empty_like(order)
    rows = np.arange(len(order))[:, None]
    perms[rows, order] = np.arange(order.shape[1])
    return RawDataset(data.data, [tuple(int(v) for v in p) for p in perms],
                      "ranking", 3)


def synthetic_ordinal(n=500, n_features=5, k=5, noise=0.5, seed=0):
    """Levels from a noisy linear score cut at its empirical quantiles."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n_features))
    w = rng.normal(size=n_features)
    score = X @ w
    score = score / score.std() + noise * rng.normal(size=n)
    cuts = np.quantile(score, np.linspace(0, 1, k + 1)[1:-1])
    y = np.searchsorted(cuts, score)
    return RawDataset(X, [int(v) for v in y], "ordinal", k)


def separable_multiclass(n=60, k=2, seed=0):
    """Well-separated Gaussian blobs, one per class."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % k
    centers = 10.0 * np.eye(k, max(k, 2))
    X = centers[y] + rng.normal(scale=0.5, size=(n, centers.shape[1]))
    return RawDataset(X, [int(v) for v in y], "multiclass", k)


def synthetic_multilabel(n=200, n_features=6, k=5, seed=0):
    """Labels switched on by thresholding noisy linear scores."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n_features))
    W = rng.normal(size=(k, n_features))
    scores = X @ W.T + 0.3 * rng.normal(size=(n, k)) - 1.0
    labels = [tuple(int(j) for j in np.flatnonzero(s > 0)) for s in scores]
    return RawDataset(X, labels, "multilabel", k)


BUILTIN = {
    "iris": iris_ranking,
    "synthetic_ordinal": synthetic_ordinal,
    "separable": separable_multiclass,
    "synthetic_multilabel": synthetic_multilabel,
}

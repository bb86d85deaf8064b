"""Linear models trained with projection-based Fenchel-Young losses.

The estimator follows the scikit-learn protocol: ``fit`` minimizes

    (1/n) sum_i S(W x_i, phi(y_i)) + (lam/2) ||W||_F^2

with L-BFGS, ``transform`` returns the projections ``mu = P(W x)`` and
``predict`` applies the calibrated decoding of the task's target loss.
Model selection over a grid of ``lam`` values, feature standardization and
the train/validation/test split live in :func:`fit_select` and
:func:`split`.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_array, check_is_fitted

from . import metrics
from .dataio import load_model, save_model
from .encoding import (calibrated_decode, decode_vertex, decomposition_for,
                       default_loss, encode, encode_many, multilabel_budget)
from .errors import DimensionMismatch, InvalidDataset, ProjLossError
from .geometry import Geometry
from .losses import fy_loss
from .optim import lbfgs_minimize
from .polytopes import Kind, Polytope
from .projections import project

TASKS = ("multiclass", "multilabel", "ranking", "ordinal")
DEFAULT_LAMBDA_GRID = tuple(np.logspace(-4, 4, 10))

# Set each task projects onto and decodes over when none is given.
MARGINAL_SET = {
    "multiclass": "simplex",
    "multilabel": "cube",
    "ranking": "birkhoff",
    "ordinal": "order_simplex",
}


def _check_task(task):
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {task!r}")
    return task


def infer_n_labels(task, labels):
    """Smallest label count consistent with 0-based ``labels``."""
    _check_task(task)
    if task == "ranking":
        return len(labels[0])
    if task == "multilabel":
        return 1 + max((max(y) for y in labels if len(y)), default=0)
    return 1 + int(max(labels))


def task_set(task, name, k, budget=None, weights=None):
    """Build the named set in the task's encoding coordinates.

    Ranking uses ``k x k`` permutation matrices, so the cube and the full
    space become ``k**2``-dimensional there; the permutahedron instead works
    on ``k`` scores.  Ordinal tasks use the ``k - 1`` thresholds.
    """
    _check_task(task)
    kind = Kind(str(name).lower().replace("-", "_"))
    if task == "ranking":
        if kind in (Kind.BIRKHOFF, Kind.ROW_STOCHASTIC):
            return Polytope.from_name(kind.value, k)
        if kind is Kind.PERMUTAHEDRON:
            return Polytope.from_name(kind.value, k, weights=weights)
        dim = k * k
    elif task == "ordinal":
        if kind is Kind.ORDER_SIMPLEX:
            return Polytope.order_simplex(k)
        dim = k - 1
    else:
        dim = k
    if kind is Kind.KNAPSACK:
        lower, upper = budget if budget is not None else (0, dim)
        return Polytope.knapsack(dim, lower, upper)
    if kind in (Kind.SIMPLEX, Kind.CUBE, Kind.FULL_SPACE):
        return Polytope.from_name(kind.value, dim)
    raise DimensionMismatch(f"set {kind.value!r} does not fit a {task} task")


def target_set(task, k, weights=None):
    """Set in which the ground-truth encodings live."""
    if task == "ranking" and weights is not None:
        return Polytope.permutahedron(weights)
    return task_set(task, MARGINAL_SET[task], k)


def objective_and_grad(W, X, T, spec, geometry, lam, penalty_mask=None,
                       project_kw=None):
    """Regularized empirical risk and its gradient with respect to ``W``.

    ``W`` is ``(p, d)``, ``X`` is ``(n, d)`` and ``T`` holds the ``n``
    encoded targets.  ``penalty_mask`` (same shape as ``W``) excludes
    entries such as an intercept column from the ridge term.  Errors raised
    by the projection name the offending sample.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise InvalidDataset("cannot evaluate the objective on zero samples")
    project_kw = {"strict": False, **(project_kw or {})}
    theta = X @ W.T
    try:
        ev = fy_loss(spec, geometry, theta, T, check=False, **project_kw)
    except ProjLossError as exc:
        raise _locate_failure(exc, spec, geometry, theta, T, project_kw) from exc
    Wp = W if penalty_mask is None else W * penalty_mask
    value = float(np.mean(ev.value)) + 0.5 * lam * float(np.sum(Wp * Wp))
    grad = ev.gradient.T @ X / n + lam * Wp
    return value, grad


def _locate_failure(exc, spec, geometry, theta, T, project_kw):
    for i in range(theta.shape[0]):
        try:
            fy_loss(spec, geometry, theta[i], T[i], check=False, **project_kw)
        except ProjLossError as inner:
            return type(inner)(f"sample {i}: {inner}")
    return exc


class ProjectionLossEstimator(BaseEstimator):
    """Linear structured predictor trained with a projection loss.

    Parameters
    ----------
    task : {"multiclass", "multilabel", "ranking", "ordinal"}
    projection : str, optional
        Set used inside the loss (``"full"`` gives the squared loss).
        Defaults to the task's marginal polytope.
    decoding : str, optional
        Set over which predictions are decoded; defaults to the marginal
        polytope.
    geometry : {"euclidean", "kl"}
    loss : str, optional
        Target loss defining the calibrated decoding; defaults to the loss
        paired with the decoding set (zero-one, Hamming or absolute).
    lam : float
        Ridge strength.
    fit_intercept : bool
        Append a constant feature.  Its weights are penalized like the
        others: on the Birkhoff polytope the loss is blind to adding row and
        column constants to ``theta``, so an unpenalized bias would have
        flat directions.
    n_labels : int, optional
        Number of classes / labels / items / ordinal levels; inferred from
        the training labels when omitted.
    budget : (int, int), optional
        Knapsack bounds; when omitted they are set from the label sizes.
    weights : sequence, optional
        Permutahedron weights for ranking with the permutahedron.
    memory, grad_tol, max_iter
        L-BFGS settings.

    Labels are 0-based: ``int`` for multiclass and ordinal, tuples of label
    indices for multilabel, and ``perm`` tuples (``perm[i]`` = position of
    item ``i``) for ranking.
    """

    def __init__(self, task="multiclass", projection=None, decoding=None,
                 geometry="euclidean", loss=None, lam=1.0, fit_intercept=True,
                 n_labels=None, budget=None, weights=None, memory=10,
                 grad_tol=1e-6, max_iter=500):
        self.task = task
        self.projection = projection
        self.decoding = decoding
        self.geometry = geometry
        self.loss = loss
        self.lam = lam
        self.fit_intercept = fit_intercept
        self.n_labels = n_labels
        self.budget = budget
        self.weights = weights
        self.memory = memory
        self.grad_tol = grad_tol
        self.max_iter = max_iter

    def _resolve(self, y):
        task = _check_task(self.task)
        k = self.n_labels or infer_n_labels(task, y)
        budget = self.budget
        names = (self.projection or MARGINAL_SET[task], self.decoding or MARGINAL_SET[task])
        if budget is None and "knapsack" in names:
            if task != "multilabel":
                raise ValueError("knapsack needs an explicit budget outside multilabel")
            budget = multilabel_budget(y, k)
        proj = task_set(task, names[0], k, budget, self.weights)
        dec = task_set(task, names[1], k, budget, self.weights)
        if dec.kind is Kind.FULL_SPACE:
            raise ValueError("the full space cannot be used for decoding")
        if proj.ambient_dim != dec.ambient_dim:
            raise DimensionMismatch(
                f"{proj.describe()} and {dec.describe()} use different encodings")
        weights = dec.weights if dec.kind is Kind.PERMUTAHEDRON else None
        if proj.kind is Kind.PERMUTAHEDRON:
            weights = proj.weights
        return k, proj, dec, target_set(task, k, weights)

    def _design(self, X):
        X = check_array(X, dtype=float)
        if self.fit_intercept:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        return X

    def fit(self, X, y):
        y = list(y)
        X = self._design(X)
        if X.shape[0] == 0:
            raise InvalidDataset("cannot fit on zero samples")
        if len(y) != X.shape[0]:
            raise InvalidDataset(f"{X.shape[0]} samples but {len(y)} labels")
        self.n_labels_, self.projection_set_, self.decoding_set_, self.target_set_ = \
            self._resolve(y)
        self.geometry_ = Geometry.parse(self.geometry)
        self.decomposition_ = (
            decomposition_for(self.loss, self.decoding_set_.k) if self.loss
            else default_loss(self.decoding_set_))
        T = encode_many(self.target_set_, y)
        p, d = T.shape[1], X.shape[1]

        def fun(w):
            value, grad = objective_and_grad(w.reshape(p, d), X, T, self.projection_set_,
                                             self.geometry_, self.lam)
            return value, grad.ravel()

        res = lbfgs_minimize(fun, np.zeros(p * d), memory=self.memory,
                             grad_tol=self.grad_tol, max_iter=self.max_iter)
        self.coef_ = res.x.reshape(p, d)
        self.n_features_in_ = d - int(self.fit_intercept)
        self.optim_ = res
        return self

    def decision_function(self, X):
        """Raw scores ``theta = W x``."""
        check_is_fitted(self, "coef_")
        return self._design(X) @ self.coef_.T

    def transform(self, X):
        """Projections ``mu = P(W x)`` onto the training set."""
        theta = self.decision_function(X)
        return project(self.projection_set_, self.geometry_, theta, strict=False).mu

    def predict_encoded(self, X):
        """Decoded outputs as vertices of the decoding set, one row per sample."""
        mu = self.transform(X)
        return np.array([encode(self.decoding_set_, self._decode(u)) for u in mu])

    def predict(self, X):
        return [self._decode(u) for u in self.transform(X)]

    def _decode(self, u):
        return calibrated_decode(self.decomposition_, self.decoding_set_, u)

    def evaluate(self, X, y):
        """Task metrics of the decoded predictions against labels ``y``."""
        check_is_fitted(self, "coef_")
        return task_metrics(self.task, self.decoding_set_, self.target_set_,
                            self.predict_encoded(X), list(y), self.n_labels_)

    def score(self, X, y):
        """Negative selection metric, so that larger is better."""
        return -selection_metric(self.task, self.evaluate(X, y))


def task_metrics(task, decoding_set, target_spec, pred_encoded, labels, k):
    """Metrics from decoded vertices and 0-based ground-truth labels."""
    if task == "ranking":
        if decoding_set.kind is Kind.PERMUTAHEDRON:
            pred = np.array([decode_vertex(decoding_set, v) for v in pred_encoded])
            return {"hamming": metrics.ranking_hamming(pred, np.array(labels))}
        truth = encode_many(Polytope.birkhoff(k), labels)
        return {"hamming": metrics.ranking_hamming(pred_encoded, truth, k)}
    if task == "ordinal":
        pred = np.rint(pred_encoded.sum(axis=1))
        return {"mae": metrics.mean_absolute_error(pred, labels)}
    if task == "multilabel":
        truth = encode_many(Polytope.cube(k), labels)
        return {"accuracy": metrics.multilabel_accuracy(pred_encoded, truth),
                "f1": metrics.multilabel_f1(pred_encoded, truth)}
    pred = np.argmax(pred_encoded, axis=1)
    return {"error": metrics.error_rate(pred, labels)}


def selection_metric(task, scores):
    """Lower-is-better value used to choose ``lam`` on validation data."""
    if task == "ranking":
        return scores["hamming"]
    if task == "ordinal":
        return scores["mae"]
    if task == "multilabel":
        return 100.0 - scores["f1"]
    return scores["error"]


SELECTION_METRIC_NAMES = {"ranking": "hamming", "ordinal": "mae",
                          "multilabel": "100-f1", "multiclass": "error"}


class RoundingRidge(BaseEstimator):
    """Ordinal baseline: ridge regression on the level, rounded and clipped.

    Minimizes ``(1/n) sum (w.x + b - y)^2 / 2 + lam ||w||^2 / 2`` in closed
    form (the intercept is not penalized).
    """

    def __init__(self, lam=1.0, n_labels=None):
        self.lam = lam
        self.n_labels = n_labels

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.shape[0] == 0:
            raise InvalidDataset("cannot fit on zero samples")
        n, d = X.shape
        x_mean, y_mean = X.mean(axis=0), y.mean()
        Xc = X - x_mean
        A = Xc.T @ Xc / n + self.lam * np.eye(d)
        self.coef_ = np.linalg.solve(A, Xc.T @ (y - y_mean) / n)
        self.intercept_ = y_mean - x_mean @ self.coef_
        self.n_labels_ = self.n_labels or int(y.max()) + 1
        self.n_features_in_ = d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X, dtype=float) @ self.coef_ + self.intercept_

    def predict(self, X):
        raw = np.rint(self.decision_function(X))
        return np.clip(raw, 0, self.n_labels_ - 1).astype(int).tolist()

    def evaluate(self, X, y):
        return {"mae": metrics.mean_absolute_error(self.predict(X), y)}

    def score(self, X, y):
        return -self.evaluate(X, y)["mae"]


@dataclass
class TrainConfig:
    """Everything needed to build and select the model of one experiment cell."""

    task: str = "multiclass"
    projection: str = None
    decoding: str = None
    geometry: str = "euclidean"
    loss: str = None
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    memory: int = 10
    grad_tol: float = 1e-6
    max_iter: int = 500
    fit_intercept: bool = True
    n_labels: int = None
    budget: tuple = None
    weights: tuple = None
    baseline: str = None

    def __post_init__(self):
        _check_task(self.task)
        self.lambda_grid = tuple(float(v) for v in self.lambda_grid)
        if not self.lambda_grid or any(v <= 0 for v in self.lambda_grid):
            raise ValueError("lambda_grid must be a nonempty list of positive values")

    def build(self, lam):
        """Unfitted standardize-then-predict pipeline for one ``lam``."""
        if self.baseline == "rounding_ridge":
            est = RoundingRidge(lam=lam, n_labels=self.n_labels)
        elif self.baseline is None:
            est = ProjectionLossEstimator(
                task=self.task, projection=self.projection, decoding=self.decoding,
                geometry=self.geometry, loss=self.loss, lam=lam,
                fit_intercept=self.fit_intercept, n_labels=self.n_labels,
                budget=self.budget, weights=self.weights, memory=self.memory,
                grad_tol=self.grad_tol, max_iter=self.max_iter)
        else:
            raise ValueError(f"unknown baseline {self.baseline!r}")
        return Pipeline([("scale", StandardScaler()), ("model", est)])

    def to_dict(self):
        d = dict(self.__dict__)
        d["lambda_grid"] = list(self.lambda_grid)
        for key in ("budget", "weights"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


def evaluate_model(model, X, y):
    return model[-1].evaluate(model[:-1].transform(X), y)


@dataclass
class SelectionResult:
    model: Pipeline
    lam: float
    val_metric: float
    metric_name: str
    val_scores: list = field(default_factory=list)


def fit_select(train, val, cfg):
    """Choose ``lam`` on ``val`` then refit on ``train`` and ``val`` together.

    The lowest validation metric wins; ties go to the smaller ``lam``.
    With a single-value grid the selection step is skipped.
    """
    if cfg.n_labels is None:
        cfg = replace(cfg, n_labels=train.n_labels)
    grid = sorted(cfg.lambda_grid)
    task = "ordinal" if cfg.baseline == "rounding_ridge" else cfg.task
    scores = []
    if len(grid) > 1:
        for lam in grid:
            model = cfg.build(lam).fit(train.features, train.labels)
            scores.append(selection_metric(task, evaluate_model(model, val.features,
                                                                val.labels)))
        best = int(np.argmin(scores))  # first minimum, i.e. the smallest lam
    else:
        best = 0
    both = train.concat(val)
    model = cfg.build(grid[best]).fit(both.features, both.labels)
    val_metric = scores[best] if scores else selection_metric(
        task, evaluate_model(model, val.features, val.labels))
    return SelectionResult(model, grid[best], val_metric,
                           SELECTION_METRIC_NAMES[task], scores)


def standardize(train_features, *others):
    """Standardize with train statistics; constant columns are only centered."""
    scaler = StandardScaler().fit(train_features)
    return tuple(scaler.transform(x) for x in (train_features,) + others)


def split(dataset, seed, test_fraction=0.2, val_fraction=0.25):
    """Seeded train/validation/test split.

    Without a declared test partition, ``test_fraction`` of the samples are
    held out for testing and ``val_fraction`` of the remainder for
    validation (60/20/20 by default).
    """
    n = len(dataset.labels)
    rng = np.random.default_rng(seed)
    if dataset.declared_test is not None:
        test_idx = np.flatnonzero(dataset.declared_test)
        rest = rng.permutation(np.flatnonzero(~dataset.declared_test))
    else:
        order = rng.permutation(n)
        n_test = int(round(test_fraction * n))
        test_idx, rest = np.sort(order[:n_test]), order[n_test:]
    n_val = int(round(val_fraction * len(rest)))
    val_idx, train_idx = np.sort(rest[:n_val]), np.sort(rest[n_val:])
    return dataset.subset(train_idx), dataset.subset(val_idx), dataset.subset(test_idx)


def save_pipeline(path, model, extra=None):
    """Persist a fitted standardize-then-predict pipeline."""
    scaler, est = model[0], model[-1]
    arrays = {"scale_mean": scaler.mean_, "scale_scale": scaler.scale_}
    header = {"extra": extra or {}}
    if isinstance(est, RoundingRidge):
        header.update(estimator="rounding_ridge", task="ordinal",
                      params={"lam": est.lam, "n_labels": est.n_labels_})
        arrays.update(coef=est.coef_, intercept=np.atleast_1d(est.intercept_))
    else:
        params = est.get_params()
        params["n_labels"] = est.n_labels_
        for key in ("budget", "weights"):
            if params[key] is not None:
                params[key] = [float(v) for v in params[key]]
        header.update(estimator="projection_loss", task=est.task, params=params,
                      projection_set=est.projection_set_.to_dict(),
                      decoding_set=est.decoding_set_.to_dict(),
                      geometry=est.geometry_.value)
        arrays["coef"] = est.coef_
    save_model(path, header, arrays)


def load_pipeline(path):
    """Inverse of :func:`save_pipeline`; returns ``(pipeline, header)``."""
    header, arrays = load_model(path)
    scaler = StandardScaler()
    scaler.mean_ = arrays["scale_mean"]
    scaler.scale_ = arrays["scale_scale"]
    scaler.var_ = scaler.scale_ ** 2
    scaler.n_features_in_ = scaler.mean_.shape[0]
    params = header["params"]
    if header["estimator"] == "rounding_ridge":
        est = RoundingRidge(**params)
        est.coef_ = arrays["coef"]
        est.intercept_ = float(arrays["intercept"][0])
        est.n_labels_ = params["n_labels"]
        est.n_features_in_ = est.coef_.shape[0]
    else:
        if params.get("budget") is not None:
            params["budget"] = tuple(int(v) for v in params["budget"])
        est = ProjectionLossEstimator(**params)
        est.coef_ = arrays["coef"]
        est.n_labels_ = params["n_labels"]
        est.projection_set_ = Polytope.from_dict(header["projection_set"])
        est.decoding_set_ = Polytope.from_dict(header["decoding_set"])
        weights = None
        for spec in (est.decoding_set_, est.projection_set_):
            if spec.kind is Kind.PERMUTAHEDRON:
                weights = spec.weights
        est.target_set_ = target_set(est.task, est.n_labels_, weights)
        est.geometry_ = Geometry.parse(header["geometry"])
        est.decomposition_ = (decomposition_for(est.loss, est.decoding_set_.k) if est.loss
                              else default_loss(est.decoding_set_))
        est.n_features_in_ = est.coef_.shape[1] - int(est.fit_intercept)
    return Pipeline([("scale", scaler), ("model", est)]), header

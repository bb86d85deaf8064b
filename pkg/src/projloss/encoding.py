"""Label encodings, MAP oracles, target-loss decompositions and decoding.

Labels are 0-based Python values:

* simplex / order simplex: ``int`` class index;
* cube / knapsack: sorted ``tuple`` of active label indices;
* Birkhoff / row-stochastic / permutahedron: ``tuple`` ``perm`` with
  ``perm[i]`` the position assigned to item ``i`` (row-stochastic labels
  need not be bijections).

Every target loss ``L`` handled here is written as
``L(yhat, y) = <psi(yhat), V phi(y) + b> + c(y)`` so that the decoding which
minimizes the expected loss at a point ``u`` is ``MAP(-V u - b)``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, InvalidLabel, UnknownLoss
from .polytopes import Kind, Polytope, assignment, check_dim, enumerate_vertices, lmo

GENERAL_LOSS_MAX_OUTPUTS = 12


def _as_int(y, k, what="label"):
    if isinstance(y, (bool, np.bool_)) or not isinstance(y, (int, np.integer)):
        raise InvalidLabel(f"{what} must be an integer, got {y!r}")
    y = int(y)
    if not 0 <= y < k:
        raise InvalidLabel(f"{what} {y} out of range [0, {k})")
    return y


def _as_perm(y, k, bijection=True):
    y = tuple(int(v) for v in y)
    if len(y) != k:
        raise InvalidLabel(f"expected {k} entries, got {len(y)}")
    if any(not 0 <= v < k for v in y):
        raise InvalidLabel(f"entries of {y} out of range [0, {k})")
    if bijection and len(set(y)) != k:
        raise InvalidLabel(f"{y} is not a permutation")
    return y


def encode(spec, y):
    """Encoding ``phi(y)``: a vertex of ``spec``."""
    kind, k = spec.kind, spec.k
    if kind is Kind.SIMPLEX:
        out = np.zeros(k)
        out[_as_int(y, k)] = 1.0
        return out
    if kind is Kind.ORDER_SIMPLEX:
        out = np.zeros(k - 1)
        out[:_as_int(y, k)] = 1.0
        return out
    if kind in (Kind.CUBE, Kind.KNAPSACK):
        idx = sorted({_as_int(i, k) for i in y})
        if kind is Kind.KNAPSACK and not spec.lower <= len(idx) <= spec.upper:
            raise InvalidLabel(
                f"label set of size {len(idx)} violates budget "
                f"[{spec.lower}, {spec.upper}]")
        out = np.zeros(k)
        out[idx] = 1.0
        return out
    if kind in (Kind.BIRKHOFF, Kind.ROW_STOCHASTIC):
        perm = _as_perm(y, k, bijection=kind is Kind.BIRKHOFF)
        mat = np.zeros((k, k))
        mat[np.arange(k), perm] = 1.0
        return mat.ravel()
    if kind is Kind.PERMUTAHEDRON:
        perm = _as_perm(y, k)
        return np.asarray(spec.weights)[list(perm)]
    raise InvalidLabel("the full space has no label encoding")


def encode_many(spec, labels):
    return np.array([encode(spec, y) for y in labels]).reshape(len(labels), spec.ambient_dim)


def decode_vertex(spec, v):
    """Inverse of :func:`encode` on vertices."""
    v = check_dim(spec, v)
    kind, k = spec.kind, spec.k
    if kind is Kind.SIMPLEX:
        return int(np.argmax(v))
    if kind is Kind.ORDER_SIMPLEX:
        return int(round(v.sum()))
    if kind in (Kind.CUBE, Kind.KNAPSACK):
        return tuple(int(i) for i in np.flatnonzero(v > 0.5))
    if kind in (Kind.BIRKHOFF, Kind.ROW_STOCHASTIC):
        return tuple(int(j) for j in np.argmax(v.reshape(k, k), axis=1))
    if kind is Kind.PERMUTAHEDRON:
        # Rank of each coordinate; stable for repeated weights.
        order = np.argsort(-v, kind="stable")
        perm = np.empty(k, dtype=int)
        perm[order] = np.arange(k)
        return tuple(int(p) for p in perm)
    raise InvalidLabel("the full space has no label encoding")


def map_oracle(spec, theta):
    """Highest-scoring structure ``argmax_y <theta, phi(y)>``."""
    theta = check_dim(spec, theta)
    if spec.kind is Kind.BIRKHOFF:
        return tuple(int(j) for j in hungarian(theta.reshape(spec.k, spec.k)))
    return decode_vertex(spec, lmo(spec, theta))


def hungarian(profit):
    """Permutation maximizing ``sum_i profit[i, perm[i]]`` (exact)."""
    return assignment(profit)


def enumerate_structures(spec, cap=10**4):
    """All labels of ``spec`` paired with their encodings."""
    verts = enumerate_vertices(spec, cap)
    return [decode_vertex(spec, v) for v in verts], verts


@dataclass
class LossDecomposition:
    """Affine decomposition ``L(yhat, y) = <psi(yhat), V phi(y) + b> + c(y)``.

    ``c`` receives the encoded ground truth ``phi(y)``.  ``output_spec`` is
    the set over which decoding maximizes (its vertices are ``psi(yhat)``).
    """

    name: str
    V: np.ndarray
    b: np.ndarray
    c: Callable
    output_spec: Polytope
    encode_target: Callable = None
    encode_output: Callable = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.encode_target is None:
            self.encode_target = lambda y: encode(self.output_spec, y)
        if self.encode_output is None:
            self.encode_output = lambda y: encode(self.output_spec, y)

    def evaluate(self, yhat, y):
        psi_hat = self.encode_output(yhat)
        phi = self.encode_target(y)
        return float(psi_hat @ (self.V @ phi + self.b) + self.c(phi))

    def scores(self, u):
        """Input of the MAP oracle used for calibrated decoding."""
        u = np.asarray(u, dtype=float)
        return -(u @ self.V.T) - self.b


def _sum_c(phi):
    return float(np.sum(phi))


def _zero(phi):
    return 0.0


def zero_one(k):
    return LossDecomposition("zero_one", 1.0 - np.eye(k), np.zeros(k), _zero,
                             Polytope.simplex(k))


def hamming_multilabel(k, lower=None, upper=None):
    spec = Polytope.cube(k) if lower is None else Polytope.knapsack(k, lower, upper)
    # Ground truth may exceed the budget; encode it on the cube.
    cube = Polytope.cube(k)
    return LossDecomposition("hamming_multilabel", -2.0 * np.eye(k), np.ones(k),
                             _sum_c, spec, encode_target=lambda y: encode(cube, y))


def hamming_ranking(k, spec=None):
    spec = Polytope.birkhoff(k) if spec is None else spec
    p = k * k
    return LossDecomposition("hamming_ranking", -np.eye(p), np.zeros(p),
                             lambda phi: float(k), spec)


def absolute(k):
    return LossDecomposition("absolute", -2.0 * np.eye(k - 1), np.ones(k - 1),
                             _sum_c, Polytope.order_simplex(k))


def plain_map(spec):
    """``V = -I, b = 0``: decoding is MAP on the point itself."""
    p = spec.ambient_dim
    return LossDecomposition("map", -np.eye(p), np.zeros(p), _zero, spec)


def ndcg_weights(m):
    return 1.0 / np.log2(1.0 + np.arange(1, m + 1))


def ndcg_normalizer(relevance, w):
    n = float(np.sort(np.asarray(relevance, dtype=float))[::-1] @ w)
    if n <= 0:
        raise InvalidLabel("NDCG is undefined for an all-zero relevance vector")
    return n


def ndcg(m):
    """NDCG over ``m`` documents with discounts ``1 / log2(1 + i)``.

    Outputs are rankings (permutahedron of the discounts); targets are
    integer relevance vectors encoded as ``y / N(y)``.
    """
    w = ndcg_weights(m)
    spec = Polytope.permutahedron(w)

    def encode_target(y):
        y = np.asarray(y, dtype=float)
        if y.shape != (m,) or np.any(y < 0) or np.any(y != np.round(y)):
            raise InvalidLabel(f"expected {m} nonnegative integer relevances")
        return y / ndcg_normalizer(y, w)

    return LossDecomposition("ndcg", -np.eye(m), np.zeros(m), lambda phi: 1.0,
                             spec, encode_target=encode_target,
                             params={"weights": w})


def precision_at_k(m, k):
    """Precision at ``k``; ``k`` is replaced by ``|y|`` when fewer are relevant."""
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= m, got k={k}, m={m}")
    w = np.concatenate([np.ones(k), np.zeros(m - k)])
    spec = Polytope.permutahedron(w)

    def encode_target(y):
        y = np.asarray(y, dtype=float)
        if y.shape != (m,) or not np.all((y == 0) | (y == 1)):
            raise InvalidLabel(f"expected a binary relevance vector of length {m}")
        denom = min(k, int(y.sum()))
        if denom == 0:
            raise InvalidLabel("precision@k needs at least one relevant item")
        return y / denom

    return LossDecomposition("precision_at_k", -np.eye(m), np.zeros(m),
                             lambda phi: 1.0, spec, encode_target=encode_target,
                             params={"k": k})


def general(loss_matrix):
    """Arbitrary loss over small finite spaces: ``V[yhat, y] = L(yhat, y)``."""
    V = np.asarray(loss_matrix, dtype=float)
    n_out, n_in = V.shape
    if max(n_out, n_in) > GENERAL_LOSS_MAX_OUTPUTS:
        raise ValueError(
            f"general loss matrices are limited to {GENERAL_LOSS_MAX_OUTPUTS} "
            "structures per side")
    in_spec = Polytope.simplex(n_in)
    return LossDecomposition("general", V, np.zeros(n_out), _zero,
                             Polytope.simplex(n_out),
                             encode_target=lambda y: encode(in_spec, y))


_FACTORIES = {
    "zero_one": zero_one,
    "hamming_multilabel": hamming_multilabel,
    "hamming_ranking": hamming_ranking,
    "absolute": absolute,
    "ndcg": ndcg,
    "precision_at_k": precision_at_k,
    "general": general,
}


def decomposition_for(name, *args, **kwargs):
    """Look up a decomposition factory by name, e.g. ``("absolute", 5)``."""
    if name == "map":
        return plain_map(*args, **kwargs)
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise UnknownLoss(f"unknown target loss {name!r}") from None
    return factory(*args, **kwargs)


def calibrated_decode(decomposition, spec, u):
    """Structure minimizing the decomposed expected loss at ``u``."""
    scores = decomposition.scores(u)
    if scores.shape[-1] != spec.ambient_dim:
        raise DimensionMismatch(
            f"decomposition yields {scores.shape[-1]} scores but "
            f"{spec.describe()} needs {spec.ambient_dim}")
    return map_oracle(spec, scores)


def default_loss(spec):
    """Target loss paired with each decoding set in the experiments."""
    kind, k = spec.kind, spec.k
    if kind is Kind.SIMPLEX:
        return zero_one(k)
    if kind is Kind.CUBE:
        return hamming_multilabel(k)
    if kind is Kind.KNAPSACK:
        return hamming_multilabel(k, spec.lower, spec.upper)
    if kind in (Kind.BIRKHOFF, Kind.ROW_STOCHASTIC):
        return hamming_ranking(k, spec)
    if kind is Kind.ORDER_SIMPLEX:
        return absolute(k)
    if kind is Kind.PERMUTAHEDRON:
        return plain_map(spec)
    raise UnknownLoss("no default target loss for the full space")


def multilabel_budget(label_sets, k):
    """Budget used for knapsack multilabel: ``l = 0``, ``u = ceil(E|Y| + std|Y|)``."""
    sizes = np.array([len(y) for y in label_sets], dtype=float)
    upper = math.ceil(sizes.mean() + sizes.std())
    return 0, int(min(max(upper, 1), k))

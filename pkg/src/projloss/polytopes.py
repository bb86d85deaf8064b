"""Convex polytopes used as projection and decoding sets.

A :class:`Polytope` is an immutable descriptor; the functions in this module
answer geometric questions about it (linear maximization, vertex
enumeration, membership, smoothness constants).  Matrix-valued sets
(Birkhoff, row-stochastic) work on row-major flattened ``k * k`` vectors.
"""

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch, InfeasibleBounds, TooManyVertices, Unbounded
from .geometry import Geometry

DEFAULT_VERTEX_CAP = 10**4


class Kind(str, enum.Enum):
    SIMPLEX = "simplex"
    CUBE = "cube"
    KNAPSACK = "knapsack"
    BIRKHOFF = "birkhoff"
    ROW_STOCHASTIC = "rowstochastic"
    PERMUTAHEDRON = "permutahedron"
    ORDER_SIMPLEX = "order_simplex"
    FULL_SPACE = "full"


@dataclass(frozen=True)
class Polytope:
    """Descriptor of a convex set.

    Use the factory classmethods rather than the constructor, e.g.
    ``Polytope.knapsack(5, 0, 2)``.
    """

    kind: Kind
    k: int
    lower: int = 0
    upper: int = 0
    weights: tuple = ()

    @classmethod
    def simplex(cls, k):
        return cls(Kind.SIMPLEX, _positive(k))

    @classmethod
    def cube(cls, k):
        return cls(Kind.CUBE, _positive(k))

    @classmethod
    def knapsack(cls, k, lower, upper):
        k = _positive(k)
        lower, upper = int(lower), int(upper)
        if lower > upper:
            raise InfeasibleBounds(f"knapsack bounds l={lower} > u={upper}")
        if lower < 0 or upper > k:
            raise InfeasibleBounds(
                f"knapsack bounds must satisfy 0 <= l <= u <= k, got "
                f"l={lower}, u={upper}, k={k}")
        return cls(Kind.KNAPSACK, k, lower, upper)

    @classmethod
    def birkhoff(cls, k):
        return cls(Kind.BIRKHOFF, _positive(k))

    @classmethod
    def row_stochastic(cls, k):
        return cls(Kind.ROW_STOCHASTIC, _positive(k))

    @classmethod
    def permutahedron(cls, weights):
        w = tuple(float(x) for x in np.ravel(weights))
        if not w:
            raise ValueError("permutahedron needs at least one weight")
        if any(a < b for a, b in zip(w, w[1:])):
            raise ValueError("permutahedron weights must be sorted descending")
        return cls(Kind.PERMUTAHEDRON, len(w), weights=w)

    @classmethod
    def order_simplex(cls, k):
        """Order simplex for ``k`` ordered classes (ambient dimension k - 1)."""
        k = int(k)
        if k < 2:
            raise ValueError("order simplex needs at least 2 classes")
        return cls(Kind.ORDER_SIMPLEX, k)

    @classmethod
    def full_space(cls, p):
        return cls(Kind.FULL_SPACE, _positive(p))

    @classmethod
    def from_name(cls, name, k, lower=None, upper=None, weights=None):
        """Build a set from its CLI name; matrix sets take the side length."""
        kind = Kind(str(name).lower().replace("-", "_"))
        if kind is Kind.KNAPSACK:
            return cls.knapsack(k, 0 if lower is None else lower,
                                k if upper is None else upper)
        if kind is Kind.PERMUTAHEDRON:
            if weights is None:
                weights = np.arange(k, 0, -1)
            return cls.permutahedron(weights)
        return {
            Kind.SIMPLEX: cls.simplex,
            Kind.CUBE: cls.cube,
            Kind.BIRKHOFF: cls.birkhoff,
            Kind.ROW_STOCHASTIC: cls.row_stochastic,
            Kind.ORDER_SIMPLEX: cls.order_simplex,
            Kind.FULL_SPACE: cls.full_space,
        }[kind](k)

    @property
    def ambient_dim(self):
        if self.kind in (Kind.BIRKHOFF, Kind.ROW_STOCHASTIC):
            return self.k * self.k
        if self.kind is Kind.ORDER_SIMPLEX:
            return self.k - 1
        return self.k

    @property
    def is_matrix(self):
        return self.kind in (Kind.BIRKHOFF, Kind.ROW_STOCHASTIC)

    @property
    def bounded(self):
        return self.kind is not Kind.FULL_SPACE

    def describe(self):
        if self.kind is Kind.KNAPSACK:
            return f"knapsack(k={self.k}, l={self.lower}, u={self.upper})"
        if self.kind is Kind.PERMUTAHEDRON:
            return f"permutahedron(w={list(self.weights)})"
        return f"{self.kind.value}({self.k})"

    def to_dict(self):
        d = {"kind": self.kind.value, "k": self.k}
        if self.kind is Kind.KNAPSACK:
            d.update(lower=self.lower, upper=self.upper)
        if self.kind is Kind.PERMUTAHEDRON:
            d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls.from_name(d["kind"], d["k"], d.get("lower"), d.get("upper"),
                             d.get("weights"))


def _positive(k):
    k = int(k)
    if k < 1:
        raise ValueError(f"dimension must be positive, got {k}")
    return k


def check_dim(spec, v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (spec.ambient_dim,):
        raise DimensionMismatch(
            f"{spec.describe()} expects vectors of length {spec.ambient_dim}, "
            f"got shape {v.shape}")
    return v


def _top_indices(v, count):
    # Stable descending sort: equal scores keep their index order.
    return np.argsort(-v, kind="stable")[:count]


def knapsack_map_vector(v, lower, upper):
    """0/1 maximizer of <v, y> subject to ``lower <= sum(y) <= upper``."""
    order = np.argsort(-v, kind="stable")
    y = np.zeros_like(v)
    y[order[:lower]] = 1.0
    for i in order[lower:upper]:
        if v[i] > 0:
            y[i] = 1.0
    return y


def assignment(profit):
    """Permutation ``perm`` maximizing ``sum_i profit[i, perm[i]]``."""
    profit = np.asarray(profit, dtype=float)
    if profit.ndim != 2 or profit.shape[0] != profit.shape[1]:
        raise DimensionMismatch(f"assignment needs a square matrix, got {profit.shape}")
    rows, cols = linear_sum_assignment(profit, maximize=True)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm


def lmo(spec, v):
    """Vertex of ``spec`` maximizing ``<u, v>``; ties go to the lowest index."""
    v = check_dim(spec, v)
    if v.ndim != 1:
        raise DimensionMismatch("lmo takes a single direction vector")
    kind = spec.kind
    out = np.zeros_like(v)
    if kind is Kind.SIMPLEX:
        out[np.argmax(v)] = 1.0
    elif kind is Kind.CUBE:
        out[v > 0] = 1.0
    elif kind is Kind.KNAPSACK:
        out = knapsack_map_vector(v, spec.lower, spec.upper)
    elif kind is Kind.BIRKHOFF:
        k = spec.k
        perm = assignment(v.reshape(k, k))
        mat = np.zeros((k, k))
        mat[np.arange(k), perm] = 1.0
        out = mat.ravel()
    elif kind is Kind.ROW_STOCHASTIC:
        k = spec.k
        mat = np.zeros((k, k))
        mat[np.arange(k), np.argmax(v.reshape(k, k), axis=1)] = 1.0
        out = mat.ravel()
    elif kind is Kind.PERMUTAHEDRON:
        out[np.argsort(-v, kind="stable")] = spec.weights
    elif kind is Kind.ORDER_SIMPLEX:
        scores = np.concatenate([[0.0], np.cumsum(v)])
        out[:int(np.argmax(scores))] = 1.0
    else:
        raise Unbounded("the full space has no linear maximizer")
    return out


def vertex_count(spec):
    kind, k = spec.kind, spec.k
    if kind is Kind.SIMPLEX or kind is Kind.ORDER_SIMPLEX:
        return k
    if kind is Kind.CUBE:
        return 2**k
    if kind is Kind.KNAPSACK:
        return sum(math.comb(k, m) for m in range(spec.lower, spec.upper + 1))
    if kind is Kind.BIRKHOFF:
        return math.factorial(k)
    if kind is Kind.ROW_STOCHASTIC:
        return k**k
    if kind is Kind.PERMUTAHEDRON:
        counts = {}
        for w in spec.weights:
            counts[w] = counts.get(w, 0) + 1
        n = math.factorial(k)
        for c in counts.values():
            n //= math.factorial(c)
        return n
    raise Unbounded("the full space has no vertices")


def enumerate_vertices(spec, cap=DEFAULT_VERTEX_CAP):
    """All vertices of ``spec`` as rows of an array, in a fixed order."""
    count = vertex_count(spec)
    if count > cap:
        raise TooManyVertices(f"{spec.describe()} has {count} vertices (cap {cap})")
    kind, k = spec.kind, spec.k
    if kind is Kind.SIMPLEX:
        return np.eye(k)
    if kind is Kind.ORDER_SIMPLEX:
        return np.tril(np.ones((k, k - 1)), -1)
    if kind is Kind.CUBE:
        return np.array(list(itertools.product((0.0, 1.0), repeat=k)))
    if kind is Kind.KNAPSACK:
        rows = [y for y in itertools.product((0.0, 1.0), repeat=k)
                if spec.lower <= sum(y) <= spec.upper]
        return np.array(rows).reshape(-1, k)
    if kind is Kind.BIRKHOFF:
        eye = np.eye(k)
        return np.array([eye[list(p)].ravel() for p in itertools.permutations(range(k))])
    if kind is Kind.ROW_STOCHASTIC:
        eye = np.eye(k)
        return np.array([eye[list(c)].ravel()
                         for c in itertools.product(range(k), repeat=k)])
    # Permutahedron: distinct orderings of the weight vector.
    seen = dict.fromkeys(itertools.permutations(spec.weights))
    return np.array(list(seen), dtype=float)


def smoothness_constant(spec, geometry):
    """Smoothness of the projection loss: 1 for Euclidean, sup ||u||_1 for KL."""
    geometry = Geometry.parse(geometry)
    if geometry is Geometry.EUCLIDEAN:
        return 1.0
    kind, k = spec.kind, spec.k
    if kind is Kind.SIMPLEX:
        return 1.0
    if kind in (Kind.CUBE, Kind.BIRKHOFF, Kind.ROW_STOCHASTIC):
        return float(k)
    if kind is Kind.KNAPSACK:
        return float(spec.upper)
    if kind is Kind.PERMUTAHEDRON:
        return float(np.sum(np.abs(spec.weights)))
    if kind is Kind.ORDER_SIMPLEX:
        return float(k - 1)
    raise Unbounded("KL smoothness is undefined over an unbounded set")


def contains(spec, u, tol=1e-9):
    u = check_dim(spec, u)
    if not np.all(np.isfinite(u)):
        return False
    kind, k = spec.kind, spec.k
    if kind is Kind.FULL_SPACE:
        return True
    if kind is Kind.SIMPLEX:
        return bool(np.all(u >= -tol) and abs(u.sum() - 1.0) <= tol)
    in_box = bool(np.all(u >= -tol) and np.all(u <= 1.0 + tol))
    if kind is Kind.CUBE:
        return in_box
    if kind is Kind.KNAPSACK:
        s = u.sum()
        return in_box and spec.lower - tol <= s <= spec.upper + tol
    if kind in (Kind.BIRKHOFF, Kind.ROW_STOCHASTIC):
        mat = u.reshape(k, k)
        ok = in_box and bool(np.all(np.abs(mat.sum(axis=1) - 1.0) <= tol))
        if kind is Kind.BIRKHOFF:
            ok = ok and bool(np.all(np.abs(mat.sum(axis=0) - 1.0) <= tol))
        return ok
    if kind is Kind.PERMUTAHEDRON:
        # Majorization by w: prefix sums of sorted u bounded, totals equal.
        w = np.asarray(spec.weights)
        su = np.cumsum(np.sort(u)[::-1])
        sw = np.cumsum(w)
        return bool(np.all(su <= sw + tol) and abs(su[-1] - sw[-1]) <= tol)
    # Order simplex: 1 >= u_1 >= ... >= u_{k-1} >= 0.
    chain = np.concatenate([[1.0], u, [0.0]])
    return bool(np.all(np.diff(chain) <= tol))

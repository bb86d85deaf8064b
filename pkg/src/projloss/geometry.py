"""Bregman geometries: generating functions, mirror maps and divergences.

Two generators are supported:

* ``EUCLIDEAN``: ``psi(u) = 0.5 * ||u||^2`` on all of R^p, mirror map is
  the identity.
* ``KL``: Shannon negentropy ``psi(u) = <u, log u>`` on the nonnegative
  orthant, mirror map ``exp(theta - 1)``.

All functions reduce over the last axis, so a batch of points can be passed
as an ``(n, p)`` array.
"""

import enum

import numpy as np

from .errors import DomainError

# exp(700) is still finite in float64; exp(710) is not.
_EXP_LIMIT = 700.0


class Geometry(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    KL = "kl"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"euclidean": cls.EUCLIDEAN, "l2": cls.EUCLIDEAN,
                   "kl": cls.KL, "shannon": cls.KL, "shannonkl": cls.KL}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown geometry {value!r}") from None


def _xlogx(u):
    # 0 log 0 = 0 by explicit branch, never by limit evaluation.
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = u[pos] * np.log(u[pos])
    return out


def grad_psi_star(geometry, theta):
    """Mirror map from scores to the domain of psi."""
    geometry = Geometry.parse(geometry)
    theta = np.asarray(theta, dtype=float)
    if geometry is Geometry.EUCLIDEAN:
        return theta.copy()
    if np.any(theta > _EXP_LIMIT):
        raise DomainError(
            f"theta entries above {_EXP_LIMIT:g} overflow exp(theta - 1)")
    return np.exp(theta - 1.0)


def grad_psi(geometry, u):
    """Gradient of psi; for KL this is ``log u + 1`` (``-inf`` at zero)."""
    geometry = Geometry.parse(geometry)
    u = np.asarray(u, dtype=float)
    if geometry is Geometry.EUCLIDEAN:
        return u.copy()
    if np.any(u < 0):
        raise DomainError("KL geometry requires nonnegative points")
    with np.errstate(divide="ignore"):
        return np.log(u) + 1.0


def psi_value(geometry, u):
    geometry = Geometry.parse(geometry)
    u = np.asarray(u, dtype=float)
    if geometry is Geometry.EUCLIDEAN:
        return 0.5 * np.sum(u * u, axis=-1)
    if np.any(u < 0):
        raise DomainError("KL geometry requires nonnegative points")
    return np.sum(_xlogx(u), axis=-1)


def bregman_div(geometry, u, v):
    """Bregman divergence ``D(u, v)``; generalized KL for the KL geometry."""
    geometry = Geometry.parse(geometry)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        u, v = np.broadcast_arrays(u, v)
    if geometry is Geometry.EUCLIDEAN:
        d = u - v
        return 0.5 * np.sum(d * d, axis=-1)
    if np.any(u < 0) or np.any(v < 0):
        raise DomainError("KL geometry requires nonnegative points")
    if np.any((u > 0) & (v == 0)):
        raise DomainError("KL(u, v) is infinite: u > 0 where v == 0")
    pos = u > 0
    ratio_term = np.zeros_like(u)
    ratio_term[pos] = u[pos] * (np.log(u[pos]) - np.log(v[pos]))
    d = np.sum(ratio_term - u + v, axis=-1)
    # Cancellation can leave tiny negative values.
    return np.maximum(d, 0.0)


def dual_norm(geometry, x):
    """Norm of the gradient space paired with each geometry's primal norm.

    Euclidean geometry is 1-strongly convex w.r.t. l2 (self-dual); KL is
    strongly convex w.r.t. l1, whose dual is l-infinity.
    """
    geometry = Geometry.parse(geometry)
    x = np.asarray(x, dtype=float)
    if geometry is Geometry.EUCLIDEAN:
        return np.linalg.norm(x, axis=-1)
    return np.max(np.abs(x), axis=-1)


def primal_norm(geometry, x):
    geometry = Geometry.parse(geometry)
    x = np.asarray(x, dtype=float)
    if geometry is Geometry.EUCLIDEAN:
        return np.linalg.norm(x, axis=-1)
    return np.sum(np.abs(x), axis=-1)

"""Fenchel-Young losses generated by ``psi + indicator(C)``.

The loss is evaluated from a single projection ``mu``::

    S(theta, t) = psi(t) - psi(mu) - <theta, t - mu>,   grad = mu - t

which equals ``Omega*(theta) + Omega(t) - <theta, t>`` because
``Omega*(theta) = <theta, mu> - psi(mu)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import TargetOutsideSet
from .geometry import Geometry, bregman_div, grad_psi_star, psi_value
from .polytopes import check_dim, contains
from .projections import ProjectionResult, project

TARGET_TOL = 1e-6


@dataclass
class LossEval:
    value: np.ndarray
    gradient: np.ndarray
    projection: ProjectionResult


def _check_target(spec, target, tol):
    target = check_dim(spec, target)
    rows = target.reshape(-1, target.shape[-1])
    for i, row in enumerate(rows):
        if not contains(spec, row, tol):
            where = "" if target.ndim == 1 else f" (row {i})"
            raise TargetOutsideSet(f"target{where} is not in {spec.describe()}")
    return target


def fy_loss(spec, geometry, theta, target, check=True, **project_kw):
    """Projection-based Fenchel-Young loss, its gradient and the projection.

    ``target`` may be any point of the set (not just a vertex), and both
    arguments may be batched along leading axes.
    """
    geometry = Geometry.parse(geometry)
    theta = check_dim(spec, theta)
    if check:
        target = _check_target(spec, target, TARGET_TOL)
    else:
        target = np.asarray(target, dtype=float)
    proj = project(spec, geometry, theta, **project_kw)
    mu = proj.mu
    value = (psi_value(geometry, target) - psi_value(geometry, mu)
             - np.sum(theta * (target - mu), axis=-1))
    return LossEval(value, mu - target, proj)


def squared_loss(theta, target):
    theta = np.asarray(theta, dtype=float)
    target = np.asarray(target, dtype=float)
    diff = theta - target
    value = 0.5 * np.sum(diff * diff, axis=-1)
    return LossEval(value, diff, ProjectionResult(theta.copy()))


def compositional_loss(spec, geometry, theta, target, **project_kw):
    """``D_psi(target, P(theta))``: tighter than ``fy_loss`` but non-convex."""
    mu = project(spec, geometry, theta, **project_kw).mu
    return bregman_div(geometry, target, mu)


def unprojected_bound(geometry, theta, target):
    """``D_psi(target, grad_psi_star(theta))``, the loss over ``dom(psi)``."""
    return bregman_div(geometry, target, grad_psi_star(geometry, theta))


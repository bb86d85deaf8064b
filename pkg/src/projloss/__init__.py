"""Structured prediction losses built from projections onto polytopes."""

from .losses import compositional_loss, fy_loss, squared_loss
from .model import ProjectionLossEstimator, RoundingRidge, TrainConfig
from .polytopes import Polytope
from .projections import project

__all__ = [
    "Polytope",
    "ProjectionLossEstimator",
    "RoundingRidge",
    "TrainConfig",
    "compositional_loss",
    "fy_loss",
    "project",
    "squared_loss",
]

"""
Objectives package - ray classification and loss terms
"""

from .losses import (
    LossReport,
    LossWeights,
    RayClassification,
    RayCountMismatchError,
    classify_off_rays,
    combine_losses,
    eikonal_points,
    eikonal_residual,
    epsilon_schedule,
    loss_bce,
    loss_eikonal,
    loss_rgb,
    loss_sparse,
    total_loss,
)

__all__ = [
    'LossWeights', 'LossReport', 'RayClassification', 'RayCountMismatchError',
    'classify_off_rays', 'epsilon_schedule', 'loss_rgb', 'loss_eikonal', 'eikonal_residual',
    'eikonal_points', 'loss_sparse', 'loss_bce', 'combine_losses', 'total_loss',
]

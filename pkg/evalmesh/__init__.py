"""
Evalmesh package - surface extraction and the evaluation metric suite
"""

from .mesh import TriangleMesh, evaluate_grid, marching_cubes, pose_mesh, sdf_gradient
from .metrics import (
    EmptyPointSetError,
    MaskMetrics,
    MetricsReport,
    SizeMismatchError,
    ZeroNormalError,
    chamfer,
    mask_metrics,
    nearest,
    normal_consistency,
    opacity_bimodality,
    psnr,
    volumetric_iou,
)

__all__ = [
    'TriangleMesh', 'marching_cubes', 'evaluate_grid', 'sdf_gradient', 'pose_mesh',
    'chamfer', 'nearest', 'normal_consistency', 'mask_metrics', 'MaskMetrics', 'volumetric_iou', 'psnr',
    'opacity_bimodality', 'MetricsReport',
    'EmptyPointSetError', 'SizeMismatchError', 'ZeroNormalError',
]

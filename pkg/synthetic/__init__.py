"""
Synthetic package - analytic ground-truth scenes, oracle rendering and dataset I/O
"""

from .scene import (
    SyntheticSceneSpec,
    analytic_sdf,
    background_color,
    orbit_camera,
    perturb_pose,
    posed_sdf,
    smooth_min,
    walking_pose,
)
from .dataset import DatasetFormatError, HoldoutView, OracleFrame, SyntheticDataset
from .generator import (
    DegenerateSceneError,
    FigureOutsideSphereError,
    figure_extent,
    generate_dataset,
    oracle_surface_points,
    render_oracle_view,
    sphere_trace,
)

__all__ = [
    'SyntheticSceneSpec', 'SyntheticDataset', 'OracleFrame', 'HoldoutView',
    'analytic_sdf', 'posed_sdf', 'smooth_min', 'walking_pose', 'perturb_pose', 'orbit_camera', 'background_color',
    'generate_dataset', 'oracle_surface_points', 'render_oracle_view', 'sphere_trace', 'figure_extent',
    'FigureOutsideSphereError', 'DegenerateSceneError', 'DatasetFormatError',
]

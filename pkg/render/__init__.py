"""
Render package - cameras, ray sampling, volume-rendering quadrature and compositing
"""

from .camera import Camera, PixelOutOfBoundsError
from .sampling import (
    FAR_INTERVAL,
    InnerSamples,
    OuterSamples,
    SamplingConfig,
    intersect_unit_sphere,
    quadrature_weights,
    sample_inner,
    sample_outer,
    sample_pdf,
    uniform_depths,
)
from .integrate import QuadratureError, RenderResult, composite, integrate_background, integrate_human, quadrature
from .renderer import RayBatch, RenderedImage, RenderOutput, SceneRenderer, render_mask

__all__ = [
    'Camera', 'SamplingConfig', 'SceneRenderer', 'RayBatch', 'RenderOutput', 'RenderResult', 'RenderedImage',
    'InnerSamples', 'OuterSamples', 'FAR_INTERVAL',
    'intersect_unit_sphere', 'uniform_depths', 'sample_pdf', 'sample_inner', 'sample_outer',
    'quadrature', 'quadrature_weights', 'integrate_human', 'integrate_background', 'composite', 'render_mask',
    'PixelOutOfBoundsError', 'QuadratureError',
]

"""
Fields package - neural SDF, texture and background fields with density conversion
"""

from .encoding import FrequencyEncoding
from .density import DensityParams, laplace_density, sdf_to_density
from .sphere import InnerVolumeError, invert_sphere
from .networks import (
    MLP,
    BackgroundField,
    FieldConfig,
    HumanShapeField,
    HumanTextureField,
    SceneFields,
    UnknownFrameError,
)

__all__ = [
    'FrequencyEncoding', 'MLP', 'FieldConfig',
    'HumanShapeField', 'HumanTextureField', 'BackgroundField', 'SceneFields',
    'DensityParams', 'sdf_to_density', 'laplace_density', 'invert_sphere',
    'InnerVolumeError', 'UnknownFrameError',
]

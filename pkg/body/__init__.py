"""
Body package - capsule skeleton, forward kinematics and linear blend skinning
"""

from .skeleton import (
    CapsuleBone,
    PoseDimensionError,
    PoseParams,
    Skeleton,
    default_bones,
    default_skeleton,
    pose_dim,
    sample_capsule_surface,
    segment_distance,
)
from .kinematics import RigidTransform, bone_transforms, bone_transforms_numpy, is_rigid, rigid_transforms, rodrigues
from .skinning import (
    DegenerateTransformError,
    InverseWarp,
    ZeroGradientError,
    blend_transforms,
    deformed_normal,
    forward_lbs,
    idw_weights,
    inverse_lbs,
    inverse_lbs_numpy,
    posed_proxy_points,
    skinning_weights,
)

__all__ = [
    'Skeleton', 'CapsuleBone', 'PoseParams', 'RigidTransform', 'InverseWarp',
    'default_bones', 'default_skeleton', 'pose_dim', 'segment_distance', 'sample_capsule_surface',
    'rodrigues', 'bone_transforms', 'bone_transforms_numpy', 'rigid_transforms', 'is_rigid',
    'skinning_weights', 'idw_weights', 'posed_proxy_points', 'blend_transforms',
    'forward_lbs', 'inverse_lbs', 'inverse_lbs_numpy', 'deformed_normal',
    'PoseDimensionError', 'DegenerateTransformError', 'ZeroGradientError',
]

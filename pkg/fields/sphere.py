"""
Inverted-sphere reparameterization of the outer (background) volume.
"""

from typing import Optional

import numpy as np

BOUNDARY_TOLERANCE = 1e-9


class InnerVolumeError(ValueError):
    """A point inside the unit sphere was handed to the background parameterization."""


def invert_sphere(points: np.ndarray, origin: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Map outer points to (unit direction, 1/r).

    The first three components are (x - O) / r and the fourth lies in (0, 1].
    """
    points = np.asarray(points, dtype=np.float64)
    origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=np.float64)
    offset = points - origin
    radius = np.linalg.norm(offset, axis=-1, keepdims=True)
    if np.any(radius < 1.0 - BOUNDARY_TOLERANCE):
        worst = float(radius.min())
        raise InnerVolumeError(f"point at radius {worst:.6f} lies inside the unit sphere")
    return np.concatenate([offset / radius, 1.0 / radius], axis=-1)

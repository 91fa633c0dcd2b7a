"""
Skinning - linear blend skinning between canonical and posed space.

Skinning weights at arbitrary points come from the K nearest proxy points
by inverse-distance weighting: in canonical space against the rest-pose
proxies, in deformed space against the proxies posed with the same bone
transforms. Weights are treated as constants; gradients flow through the
transforms and the point coordinates.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from sklearn.neighbors import KDTree

from autodiff import Tensor, as_tensor, getitem, inv, matmul, norm, reshape, swapaxes

from .skeleton import Skeleton

logger = logging.getLogger(__name__)

DETERMINANT_FLOOR = 1e-10
GRADIENT_FLOOR = 1e-12


class DegenerateTransformError(ValueError):
    """A blended transform is (numerically) singular."""

    def __init__(self, message: str, determinant: float):
        self.determinant = determinant
        super().__init__(message)


class ZeroGradientError(ValueError):
    """A surface normal was requested where the SDF gradient vanishes."""


def idw_weights(tree: KDTree, proxy_weights: np.ndarray, points: np.ndarray, k: int,
                distance_floor: float = 1e-6) -> np.ndarray:
    """Inverse-distance blend of the k nearest proxies' weight rows."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return np.zeros((0, proxy_weights.shape[1]))
    k = min(k, len(proxy_weights))
    distances, indices = tree.query(points, k=k)
    inverse = 1.0 / np.maximum(distances, distance_floor)
    weights = np.einsum("mk,mkb->mb", inverse, proxy_weights[indices]) / inverse.sum(axis=1, keepdims=True)
    exact = distances[:, 0] < 1e-12
    if np.any(exact):
        weights[exact] = proxy_weights[indices[exact, 0]]
    return weights


def posed_proxy_points(skeleton: Skeleton, transforms: np.ndarray) -> np.ndarray:
    blend = np.einsum("pb,bij->pij", skeleton.proxy_weights, transforms)
    return np.einsum("pij,pj->pi", blend[:, :3, :3], skeleton.proxy_points) + blend[:, :3, 3]


def skinning_weights(
    skeleton: Skeleton,
    points: np.ndarray,
    space: str = "canonical",
    transforms: Optional[Union[Tensor, np.ndarray]] = None,
) -> np.ndarray:
    """
    Skinning weights (M, n_bones) at points in canonical or deformed space.

    Deformed-space queries need the frame's bone transforms. Every row is
    non-negative and sums to one.
    """
    if space == "canonical":
        tree = skeleton.canonical_tree
    elif space == "deformed":
        if transforms is None:
            raise ValueError("deformed-space skinning weights need bone transforms")
        matrices = transforms.data if isinstance(transforms, Tensor) else np.asarray(transforms)
        tree = KDTree(posed_proxy_points(skeleton, np.asarray(matrices, dtype=np.float64)))
    else:
        raise ValueError(f"unknown space '{space}', expected 'canonical' or 'deformed'")
    return idw_weights(tree, skeleton.proxy_weights, points, skeleton.k_nearest, skeleton.distance_floor)


def blend_transforms(weights: np.ndarray, transforms: Tensor) -> Tensor:
    n = transforms.shape[0]
    blended = matmul(np.asarray(weights), reshape(transforms, (n, 16)))
    return reshape(blended, (len(weights), 4, 4))


def _apply(blend: Tensor, points: Tensor) -> Tensor:
    m = points.shape[0]
    rotation = getitem(blend, (slice(None), slice(0, 3), slice(0, 3)))
    shift = getitem(blend, (slice(None), slice(0, 3), 3))
    return reshape(matmul(rotation, reshape(points, (m, 3, 1))), (m, 3)) + shift


def forward_lbs(points: Union[Tensor, np.ndarray], weights: np.ndarray, transforms: Tensor) -> Tensor:
    """Canonical points to deformed space: (sum_i w_i B_i) x."""
    return _apply(blend_transforms(weights, as_tensor(transforms)), as_tensor(points))


@dataclass
class InverseWarp:
    canonical: Tensor
    weights: np.ndarray
    blend_inverse: Tensor


def inverse_lbs(
    points: Union[Tensor, np.ndarray],
    skeleton: Skeleton,
    transforms: Tensor,
    weights: Optional[np.ndarray] = None,
) -> InverseWarp:
    """
    Deformed points to canonical space through the inverted blended transform.

    Weights are looked up in deformed space unless given. Raises
    DegenerateTransformError when a blended transform is singular.
    """
    points = as_tensor(points)
    transforms = as_tensor(transforms)
    if weights is None:
        weights = skinning_weights(skeleton, points.data, "deformed", transforms)
    blend = blend_transforms(weights, transforms)
    if len(weights):
        det = np.linalg.det(np.asarray(blend.data[:, :3, :3], dtype=np.float64))
        bad = np.abs(det) < DETERMINANT_FLOOR
        if np.any(bad):
            worst = float(det[bad][np.argmin(np.abs(det[bad]))])
            raise DegenerateTransformError(
                f"{int(bad.sum())} blended transforms are singular (det {worst:.2e})", worst
            )
        blend_inverse = inv(blend)
    else:
        blend_inverse = blend
    return InverseWarp(canonical=_apply(blend_inverse, points), weights=weights, blend_inverse=blend_inverse)


def deformed_normal(warp: Union[InverseWarp, Tensor], canonical_gradient: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Deformed-space SDF gradient and unit normal from the canonical gradient.

    With x_c = A x_d + b the deformed gradient is A^T grad_c.
    """
    blend_inverse = warp.blend_inverse if isinstance(warp, InverseWarp) else warp
    canonical_gradient = as_tensor(canonical_gradient)
    m = canonical_gradient.shape[0]
    rotation = getitem(blend_inverse, (slice(None), slice(0, 3), slice(0, 3)))
    raw = reshape(matmul(swapaxes(rotation, -1, -2), reshape(canonical_gradient, (m, 3, 1))), (m, 3))
    length = norm(raw, axis=-1, keepdims=True)
    if np.any(length.data < GRADIENT_FLOOR):
        raise ZeroGradientError("SDF gradient vanishes; normal is undefined")
    return raw, raw / length


def inverse_lbs_numpy(points: np.ndarray, skeleton: Skeleton, transforms: np.ndarray,
                      weights: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Constant counterpart of inverse_lbs: (canonical points, deformed-space weights)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if weights is None:
        weights = skinning_weights(skeleton, points, "deformed", transforms)
    blend = np.einsum("mb,bij->mij", weights, np.asarray(transforms, dtype=np.float64))
    inverse = np.linalg.inv(blend)
    return np.einsum("mij,mj->mi", inverse[:, :3, :3], points) + inverse[:, :3, 3], weights

"""
Skeleton - capsule bone hierarchy with skinning-weight proxy points.

The skeleton stands in for a parametric body model: each bone carries a
capsule in canonical space, and points sampled on the capsule surfaces carry
canonical skinning weights from a smooth per-bone falloff.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from sklearn.neighbors import KDTree

logger = logging.getLogger(__name__)


class PoseDimensionError(ValueError):
    """Pose vector length does not match the skeleton."""


class CapsuleBone(BaseModel):
    """One bone: its joint (rotation pivot), capsule axis end and radius."""

    model_config = ConfigDict(extra="forbid")

    name: str
    parent: int
    joint: Tuple[float, float, float]
    tip: Tuple[float, float, float]
    radius: float


def default_bones() -> List[CapsuleBone]:
    # torso, two arms, two legs; height about 1.8 units, inside the unit sphere
    return [
        CapsuleBone(name="torso", parent=-1, joint=(0.0, 0.0, 0.0), tip=(0.0, 0.68, 0.0), radius=0.15),
        CapsuleBone(name="left_arm", parent=0, joint=(0.22, 0.55, 0.0), tip=(0.30, -0.05, 0.0), radius=0.065),
        CapsuleBone(name="right_arm", parent=0, joint=(-0.22, 0.55, 0.0), tip=(-0.30, -0.05, 0.0), radius=0.065),
        CapsuleBone(name="left_leg", parent=0, joint=(0.115, -0.05, 0.0), tip=(0.12, -0.82, 0.0), radius=0.075),
        CapsuleBone(name="right_leg", parent=0, joint=(-0.115, -0.05, 0.0), tip=(-0.12, -0.82, 0.0), radius=0.075),
    ]


@dataclass
class PoseParams:
    """Per-bone axis-angle rotations plus a root translation."""

    rotations: np.ndarray
    translation: np.ndarray

    @property
    def n_bones(self) -> int:
        return int(self.rotations.shape[0])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.rotations, dtype=np.float64).reshape(-1),
                               np.asarray(self.translation, dtype=np.float64).reshape(3)])

    @classmethod
    def from_vector(cls, vector: Sequence[float], n_bones: int) -> "PoseParams":
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vector.size != pose_dim(n_bones):
            raise PoseDimensionError(f"pose has {vector.size} values, skeleton needs {pose_dim(n_bones)}")
        return cls(rotations=vector[: 3 * n_bones].reshape(n_bones, 3).copy(), translation=vector[3 * n_bones:].copy())

    @classmethod
    def zeros(cls, n_bones: int) -> "PoseParams":
        return cls(rotations=np.zeros((n_bones, 3)), translation=np.zeros(3))


def pose_dim(n_bones: int) -> int:
    return 3 * n_bones + 3


@dataclass
class Skeleton:
    names: List[str]
    parents: List[int]
    joints: np.ndarray
    proxy_points: np.ndarray
    proxy_weights: np.ndarray
    capsule_tips: np.ndarray
    radii: np.ndarray
    k_nearest: int = 4
    distance_floor: float = 1e-6
    _canonical_tree: Optional[KDTree] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 3)
        self.proxy_points = np.asarray(self.proxy_points, dtype=np.float64).reshape(-1, 3)
        self.proxy_weights = np.asarray(self.proxy_weights, dtype=np.float64)
        self.capsule_tips = np.asarray(self.capsule_tips, dtype=np.float64).reshape(-1, 3)
        self.radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)
        self.validate()

    @property
    def n_bones(self) -> int:
        return len(self.parents)

    @property
    def pose_dim(self) -> int:
        return pose_dim(self.n_bones)

    def validate(self) -> None:
        n = self.n_bones
        if n == 0 or self.parents[0] != -1:
            raise ValueError("bone 0 must be the root (parent -1)")
        for i in range(1, n):
            if not 0 <= self.parents[i] < i:
                raise ValueError(f"bone {i} has parent {self.parents[i]}; parents must precede children")
        if self.joints.shape != (n, 3):
            raise ValueError(f"expected {n} joints, got shape {self.joints.shape}")
        if self.proxy_weights.shape != (len(self.proxy_points), n):
            raise ValueError(f"proxy weights shape {self.proxy_weights.shape} != ({len(self.proxy_points)}, {n})")
        if np.any(self.proxy_weights < 0) or not np.allclose(self.proxy_weights.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("proxy skinning weights must be non-negative and sum to 1")
        if self.k_nearest < 1:
            raise ValueError("k_nearest must be >= 1")

    def check_pose(self, pose_vector: np.ndarray) -> None:
        if np.size(pose_vector) != self.pose_dim:
            raise PoseDimensionError(f"pose has {np.size(pose_vector)} values, skeleton needs {self.pose_dim}")

    @property
    def canonical_tree(self) -> KDTree:
        if self._canonical_tree is None:
            self._canonical_tree = KDTree(self.proxy_points)
        return self._canonical_tree

    @property
    def local_offsets(self) -> np.ndarray:
        """Rest-pose translation of each bone frame relative to its parent."""
        offsets = self.joints.copy()
        for i in range(1, self.n_bones):
            offsets[i] = self.joints[i] - self.joints[self.parents[i]]
        return offsets

    @classmethod
    def from_capsules(
        cls,
        bones: Sequence[CapsuleBone],
        points_per_bone: int = 200,
        falloff: float = 0.04,
        k_nearest: int = 4,
        seed: int = 0,
    ) -> "Skeleton":
        rng = np.random.default_rng(seed)
        joints = np.array([b.joint for b in bones], dtype=np.float64)
        tips = np.array([b.tip for b in bones], dtype=np.float64)
        radii = np.array([b.radius for b in bones], dtype=np.float64)
        points = np.concatenate([
            sample_capsule_surface(joints[i], tips[i], radii[i], points_per_bone, rng)
            for i in range(len(bones))
        ])
        weights = capsule_falloff_weights(points, joints, tips, radii, falloff)
        logger.info(f"[BODY] Built skeleton with {len(bones)} bones and {len(points)} proxy points")
        return cls(
            names=[b.name for b in bones],
            parents=[b.parent for b in bones],
            joints=joints,
            proxy_points=points,
            proxy_weights=weights,
            capsule_tips=tips,
            radii=radii,
            k_nearest=k_nearest,
        )


def segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Distance from points to segment ab, and the closest segment points."""
    ab = b - a
    length_sq = float(ab @ ab)
    if length_sq == 0.0:
        closest = np.broadcast_to(a, points.shape)
    else:
        s = np.clip((points - a) @ ab / length_sq, 0.0, 1.0)
        closest = a + s[:, None] * ab
    return np.linalg.norm(points - closest, axis=-1), closest


def sample_capsule_surface(a: np.ndarray, b: np.ndarray, radius: float, count: int,
                           rng: np.random.Generator) -> np.ndarray:
    directions = rng.normal(size=(count, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    s = rng.uniform(0.0, 1.0, size=count)
    centers = a + s[:, None] * (b - a)
    axis = b - a
    length = float(np.linalg.norm(axis))
    if length > 0:
        axis = axis / length
        # cylinder body: remove the axial component; caps keep full directions
        body = rng.uniform(0.0, 1.0, size=count) < length / (length + 2.0 * radius)
        radial = directions - (directions @ axis)[:, None] * axis
        radial_norm = np.linalg.norm(radial, axis=1, keepdims=True)
        radial = np.where(radial_norm > 1e-9, radial / np.maximum(radial_norm, 1e-9), directions)
        cap_center = np.where((directions @ axis)[:, None] >= 0, b, a)
        return np.where(body[:, None], centers + radius * radial, cap_center + radius * directions)
    return a + radius * directions


def capsule_falloff_weights(points: np.ndarray, joints: np.ndarray, tips: np.ndarray,
                            radii: np.ndarray, falloff: float, cutoff: float = 1e-3) -> np.ndarray:
    outside = np.stack([
        np.maximum(segment_distance(points, joints[i], tips[i])[0] - radii[i], 0.0)
        for i in range(len(joints))
    ], axis=1)
    weights = np.exp(-0.5 * (outside / falloff) ** 2)
    weights /= weights.sum(axis=1, keepdims=True)
    weights[weights < cutoff] = 0.0
    return weights / weights.sum(axis=1, keepdims=True)


def default_skeleton(points_per_bone: int = 200, k_nearest: int = 4, seed: int = 0) -> Skeleton:
    return Skeleton.from_capsules(default_bones(), points_per_bone=points_per_bone, k_nearest=k_nearest, seed=seed)

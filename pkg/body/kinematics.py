"""
Kinematics - axis-angle rotations and per-bone rigid transforms.

bone_transforms composes each bone's local rotation about its joint down
the hierarchy and maps rest-pose (canonical) points to posed space:

    B_i = T(root_translation) . G_i . T(-joint_i)
    G_i = G_parent(i) . [R(theta_i) | joint_i - joint_parent(i)]
"""

import logging
from typing import List, Union

import numpy as np
from scipy.spatial.transform import Rotation

from autodiff import Tensor, as_tensor, concat, matmul, reshape, stack, tsum, unary

from .skeleton import PoseDimensionError, PoseParams, Skeleton

logger = logging.getLogger(__name__)

# rows of the skew-symmetric generators: K(w) = sum_k w_k L_k
_GENERATORS = np.array([
    [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
    [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
    [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
])

_SMALL_ANGLE_SQ = 1e-4


def _sinc_coefficient(s: Tensor) -> Tensor:
    """sin(sqrt(s)) / sqrt(s) as a function of the squared angle s."""
    data = s.data
    small = data < _SMALL_ANGLE_SQ
    u = np.sqrt(np.where(small, 1.0, data))
    value = np.where(small, 1.0 - data / 6.0 + data * data / 120.0, np.sin(u) / u)
    derivative = np.where(small, -1.0 / 6.0 + data / 60.0, (u * np.cos(u) - np.sin(u)) / (2.0 * u ** 3))
    return unary(s, value, derivative, "rodrigues_a")


def _cosc_coefficient(s: Tensor) -> Tensor:
    """(1 - cos(sqrt(s))) / s as a function of the squared angle s."""
    data = s.data
    small = data < _SMALL_ANGLE_SQ
    safe = np.where(small, 1.0, data)
    u = np.sqrt(safe)
    value = np.where(small, 0.5 - data / 24.0 + data * data / 720.0, (1.0 - np.cos(u)) / safe)
    derivative = np.where(small, -1.0 / 24.0 + data / 360.0,
                          (0.5 * u * np.sin(u) - (1.0 - np.cos(u))) / (safe * safe))
    return unary(s, value, derivative, "rodrigues_b")


def rodrigues(rotations: Union[Tensor, np.ndarray]) -> Tensor:
    """(n, 3) axis-angle vectors to (n, 3, 3) rotation matrices, smooth at zero."""
    w = as_tensor(rotations)
    n = w.shape[0]
    skew = reshape(matmul(w, _GENERATORS.reshape(3, 9)), (n, 3, 3))
    angle_sq = tsum(w * w, axis=-1)
    a = reshape(_sinc_coefficient(angle_sq), (n, 1, 1))
    b = reshape(_cosc_coefficient(angle_sq), (n, 1, 1))
    return np.eye(3) + a * skew + b * matmul(skew, skew)


def _homogeneous(rotation: Tensor, translation: Union[Tensor, np.ndarray]) -> Tensor:
    top = concat([rotation, reshape(as_tensor(translation), (3, 1))], axis=-1)
    bottom = np.array([[0.0, 0.0, 0.0, 1.0]])
    return concat([top, bottom], axis=0)


def _translation(offset) -> np.ndarray:
    out = np.eye(4)
    out[:3, 3] = offset
    return out


def bone_transforms(skeleton: Skeleton, pose: Union[Tensor, np.ndarray, PoseParams]) -> Tensor:
    """
    Per-bone rigid transforms (n_bones, 4, 4) for a flat pose vector.

    The pose layout is [rotation_0, ..., rotation_{n-1}, root_translation];
    every transform is differentiable with respect to the pose entries.
    """
    if isinstance(pose, PoseParams):
        pose = pose.vector
    pose = as_tensor(pose)
    if pose.size != skeleton.pose_dim:
        raise PoseDimensionError(f"pose has {pose.size} values, skeleton needs {skeleton.pose_dim}")
    pose = reshape(pose, (skeleton.pose_dim,))
    n = skeleton.n_bones
    rotations = rodrigues(reshape(pose[: 3 * n], (n, 3)))
    root = pose[3 * n:]
    offsets = skeleton.local_offsets

    globals_: List[Tensor] = []
    for i in range(n):
        local = _homogeneous(rotations[i], offsets[i])
        parent = skeleton.parents[i]
        globals_.append(local if parent < 0 else matmul(globals_[parent], local))

    root_shift = _homogeneous(as_tensor(np.eye(3)), root)
    rest = np.stack([_translation(-skeleton.joints[i]) for i in range(n)])
    return matmul(matmul(root_shift, stack(globals_, axis=0)), rest)


class RigidTransform:
    """A numpy 4x4 rigid transform with composition and exact inverse."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float64).reshape(4, 4)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(4))

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(self.matrix @ other.matrix)

    def inverse(self) -> "RigidTransform":
        out = np.eye(4)
        out[:3, :3] = self.rotation.T
        out[:3, 3] = -self.rotation.T @ self.translation
        return RigidTransform(out)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation


def bone_transforms_numpy(skeleton: Skeleton, pose) -> np.ndarray:
    """Constant float64 version of bone_transforms for sampling and data generation."""
    if isinstance(pose, PoseParams):
        pose = pose.vector
    pose = np.asarray(pose, dtype=np.float64).reshape(-1)
    skeleton.check_pose(pose)
    n = skeleton.n_bones
    rotations = Rotation.from_rotvec(pose[: 3 * n].reshape(n, 3)).as_matrix()
    offsets = skeleton.local_offsets
    globals_ = []
    for i in range(n):
        local = np.eye(4)
        local[:3, :3] = rotations[i]
        local[:3, 3] = offsets[i]
        parent = skeleton.parents[i]
        globals_.append(local if parent < 0 else globals_[parent] @ local)
    root_shift = _translation(pose[3 * n:])
    rest = np.stack([_translation(-skeleton.joints[i]) for i in range(n)])
    return root_shift @ np.stack(globals_) @ rest


def rigid_transforms(skeleton: Skeleton, pose) -> List[RigidTransform]:
    return [RigidTransform(m) for m in bone_transforms_numpy(skeleton, pose)]


def is_rigid(matrix: np.ndarray, tol: float = 1e-6) -> bool:
    rotation = np.asarray(matrix)[..., :3, :3]
    eye = np.eye(3)
    orthogonal = np.allclose(np.swapaxes(rotation, -1, -2) @ rotation, eye, atol=tol)
    return bool(orthogonal and np.allclose(np.linalg.det(rotation), 1.0, atol=tol))


"""
Synthetic Scene - analytic capsule figure, walking motion, orbit cameras and
the procedural far-sphere background.

The figure is the smooth-min union of per-bone capsules. Each capsule moves
rigidly with its bone, so the posed SDF is independent of the skinning code
under test.
"""

import logging
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import logsumexp, softmax
from scipy.spatial.transform import Rotation

from body import CapsuleBone, PoseParams, Skeleton, bone_transforms_numpy, default_bones, segment_distance
from render import Camera

logger = logging.getLogger(__name__)


class SyntheticSceneSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bones: List[CapsuleBone] = Field(default_factory=default_bones)
    n_frames: int = Field(24, ge=1)
    width: int = Field(96, ge=8)
    height: int = Field(96, ge=8)
    orbit_radius: float = Field(2.6, gt=1.0)
    orbit_degrees: float = 360.0
    elevation_deg: float = 15.0
    fov_deg: float = Field(55.0, gt=0, lt=180)
    background_radius: float = 5.0
    ground_elevation_deg: float = Field(-8.0, description="sky/ground boundary on the far sphere")
    checker_size_deg: float = Field(15.0, gt=0)
    illumination_jitter: float = Field(0.1, ge=0, lt=1)
    arm_swing_deg: float = 25.0
    leg_swing_deg: float = 25.0
    torso_yaw_deg: float = 10.0
    bob: float = 0.02
    walk_cycles: float = 1.0
    pose_noise_deg: float = Field(5.0, ge=0)
    holdout_views: int = Field(2, ge=0)
    smooth_k: float = Field(32.0, gt=0)
    cm_per_unit: float = Field(100.0, gt=0)
    trace_steps: int = Field(128, ge=1)
    trace_tolerance: float = Field(1e-4, gt=0)
    light_direction: Tuple[float, float, float] = (0.4, -0.8, -0.45)
    ambient: float = Field(0.3, ge=0, le=1)
    stripe_frequency: float = 6.0
    stripe_amplitude: float = Field(0.15, ge=0, lt=1)
    bone_albedo: List[Tuple[float, float, float]] = Field(default_factory=lambda: [
        (0.80, 0.30, 0.25), (0.25, 0.55, 0.80), (0.25, 0.55, 0.80), (0.30, 0.70, 0.35), (0.30, 0.70, 0.35),
    ])
    sky_zenith: Tuple[float, float, float] = (0.35, 0.55, 0.85)
    sky_horizon: Tuple[float, float, float] = (0.85, 0.88, 0.92)
    ground_colors: Tuple[Tuple[float, float, float], Tuple[float, float, float]] = (
        (0.55, 0.45, 0.30), (0.30, 0.25, 0.18))
    min_human_fraction: float = 0.05
    max_human_fraction: float = 0.60
    seed: int = 0

    @field_validator("background_radius")
    @classmethod
    def _far_enough(cls, value: float) -> float:
        if value < 4.0:
            raise ValueError(f"background radius must be >= 4, got {value}")
        return value

    def skeleton(self, points_per_bone: int = 200, k_nearest: int = 4) -> Skeleton:
        return Skeleton.from_capsules(self.bones, points_per_bone=points_per_bone, k_nearest=k_nearest, seed=self.seed)

    def albedo(self, bone: int) -> np.ndarray:
        return np.asarray(self.bone_albedo[bone % len(self.bone_albedo)], dtype=np.float64)


def capsule_arrays(spec: SyntheticSceneSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    joints = np.array([b.joint for b in spec.bones], dtype=np.float64)
    tips = np.array([b.tip for b in spec.bones], dtype=np.float64)
    radii = np.array([b.radius for b in spec.bones], dtype=np.float64)
    return joints, tips, radii


def _capsule_distances(points: np.ndarray, joints, tips, radii) -> Tuple[np.ndarray, np.ndarray]:
    """Per-capsule signed distances (P, n_b) and unit gradients (P, n_b, 3)."""
    distances, gradients = [], []
    for i in range(len(joints)):
        dist, closest = segment_distance(points, joints[i], tips[i])
        direction = points - closest
        safe = np.where(dist[:, None] > 1e-12, direction / np.maximum(dist[:, None], 1e-12), 0.0)
        distances.append(dist - radii[i])
        gradients.append(safe)
    return np.stack(distances, axis=1), np.stack(gradients, axis=1)


def smooth_min(distances: np.ndarray, k: float) -> np.ndarray:
    """-(1/k) log sum exp(-k d_i)."""
    return -logsumexp(-k * distances, axis=1) / k


def analytic_sdf(spec: SyntheticSceneSpec, points: np.ndarray) -> np.ndarray:
    """Canonical smooth-min capsule union."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    distances, _ = _capsule_distances(points, *capsule_arrays(spec))
    return smooth_min(distances, spec.smooth_k)


def posed_sdf(spec: SyntheticSceneSpec, skeleton: Skeleton, pose, points: np.ndarray,
              with_gradient: bool = False):
    """
    SDF of the posed figure: every capsule is evaluated in its own bone frame.

    Returns sdf, or (sdf, gradient, bone weights) with with_gradient.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    transforms = bone_transforms_numpy(skeleton, pose)
    joints, tips, radii = capsule_arrays(spec)
    n = len(joints)
    distances = np.empty((len(points), n))
    gradients = np.empty((len(points), n, 3))
    for i in range(n):
        rotation, shift = transforms[i, :3, :3], transforms[i, :3, 3]
        local = (points - shift) @ rotation
        d, g = _capsule_distances(local, joints[i:i + 1], tips[i:i + 1], radii[i:i + 1])
        distances[:, i] = d[:, 0]
        gradients[:, i] = g[:, 0] @ rotation.T
    sdf = smooth_min(distances, spec.smooth_k)
    if not with_gradient:
        return sdf
    weights = softmax(-spec.smooth_k * distances, axis=1)
    return sdf, np.einsum("pb,pbk->pk", weights, gradients), weights


def walking_pose(spec: SyntheticSceneSpec, frame: int) -> PoseParams:
    """Sinusoidal arm/leg swing about x with a slight torso yaw and vertical bob."""
    n = len(spec.bones)
    phase = 2.0 * np.pi * spec.walk_cycles * frame / spec.n_frames
    swing = np.sin(phase)
    rotations = np.zeros((n, 3))
    rotations[0, 1] = np.deg2rad(spec.torso_yaw_deg) * swing
    names = [b.name for b in spec.bones]
    for i, name in enumerate(names):
        if name == "left_arm":
            rotations[i, 0] = np.deg2rad(spec.arm_swing_deg) * swing
        elif name == "right_arm":
            rotations[i, 0] = -np.deg2rad(spec.arm_swing_deg) * swing
        elif name == "left_leg":
            rotations[i, 0] = -np.deg2rad(spec.leg_swing_deg) * swing
        elif name == "right_leg":
            rotations[i, 0] = np.deg2rad(spec.leg_swing_deg) * swing
    translation = np.array([0.0, spec.bob * np.sin(2.0 * phase), 0.0])
    return PoseParams(rotations=rotations, translation=translation)


def perturb_pose(pose: PoseParams, noise_deg: float, rng: np.random.Generator) -> PoseParams:
    """Compose every bone rotation with a random-axis rotation of noise_deg degrees."""
    if noise_deg == 0:
        return PoseParams(rotations=pose.rotations.copy(), translation=pose.translation.copy())
    axes = rng.normal(size=pose.rotations.shape)
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    noise = Rotation.from_rotvec(axes * np.deg2rad(noise_deg))
    noisy = (noise * Rotation.from_rotvec(pose.rotations)).as_rotvec()
    return PoseParams(rotations=noisy, translation=pose.translation.copy())


def orbit_camera(spec: SyntheticSceneSpec, azimuth_deg: float) -> Camera:
    az, el = np.deg2rad(azimuth_deg), np.deg2rad(spec.elevation_deg)
    eye = spec.orbit_radius * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
    return Camera.look_at(eye, np.zeros(3), fov_deg=spec.fov_deg, width=spec.width, height=spec.height)


def frame_azimuth(spec: SyntheticSceneSpec, frame: float) -> float:
    return spec.orbit_degrees * frame / spec.n_frames


def holdout_frames(spec: SyntheticSceneSpec) -> List[int]:
    """Pose frame shown by each held-out view; the camera sits half a step past it."""
    return [(h * spec.n_frames) // max(spec.holdout_views, 1) for h in range(spec.holdout_views)]


def illumination_scales(spec: SyntheticSceneSpec, rng: np.random.Generator) -> np.ndarray:
    return 1.0 + spec.illumination_jitter * rng.uniform(-1.0, 1.0, size=spec.n_frames)


def background_color(spec: SyntheticSceneSpec, origins: np.ndarray, directions: np.ndarray,
                     illumination: float) -> np.ndarray:
    """Far-sphere texture: checkered ground band below the horizon, sky gradient above."""
    b = np.sum(origins * directions, axis=-1)
    c = np.sum(origins * origins, axis=-1) - spec.background_radius ** 2
    t = -b + np.sqrt(np.maximum(b * b - c, 0.0))
    points = origins + t[:, None] * directions
    unit = points / np.linalg.norm(points, axis=1, keepdims=True)
    elevation = np.rad2deg(np.arcsin(np.clip(unit[:, 1], -1.0, 1.0)))
    azimuth = np.rad2deg(np.arctan2(unit[:, 0], unit[:, 2]))

    height = np.clip((elevation - spec.ground_elevation_deg) / (90.0 - spec.ground_elevation_deg), 0.0, 1.0)
    sky = (1.0 - height)[:, None] * np.asarray(spec.sky_horizon) + height[:, None] * np.asarray(spec.sky_zenith)
    cells = (np.floor(azimuth / spec.checker_size_deg) + np.floor(elevation / spec.checker_size_deg)).astype(int)
    ground = np.where((cells % 2 == 0)[:, None], np.asarray(spec.ground_colors[0]), np.asarray(spec.ground_colors[1]))
    color = np.where((elevation < spec.ground_elevation_deg)[:, None], ground, sky)
    return np.clip(color * illumination, 0.0, 1.0)

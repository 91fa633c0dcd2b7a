"""
Oracle Generator - sphere-traces the posed analytic figure into training
frames, held-out views and reference surface samples.

Nothing here goes through the volume renderer, so the generated ground truth
does not depend on the code being trained.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from body import PoseParams, Skeleton, bone_transforms_numpy, sample_capsule_surface
from render import Camera, intersect_unit_sphere

from .dataset import HoldoutView, OracleFrame, SyntheticDataset
from .scene import (
    SyntheticSceneSpec,
    background_color,
    capsule_arrays,
    frame_azimuth,
    holdout_frames,
    illumination_scales,
    orbit_camera,
    perturb_pose,
    posed_sdf,
    walking_pose,
)

logger = logging.getLogger(__name__)


class FigureOutsideSphereError(ValueError):
    """The posed figure leaves the unit sphere in some frame."""

    def __init__(self, frame: int, radius: float):
        super().__init__(f"frame {frame}: posed figure reaches radius {radius:.4f}, must stay inside the unit sphere")
        self.frame = frame
        self.radius = radius


class DegenerateSceneError(ValueError):
    """A frame has too few or too many human pixels."""


def figure_extent(spec: SyntheticSceneSpec, skeleton: Skeleton, pose) -> float:
    """Largest distance from the origin reached by any posed capsule."""
    transforms = bone_transforms_numpy(skeleton, pose)
    joints, tips, radii = capsule_arrays(spec)
    extent = 0.0
    for i in range(len(joints)):
        ends = np.stack([joints[i], tips[i]]) @ transforms[i, :3, :3].T + transforms[i, :3, 3]
        extent = max(extent, float(np.linalg.norm(ends, axis=1).max() + radii[i]))
    return extent


def sphere_trace(spec: SyntheticSceneSpec, skeleton: Skeleton, pose, origins: np.ndarray,
                 directions: np.ndarray) -> np.ndarray:
    """Ray depth of the first surface hit, inf where the ray misses the figure."""
    near, far, inside = intersect_unit_sphere(origins, directions)
    t = near.copy()
    active = inside.copy()
    converged = np.zeros(len(origins), dtype=bool)
    for _ in range(spec.trace_steps):
        ids = np.nonzero(active)[0]
        if len(ids) == 0:
            break
        sdf = posed_sdf(spec, skeleton, pose, origins[ids] + t[ids, None] * directions[ids])
        done = np.abs(sdf) < spec.trace_tolerance
        converged[ids[done]] = True
        active[ids[done]] = False
        moving = ids[~done]
        # the smooth union never overestimates distance, so the step is safe
        t[moving] += sdf[~done]
        active[moving[t[moving] > far[moving]]] = False
    return np.where(converged, t, np.inf)


def shade_human(spec: SyntheticSceneSpec, skeleton: Skeleton, pose, points: np.ndarray) -> np.ndarray:
    """Banded per-bone albedo with a Lambert term."""
    _, gradient, weights = posed_sdf(spec, skeleton, pose, points, with_gradient=True)
    normals = gradient / np.maximum(np.linalg.norm(gradient, axis=1, keepdims=True), 1e-12)
    bones = np.argmax(weights, axis=1)
    transforms = bone_transforms_numpy(skeleton, pose)
    joints, tips, _ = capsule_arrays(spec)

    axial = np.zeros(len(points))
    albedo = np.zeros((len(points), 3))
    for i in np.unique(bones):
        sel = bones == i
        local = (points[sel] - transforms[i, :3, 3]) @ transforms[i, :3, :3]
        axis = tips[i] - joints[i]
        axial[sel] = np.clip((local - joints[i]) @ axis / float(axis @ axis), 0.0, 1.0)
        albedo[sel] = spec.albedo(int(i))
    bands = 1.0 + spec.stripe_amplitude * np.sin(2.0 * np.pi * spec.stripe_frequency * axial)
    light = -np.asarray(spec.light_direction, dtype=np.float64)
    light /= np.linalg.norm(light)
    lambert = spec.ambient + (1.0 - spec.ambient) * np.maximum(normals @ light, 0.0)
    return np.clip(albedo * bands[:, None] * lambert[:, None], 0.0, 1.0)


def render_oracle_view(spec: SyntheticSceneSpec, skeleton: Skeleton, camera: Camera, pose,
                       illumination: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rgb, mask, depth) images of the posed figure in front of the far sphere."""
    origins, directions = camera.generate_rays(camera.all_pixels())
    depth = sphere_trace(spec, skeleton, pose, origins, directions)
    mask = np.isfinite(depth)
    rgb = background_color(spec, origins, directions, illumination)
    if mask.any():
        hits = origins[mask] + depth[mask, None] * directions[mask]
        rgb[mask] = shade_human(spec, skeleton, pose, hits)
    h, w = camera.shape
    return rgb.reshape(h, w, 3), mask.reshape(h, w), depth.reshape(h, w)


def _render_frame(spec: SyntheticSceneSpec, skeleton: Skeleton, index: int, pose: PoseParams,
                  noisy: PoseParams, illumination: float) -> OracleFrame:
    camera = orbit_camera(spec, frame_azimuth(spec, index))
    rgb, mask, depth = render_oracle_view(spec, skeleton, camera, pose, illumination)
    fraction = float(mask.mean())
    if not spec.min_human_fraction <= fraction <= spec.max_human_fraction:
        raise DegenerateSceneError(
            f"frame {index}: {fraction:.1%} human pixels outside "
            f"[{spec.min_human_fraction:.0%}, {spec.max_human_fraction:.0%}]")
    return OracleFrame(index=index, camera=camera, rgb=rgb, mask=mask, depth=depth, pose_true=pose.vector,
                       pose_noisy=noisy.vector, illumination=float(illumination))


def _render_holdout(spec: SyntheticSceneSpec, skeleton: Skeleton, index: int, frame: int) -> HoldoutView:
    pose = walking_pose(spec, frame)
    camera = orbit_camera(spec, frame_azimuth(spec, frame + 0.5))
    rgb, mask, _ = render_oracle_view(spec, skeleton, camera, pose, 1.0)
    return HoldoutView(index=index, pose_frame=frame, camera=camera, rgb=rgb, mask=mask, pose_true=pose.vector)


def generate_dataset(spec: SyntheticSceneSpec, seed: Optional[int] = None, n_jobs: int = 1) -> SyntheticDataset:
    """
    Render every frame of the walking sequence plus the held-out views.

    Frames render in parallel threads; randomness (illumination jitter, pose
    noise) is drawn up front from one generator so output is fixed per seed.
    """
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    skeleton = spec.skeleton()
    poses = [walking_pose(spec, i) for i in range(spec.n_frames)]
    for i, pose in enumerate(poses):
        extent = figure_extent(spec, skeleton, pose)
        if extent >= 1.0:
            raise FigureOutsideSphereError(i, extent)
    illumination = illumination_scales(spec, rng)
    noisy = [perturb_pose(pose, spec.pose_noise_deg, rng) for pose in poses]

    logger.info(f"[SYNTH] Rendering {spec.n_frames} frames at {spec.width}x{spec.height} (seed {seed})")
    frames: List[OracleFrame] = Parallel(n_jobs=n_jobs, backend="threading")(
        delayed(_render_frame)(spec, skeleton, i, poses[i], noisy[i], illumination[i]) for i in range(spec.n_frames)
    )
    holdout = [_render_holdout(spec, skeleton, h, frame) for h, frame in enumerate(holdout_frames(spec))]
    coverage = np.mean([f.mask.mean() for f in frames])
    logger.info(f"[SYNTH] Mean human coverage {coverage:.1%}, {len(holdout)} held-out views")
    return SyntheticDataset(spec=spec, frames=frames, holdout=holdout, seed=seed)


def oracle_surface_points(spec: SyntheticSceneSpec, pose, count: int, seed: int = 0,
                          skeleton: Optional[Skeleton] = None, newton_steps: int = 20,
                          tolerance: float = 1e-4) -> Tuple[np.ndarray, np.ndarray]:
    """
    Points on the posed analytic surface with unit normals.

    Candidates are drawn on the posed capsules in proportion to capsule area,
    pulled onto the smooth union by Newton steps along the gradient, and kept
    only when |sdf| <= tolerance.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if isinstance(pose, PoseParams):
        pose = pose.vector
    skeleton = skeleton if skeleton is not None else spec.skeleton()
    rng = np.random.default_rng(seed)
    transforms = bone_transforms_numpy(skeleton, pose)
    joints, tips, radii = capsule_arrays(spec)
    lengths = np.linalg.norm(tips - joints, axis=1)
    areas = 2.0 * np.pi * radii * lengths + 4.0 * np.pi * radii ** 2

    points, normals = [], []
    collected = 0
    for _ in range(50):
        per_bone = rng.multinomial(2 * (count - collected) + 64, areas / areas.sum())
        candidates = np.concatenate([
            sample_capsule_surface(joints[i], tips[i], radii[i], int(n), rng) @ transforms[i, :3, :3].T
            + transforms[i, :3, 3]
            for i, n in enumerate(per_bone) if n > 0
        ])
        for _ in range(newton_steps):
            sdf, gradient, _ = posed_sdf(spec, skeleton, pose, candidates, with_gradient=True)
            step = sdf / np.maximum(np.sum(gradient * gradient, axis=1), 1e-12)
            candidates = candidates - step[:, None] * gradient
        sdf, gradient, _ = posed_sdf(spec, skeleton, pose, candidates, with_gradient=True)
        length = np.linalg.norm(gradient, axis=1)
        keep = (np.abs(sdf) <= tolerance) & (length > 1e-6)
        points.append(candidates[keep])
        normals.append(gradient[keep] / length[keep, None])
        collected += int(keep.sum())
        if collected >= count:
            break
    points, normals = np.concatenate(points)[:count], np.concatenate(normals)[:count]
    if len(points) < count:
        logger.warning(f"[SYNTH] Only {len(points)} of {count} oracle surface points converged")
    return points, normals

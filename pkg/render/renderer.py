"""
Scene Renderer - prepares ray batches and renders them through the fields.

A render happens in two passes. prepare_rays fixes everything that is not
differentiated: sphere intersection, both inner sampling stages, outer
samples and deformed-space skinning weights. evaluate then runs the fields
on those fixed samples with gradients recorded for the field parameters and
the per-frame poses.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from autodiff import Tensor, as_tensor, concat, getitem, no_grad, reshape
from body import (
    Skeleton,
    bone_transforms,
    bone_transforms_numpy,
    deformed_normal,
    inverse_lbs,
    inverse_lbs_numpy,
    skinning_weights,
)
from fields import SceneFields, laplace_density

from .camera import Camera
from .integrate import RenderResult, composite, integrate_background, integrate_human
from .sampling import InnerSamples, OuterSamples, SamplingConfig, sample_inner, sample_outer

logger = logging.getLogger(__name__)

SURFACE_BAND = 0.1


@dataclass
class RayBatch:
    """Rays with fixed samples, grouped contiguously by pose index."""

    origins: np.ndarray
    directions: np.ndarray
    pose_ids: np.ndarray
    latent_ids: np.ndarray
    inner: InnerSamples
    outer: OuterSamples
    skin_weights: np.ndarray
    targets: Optional[np.ndarray] = None
    pixels: Optional[np.ndarray] = None
    groups: List[Tuple[int, slice]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.origins)

    @property
    def frames(self) -> List[int]:
        return [pose_id for pose_id, _ in self.groups]


@dataclass
class RenderOutput:
    result: RenderResult
    sdf: np.ndarray
    min_sdf: np.ndarray
    canonical_points: np.ndarray
    surface_points: np.ndarray


@dataclass
class RenderedImage:
    rgb: np.ndarray
    opacity: np.ndarray
    foreground: np.ndarray
    background: np.ndarray


def _groups(pose_ids: np.ndarray) -> List[Tuple[int, slice]]:
    groups = []
    start = 0
    for i in range(1, len(pose_ids) + 1):
        if i == len(pose_ids) or pose_ids[i] != pose_ids[start]:
            groups.append((int(pose_ids[start]), slice(start, i)))
            start = i
    return groups


class SceneRenderer:
    def __init__(self, fields: SceneFields, skeleton: Skeleton, config: SamplingConfig):
        self.fields = fields
        self.skeleton = skeleton
        self.config = config

    def _density_fn(self, pose: np.ndarray, transforms: np.ndarray):
        shape, density = self.fields.shape, self.fields.density

        def density_fn(points: np.ndarray, _mask: np.ndarray) -> np.ndarray:
            flat = points.reshape(-1, 3)
            canonical, _ = inverse_lbs_numpy(flat, self.skeleton, transforms)
            sdf = shape.sdf_numpy(canonical, pose)
            return laplace_density(sdf, density.alpha, density.beta).reshape(points.shape[:-1])

        return density_fn

    def prepare_rays(
        self,
        origins: np.ndarray,
        directions: np.ndarray,
        pose_ids: np.ndarray,
        poses: np.ndarray,
        latent_ids: Optional[np.ndarray] = None,
        targets: Optional[np.ndarray] = None,
        pixels: Optional[np.ndarray] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> RayBatch:
        """
        Fix samples for a set of rays. rng=None gives deterministic importance
        quantiles; latent id -1 selects the mean background latent.
        """
        poses = np.asarray(poses, dtype=np.float64)
        pose_ids = np.asarray(pose_ids, dtype=np.int64).reshape(-1)
        latent_ids = pose_ids.copy() if latent_ids is None else np.asarray(latent_ids, dtype=np.int64).reshape(-1)
        order = np.argsort(pose_ids, kind="stable")
        origins, directions = np.asarray(origins)[order], np.asarray(directions)[order]
        pose_ids, latent_ids = pose_ids[order], latent_ids[order]
        targets = None if targets is None else np.asarray(targets)[order]
        pixels = None if pixels is None else np.asarray(pixels)[order]
        groups = _groups(pose_ids)

        inner_parts, weight_parts = [], []
        with no_grad():
            for pose_id, sl in groups:
                transforms = bone_transforms_numpy(self.skeleton, poses[pose_id])
                inner = sample_inner(origins[sl], directions[sl], self._density_fn(poses[pose_id], transforms),
                                     self.config, rng)
                weights = skinning_weights(self.skeleton, inner.points.reshape(-1, 3), "deformed", transforms)
                inner_parts.append(inner)
                weight_parts.append(weights.reshape(inner.points.shape[:-1] + (self.skeleton.n_bones,)))
        outer = sample_outer(origins, directions, self.config.n_outer)
        n_inner = self.config.n_inner
        inner = InnerSamples(
            depths=np.concatenate([p.depths for p in inner_parts]) if inner_parts else np.zeros((0, n_inner)),
            deltas=np.concatenate([p.deltas for p in inner_parts]) if inner_parts else np.zeros((0, n_inner)),
            points=np.concatenate([p.points for p in inner_parts]) if inner_parts else np.zeros((0, n_inner, 3)),
            hit=np.concatenate([p.hit for p in inner_parts]) if inner_parts else np.zeros(0, dtype=bool),
        )
        skin = (np.concatenate(weight_parts) if weight_parts
                else np.zeros((0, n_inner, self.skeleton.n_bones)))
        return RayBatch(origins=origins, directions=directions, pose_ids=pose_ids, latent_ids=latent_ids,
                        inner=inner, outer=outer, skin_weights=skin, targets=targets, pixels=pixels, groups=groups)

    def evaluate(self, batch: RayBatch, poses: Union[Tensor, np.ndarray]) -> RenderOutput:
        """Differentiable render of a prepared batch; poses is the (F, n_theta) table."""
        poses = as_tensor(poses)
        shape, texture = self.fields.shape, self.fields.texture
        background, density = self.fields.background, self.fields.density
        n_bones = self.skeleton.n_bones
        n_inner = batch.inner.depths.shape[1]
        n_outer = batch.outer.depths.shape[1]

        sdf_parts, sigma_parts, rgb_parts, canon_parts = [], [], [], []
        sigma_b_parts, rgb_b_parts = [], []
        for pose_id, sl in batch.groups:
            count = sl.stop - sl.start
            pose = getitem(poses, pose_id)
            transforms = bone_transforms(self.skeleton, pose)
            points = batch.inner.points[sl].reshape(-1, 3)
            warp = inverse_lbs(points, self.skeleton, transforms, weights=batch.skin_weights[sl].reshape(-1, n_bones))
            sdf, features, gradient = shape.eval_sdf_with_gradient(warp.canonical, pose)
            _, normals = deformed_normal(warp, gradient)
            rgb = texture.eval_texture(warp.canonical, normals, pose, features)
            sdf_parts.append(sdf)
            sigma_parts.append(reshape(density(sdf), (count, n_inner)))
            rgb_parts.append(reshape(rgb, (count, n_inner, 3)))
            canon_parts.append(np.asarray(warp.canonical.data).reshape(count, n_inner, 3))

            latent_id = int(batch.latent_ids[sl.start])
            quads = batch.outer.quadruples[sl].reshape(-1, 4)
            view = np.repeat(batch.directions[sl], n_outer, axis=0)
            sigma_b, rgb_b = background.eval_background(quads, view, None if latent_id < 0 else latent_id)
            sigma_b_parts.append(reshape(sigma_b, (count, n_outer)))
            rgb_b_parts.append(reshape(rgb_b, (count, n_outer, 3)))

        sigma = concat(sigma_parts, axis=0)
        rgb = concat(rgb_parts, axis=0)
        color_h, opacity, tau = integrate_human(batch.inner.deltas, sigma, rgb)
        color_b = integrate_background(batch.outer.deltas, concat(sigma_b_parts, axis=0), concat(rgb_b_parts, axis=0))
        color = composite(color_h, opacity, color_b)

        sdf_values = np.concatenate([np.asarray(s.data, dtype=np.float64) for s in sdf_parts]).reshape(len(batch), n_inner)
        canonical = np.concatenate(canon_parts)
        min_sdf = np.where(batch.inner.hit, sdf_values.min(axis=1), np.inf)
        closest = np.argmin(np.abs(sdf_values), axis=1)
        near_surface = batch.inner.hit & (np.abs(sdf_values[np.arange(len(batch)), closest]) < SURFACE_BAND)
        surface_points = canonical[np.arange(len(batch)), closest][near_surface]
        result = RenderResult(color=color, color_human=color_h, color_background=color_b, opacity=opacity, weights=tau)
        return RenderOutput(result=result, sdf=sdf_values, min_sdf=min_sdf, canonical_points=canonical,
                            surface_points=surface_points)

    def render_rays(self, origins: np.ndarray, directions: np.ndarray, pose: np.ndarray,
                    latent_index: Optional[int]) -> dict:
        """Deterministic, gradient-free render of rays for one pose."""
        pose_ids = np.zeros(len(origins), dtype=np.int64)
        latent_ids = np.full(len(origins), -1 if latent_index is None else latent_index, dtype=np.int64)
        poses = np.asarray(pose, dtype=np.float64).reshape(1, -1)
        with no_grad():
            batch = self.prepare_rays(origins, directions, pose_ids, poses, latent_ids, rng=None)
            output = self.evaluate(batch, poses)
        return output.result.numpy()

    def render_image(self, camera: Camera, pose: np.ndarray, latent_index: Optional[int] = None,
                     n_jobs: int = 1) -> RenderedImage:
        """
        Render every pixel of camera. Tiles run in joblib threads and are
        reassembled in pixel order, so the image does not depend on n_jobs.
        """
        origins, directions = camera.generate_rays(camera.all_pixels())
        chunk = self.config.chunk_rays
        starts = list(range(0, len(origins), chunk))
        tiles = Parallel(n_jobs=n_jobs, backend="threading")(
            delayed(self.render_rays)(origins[s:s + chunk], directions[s:s + chunk], pose, latent_index)
            for s in starts
        )
        h, w = camera.shape
        merged = {key: np.concatenate([tile[key] for tile in tiles]) for key in tiles[0]}
        logger.debug(f"[RENDER] Rendered {h}x{w} image in {len(starts)} tiles")
        return RenderedImage(
            rgb=merged["color"].reshape(h, w, 3),
            opacity=merged["opacity"].reshape(h, w),
            foreground=merged["color_human"].reshape(h, w, 3),
            background=merged["color_background"].reshape(h, w, 3),
        )


def render_mask(opacity: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Binary foreground mask: opacity >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"mask threshold must lie in (0, 1), got {threshold}")
    return np.asarray(opacity) >= threshold

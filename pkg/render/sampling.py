"""
Ray sampling - unit-sphere intersection, two-stage inner sampling and
inverse-depth outer sampling.

Everything here runs on plain numpy: sample positions are constants of the
differentiable pass that follows.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fields import invert_sphere

logger = logging.getLogger(__name__)

FAR_INTERVAL = 1e10


class SamplingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_uniform: int = Field(32, ge=1)
    n_importance: int = Field(32, ge=0)
    n_outer: int = Field(32, ge=1)
    pdf_padding: float = Field(1e-5, gt=0)
    chunk_rays: int = Field(1024, ge=1)
    mask_threshold: float = Field(0.5, gt=0, lt=1)

    @property
    def n_inner(self) -> int:
        return self.n_uniform + self.n_importance


def intersect_unit_sphere(origins: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(near, far, hit) of each ray with the unit sphere; near is clamped at 0."""
    b = np.sum(origins * directions, axis=-1)
    c = np.sum(origins * origins, axis=-1) - 1.0
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    near = np.maximum(-b - root, 0.0)
    far = -b + root
    hit = (disc > 0) & (far > near)
    near = np.where(hit, near, 0.0)
    far = np.where(hit, far, 0.0)
    return near, far, hit


def uniform_depths(near: np.ndarray, far: np.ndarray, count: int) -> np.ndarray:
    """Interval midpoints: near + (i + 1/2) (far - near) / count."""
    steps = (np.arange(count) + 0.5) / count
    return near[:, None] + (far - near)[:, None] * steps[None, :]


def sample_pdf(edges: np.ndarray, weights: np.ndarray, count: int, rng: Optional[np.random.Generator] = None,
               padding: float = 1e-5) -> np.ndarray:
    """
    Inverse-CDF draws from the piecewise-constant density over bins.

    edges: (R, B + 1) sorted bin boundaries; weights: (R, B). With rng=None the
    draws are the fixed quantiles (j + 1) / (count + 1).
    """
    weights = np.asarray(weights, dtype=np.float64) + padding
    pdf = weights / weights.sum(axis=-1, keepdims=True)
    cdf = np.concatenate([np.zeros((len(pdf), 1)), np.cumsum(pdf, axis=-1)], axis=-1)
    cdf[:, -1] = 1.0
    if rng is None:
        u = np.broadcast_to((np.arange(count) + 1.0) / (count + 1.0), (len(pdf), count))
    else:
        u = rng.uniform(0.0, 1.0, size=(len(pdf), count))
    samples = np.empty((len(pdf), count))
    for r in range(len(pdf)):
        idx = np.clip(np.searchsorted(cdf[r], u[r], side="right"), 1, cdf.shape[1] - 1)
        below, above = cdf[r, idx - 1], cdf[r, idx]
        denom = np.where(above - below < 1e-12, 1.0, above - below)
        frac = (u[r] - below) / denom
        samples[r] = edges[r, idx - 1] + frac * (edges[r, idx] - edges[r, idx - 1])
    return samples


def quadrature_weights(sigma: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """tau_i = exp(-sum_{j<i} sigma_j delta_j) (1 - exp(-sigma_i delta_i)), numpy form."""
    optical = sigma * deltas
    transmittance = np.exp(-(np.cumsum(optical, axis=-1) - optical))
    return transmittance * (1.0 - np.exp(-optical))


def depth_deltas(depths: np.ndarray, far: np.ndarray) -> np.ndarray:
    """Adjacent depth differences; the last interval runs to the far bound."""
    return np.concatenate([np.diff(depths, axis=-1), (far[:, None] - depths[:, -1:])], axis=-1)


@dataclass
class InnerSamples:
    depths: np.ndarray
    deltas: np.ndarray
    points: np.ndarray
    hit: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        """Inner samples per ray; zero for rays that miss the unit sphere."""
        return np.where(self.hit, self.depths.shape[1], 0)


def sample_inner(
    origins: np.ndarray,
    directions: np.ndarray,
    density_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    config: SamplingConfig,
    rng: Optional[np.random.Generator] = None,
) -> InnerSamples:
    """
    Two-stage inner samples: midpoint-uniform depths on the sphere interval,
    then inverse-CDF draws over the stage-one quadrature weights.

    density_fn maps (points (R, N, 3), ray mask (R,)) to densities (R, N).
    Rays that miss the sphere keep placeholder samples with zero intervals.
    """
    near, far, hit = intersect_unit_sphere(origins, directions)
    stage_one = uniform_depths(near, far, config.n_uniform)
    depths = stage_one
    if config.n_importance > 0:
        deltas = depth_deltas(stage_one, far)
        points = origins[:, None, :] + stage_one[..., None] * directions[:, None, :]
        sigma = np.zeros(stage_one.shape)
        if np.any(hit):
            sigma[hit] = density_fn(points[hit], hit)
        tau = quadrature_weights(sigma, deltas)
        edges = near[:, None] + (far - near)[:, None] * (np.arange(config.n_uniform + 1) / config.n_uniform)[None, :]
        extra = sample_pdf(edges, tau, config.n_importance, rng, config.pdf_padding)
        depths = np.sort(np.concatenate([stage_one, extra], axis=-1), axis=-1)
    deltas = np.where(hit[:, None], depth_deltas(depths, far), 0.0)
    points = origins[:, None, :] + depths[..., None] * directions[:, None, :]
    return InnerSamples(depths=depths, deltas=deltas, points=points, hit=hit)


@dataclass
class OuterSamples:
    depths: np.ndarray
    deltas: np.ndarray
    quadruples: np.ndarray
    radii: np.ndarray


def outer_start_radius(origins: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closest-approach parameter and distance, and the radius where outer sampling begins."""
    t_mid = -np.sum(origins * directions, axis=-1)
    p_mid = np.linalg.norm(origins + t_mid[:, None] * directions, axis=-1)
    return t_mid, p_mid, np.maximum(p_mid, 1.0)


def sample_outer(origins: np.ndarray, directions: np.ndarray, count: int) -> OuterSamples:
    """
    count points with 1/r equispaced in (0, 1/r_start]: 1/r_k = (count - k) / (count r_start).

    r_start is the unit-sphere exit (r = 1) or, for rays that miss, the
    closest-approach radius. Intervals are distances along the ray; the last
    one is FAR_INTERVAL.
    """
    t_mid, p_mid, r_start = outer_start_radius(origins, directions)
    inverse_r = (count - np.arange(count))[None, :] / (count * r_start[:, None])
    radii = 1.0 / inverse_r
    depths = t_mid[:, None] + np.sqrt(np.maximum(radii ** 2 - p_mid[:, None] ** 2, 0.0))
    points = origins[:, None, :] + depths[..., None] * directions[:, None, :]
    quadruples = invert_sphere(points.reshape(-1, 3)).reshape(points.shape[:-1] + (4,))
    deltas = np.concatenate([np.diff(depths, axis=-1), np.full((len(depths), 1), FAR_INTERVAL)], axis=-1)
    return OuterSamples(depths=depths, deltas=deltas, quadruples=quadruples, radii=radii)

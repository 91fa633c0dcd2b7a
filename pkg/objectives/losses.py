"""
Objectives - ray classification and every loss term of the training objective.

    total = rgb + lambda_dec * (lambda_bce * bce + lambda_sparse * sparse) + lambda_eik * eikonal
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from autodiff import Tensor, absolute, as_tensor, clip, getitem, log, mean, norm, tsum

logger = logging.getLogger(__name__)

OPACITY_CLAMP = 1e-7

# counts batches whose off-subject set came out empty
empty_off_set_warnings = {"count": 0}


class RayCountMismatchError(ValueError):
    """Rendered and ground-truth ray counts differ."""


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambda_dec: float = Field(1.0, ge=0)
    lambda_bce: float = Field(0.01, ge=0)
    lambda_sparse: float = Field(0.1, ge=0)
    lambda_eik: float = Field(0.1, ge=0)


@dataclass
class RayClassification:
    off: np.ndarray
    epsilon: float

    @property
    def n_off(self) -> int:
        return int(np.count_nonzero(self.off))

    @property
    def n_on(self) -> int:
        return int(len(self.off) - self.n_off)


def classify_off_rays(min_sdf: np.ndarray, epsilon: float) -> RayClassification:
    """
    Off-subject rays: no inner samples (min_sdf = inf) or every canonical
    sample farther than epsilon from the current surface.
    """
    if epsilon <= 0:
        raise ValueError(f"classification epsilon must be positive, got {epsilon}")
    min_sdf = np.asarray(min_sdf, dtype=np.float64)
    return RayClassification(off=~np.isfinite(min_sdf) | (min_sdf > epsilon), epsilon=float(epsilon))


def epsilon_schedule(step: int, total_steps: int, start: float = 0.2, end: float = 0.05) -> float:
    """Linear decay from start to end over the first half of training, then constant."""
    half = max(total_steps / 2.0, 1.0)
    progress = min(max(step, 0) / half, 1.0)
    return start + (end - start) * progress


def loss_rgb(colors, targets) -> Tensor:
    """Mean over rays of the channel-summed L1 error."""
    colors = as_tensor(colors)
    targets = np.asarray(targets)
    if colors.shape[0] != targets.shape[0]:
        raise RayCountMismatchError(f"{colors.shape[0]} rendered rays vs {targets.shape[0]} ground-truth pixels")
    return mean(tsum(absolute(colors - targets), axis=-1))


def eikonal_residual(gradients) -> Tensor:
    """E[(||grad|| - 1)^2]."""
    length = norm(as_tensor(gradients), axis=-1, eps=1e-12)
    deviation = length - 1.0
    return mean(deviation * deviation)


def loss_eikonal(shape_field, pose, points: np.ndarray) -> Tensor:
    _, _, gradients = shape_field.eval_sdf_with_gradient(points, pose)
    return eikonal_residual(gradients)


def eikonal_points(rng: np.random.Generator, count: int, surface_points: Optional[np.ndarray],
                   fallback_points: np.ndarray, bound: float = 1.0, sigma: float = 0.05) -> np.ndarray:
    """Half uniform in the canonical box, half Gaussian-perturbed surface points."""
    n_uniform = count - count // 2
    uniform = rng.uniform(-bound, bound, size=(n_uniform, 3))
    anchors = surface_points if surface_points is not None and len(surface_points) else fallback_points
    picks = anchors[rng.integers(0, len(anchors), size=count // 2)]
    near = picks + rng.normal(0.0, sigma, size=picks.shape)
    return np.concatenate([uniform, near])


def loss_sparse(opacity, classification: RayClassification) -> Tensor:
    """Mean |alpha| over off-subject rays; zero when there are none."""
    opacity = as_tensor(opacity)
    if classification.n_off == 0:
        empty_off_set_warnings["count"] += 1
        logger.warning(f"[OBJECTIVES] Empty off-subject ray set ({empty_off_set_warnings['count']} so far)")
        return tsum(opacity * 0.0)
    return mean(absolute(getitem(opacity, np.nonzero(classification.off)[0])))


def loss_bce(opacity) -> Tensor:
    """Mean binary entropy of the clamped opacities."""
    a = clip(as_tensor(opacity), OPACITY_CLAMP, 1.0 - OPACITY_CLAMP)
    return mean(-(a * log(a) + (1.0 - a) * log(1.0 - a)))


@dataclass
class LossReport:
    total: Tensor
    rgb: Tensor
    bce: Tensor
    sparse: Tensor
    eikonal: Tensor
    classification: RayClassification
    weights: LossWeights

    def as_row(self) -> Dict[str, float]:
        return {
            "total": self.total.item(),
            "rgb": self.rgb.item(),
            "bce": self.bce.item(),
            "sparse": self.sparse.item(),
            "eikonal": self.eikonal.item(),
            "n_rays": len(self.classification.off),
            "n_off": self.classification.n_off,
            "n_on": self.classification.n_on,
            "epsilon": self.classification.epsilon,
        }

    def reconstructed_total(self) -> float:
        w = self.weights
        return (self.rgb.item() + w.lambda_dec * (w.lambda_bce * self.bce.item() + w.lambda_sparse * self.sparse.item())
                + w.lambda_eik * self.eikonal.item())


def combine_losses(rgb: Tensor, bce: Tensor, sparse: Tensor, eikonal: Tensor,
                   classification: RayClassification, weights: LossWeights) -> LossReport:
    decomposition = bce * weights.lambda_bce + sparse * weights.lambda_sparse
    total = rgb + decomposition * weights.lambda_dec + eikonal * weights.lambda_eik
    return LossReport(total=total, rgb=rgb, bce=bce, sparse=sparse, eikonal=eikonal,
                      classification=classification, weights=weights)


def total_loss(renderer, batch, poses, weights: LossWeights, epsilon: float,
               eikonal_sample: Union[np.ndarray, Sequence[np.ndarray]], output=None) -> LossReport:
    """
    Full objective on a prepared batch. eikonal_sample holds canonical points,
    split evenly across the frames in the batch (each evaluated with its pose).
    """
    if batch.targets is None:
        raise RayCountMismatchError("ray batch carries no ground-truth pixels")
    output = output if output is not None else renderer.evaluate(batch, poses)
    result = output.result
    classification = classify_off_rays(output.min_sdf, epsilon)
    rgb = loss_rgb(result.color, batch.targets)
    bce = loss_bce(result.opacity)
    sparse = loss_sparse(result.opacity, classification)

    frames = batch.frames
    poses = as_tensor(poses)
    chunks = np.array_split(np.asarray(eikonal_sample), len(frames)) if frames else []
    terms = [loss_eikonal(renderer.fields.shape, getitem(poses, f), pts) * float(len(pts))
             for f, pts in zip(frames, chunks) if len(pts)]
    if terms:
        eikonal = terms[0]
        for term in terms[1:]:
            eikonal = eikonal + term
        eikonal = eikonal / float(sum(len(p) for p in chunks))
    else:
        eikonal = tsum(result.opacity * 0.0)
    return combine_losses(rgb, bce, sparse, eikonal, classification, weights)

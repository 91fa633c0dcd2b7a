"""
Metrics - segmentation, surface and image quality measures.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn.neighbors import KDTree

from .mesh import Bounds, _bounds

logger = logging.getLogger(__name__)


class EmptyPointSetError(ValueError):
    """A metric was asked to compare an empty point set."""


class SizeMismatchError(ValueError):
    """Masks or images differ in size."""


class ZeroNormalError(ValueError):
    """An oriented point carries a zero normal."""


def _points(points: np.ndarray, label: str) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyPointSetError(f"point set {label} is empty")
    return points


def nearest(source: np.ndarray, target: np.ndarray):
    """Distance and index of the nearest target point for every source point."""
    distances, indices = KDTree(target).query(source, k=1)
    return distances[:, 0], indices[:, 0]


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean (un-squared) nearest-neighbour distance."""
    a, b = _points(a, "A"), _points(b, "B")
    d_ab, _ = nearest(a, b)
    d_ba, _ = nearest(b, a)
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def _unit_normals(normals: np.ndarray, label: str) -> np.ndarray:
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    length = np.linalg.norm(normals, axis=1)
    if np.any(length < 1e-12):
        raise ZeroNormalError(f"{int(np.sum(length < 1e-12))} zero normals in set {label}")
    return normals / length[:, None]


def normal_consistency(points_a: np.ndarray, normals_a: np.ndarray, points_b: np.ndarray,
                       normals_b: np.ndarray) -> float:
    """Mean |n_a . n_nn(a)| in both directions; orientation-agnostic, in [0, 1]."""
    points_a, points_b = _points(points_a, "A"), _points(points_b, "B")
    normals_a, normals_b = _unit_normals(normals_a, "A"), _unit_normals(normals_b, "B")
    _, idx_ab = nearest(points_a, points_b)
    _, idx_ba = nearest(points_b, points_a)
    ab = np.abs(np.sum(normals_a * normals_b[idx_ab], axis=1)).mean()
    ba = np.abs(np.sum(normals_b * normals_a[idx_ba], axis=1)).mean()
    return float(np.clip(0.5 * (ab + ba), 0.0, 1.0))


@dataclass
class MaskMetrics:
    precision: float
    recall: float
    f1: float
    iou: float


def mask_metrics(pred: np.ndarray, gt: np.ndarray) -> MaskMetrics:
    """
    Pixel-set precision, recall, F1 and IoU.

    Two empty masks agree perfectly (all ones); otherwise an empty denominator
    gives 0.
    """
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise SizeMismatchError(f"mask sizes differ: {pred.shape} vs {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    if tp + fp + fn == 0:
        return MaskMetrics(1.0, 1.0, 1.0, 1.0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MaskMetrics(precision=precision, recall=recall, f1=f1, iou=tp / (tp + fp + fn))


def volumetric_iou(sdf_a: Callable[[np.ndarray], np.ndarray], sdf_b: Callable[[np.ndarray], np.ndarray],
                   resolution: int = 128, bounds: Bounds = (-1.0, 1.0), chunk: int = 65536) -> float:
    """Occupancy (sdf <= 0) IoU on the cell centers of a resolution^3 grid."""
    lo, hi = _bounds(bounds)
    axes = [lo[k] + (np.arange(resolution) + 0.5) * (hi[k] - lo[k]) / resolution for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    inter = union = 0
    for s in range(0, len(grid), chunk):
        block = grid[s:s + chunk]
        occ_a = np.asarray(sdf_a(block)).reshape(-1) <= 0.0
        occ_b = np.asarray(sdf_b(block)).reshape(-1) <= 0.0
        inter += int(np.count_nonzero(occ_a & occ_b))
        union += int(np.count_nonzero(occ_a | occ_b))
    return 1.0 if union == 0 else inter / union


def psnr(img_a: np.ndarray, img_b: np.ndarray) -> float:
    """10 log10(1 / MSE) in dB; identical images give +inf."""
    img_a, img_b = np.asarray(img_a, dtype=np.float64), np.asarray(img_b, dtype=np.float64)
    if img_a.shape != img_b.shape:
        raise SizeMismatchError(f"image sizes differ: {img_a.shape} vs {img_b.shape}")
    mse = float(np.mean((img_a - img_b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def opacity_bimodality(opacities: np.ndarray, low: float = 0.1, high: float = 0.9) -> float:
    """Fraction of rays whose opacity is undecided, strictly between low and high."""
    opacities = np.asarray(opacities, dtype=np.float64).reshape(-1)
    if opacities.size == 0:
        return 0.0
    return float(np.mean((opacities > low) & (opacities < high)))


class MetricsReport(BaseModel):
    """Evaluation summary; metrics without ground truth stay None."""

    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")

    mask_precision: Optional[float] = Field(None, ge=0, le=1)
    mask_recall: Optional[float] = Field(None, ge=0, le=1)
    mask_f1: Optional[float] = Field(None, ge=0, le=1)
    mask_iou: Optional[float] = Field(None, ge=0, le=1)
    mask_iou_by_threshold: Dict[str, float] = Field(default_factory=dict)
    volumetric_iou: Optional[float] = Field(None, ge=0, le=1)
    chamfer: Optional[float] = Field(None, ge=0)
    chamfer_cm: Optional[float] = Field(None, ge=0)
    normal_consistency: Optional[float] = Field(None, ge=0, le=1)
    psnr_input: Optional[float] = None
    psnr_holdout: Optional[float] = None
    opacity_bimodality: Optional[float] = Field(None, ge=0, le=1)
    pose_angle_error_before_deg: Optional[float] = Field(None, ge=0)
    pose_angle_error_after_deg: Optional[float] = Field(None, ge=0)
    frames: int = 0

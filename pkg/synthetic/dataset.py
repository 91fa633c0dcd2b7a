"""
Dataset - in-memory frames and the on-disk directory format.

    manifest.json        scene spec, per-frame camera / poses / illumination
    rgb_%04d.png         input image
    mask_%04d.png        human mask (optional for datasets without ground truth)
    depth_%04d.f32       human depth, little-endian row-major float32, inf = miss
    holdout_rgb_%02d.png / holdout_mask_%02d.png
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from render import Camera
from utils.images import read_depth, read_mask, read_rgb, write_depth, write_mask, write_rgb

from .scene import SyntheticSceneSpec

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    """Dataset directory is missing files or carries a malformed manifest."""


@dataclass
class OracleFrame:
    index: int
    camera: Camera
    rgb: np.ndarray
    mask: Optional[np.ndarray] = None
    depth: Optional[np.ndarray] = None
    pose_true: Optional[np.ndarray] = None
    pose_noisy: Optional[np.ndarray] = None
    illumination: float = 1.0


@dataclass
class HoldoutView:
    index: int
    pose_frame: int
    camera: Camera
    rgb: np.ndarray
    mask: Optional[np.ndarray] = None
    pose_true: Optional[np.ndarray] = None


@dataclass
class SyntheticDataset:
    spec: SyntheticSceneSpec
    frames: List[OracleFrame]
    holdout: List[HoldoutView] = field(default_factory=list)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def image_shape(self):
        return self.frames[0].rgb.shape[:2]

    @property
    def cm_per_unit(self) -> float:
        return self.spec.cm_per_unit

    @property
    def has_ground_truth(self) -> bool:
        return bool(self.frames) and all(f.mask is not None and f.pose_true is not None for f in self.frames)

    def initial_poses(self, kind: str = "true") -> np.ndarray:
        """(F, n_theta) starting poses: the true ones or the perturbed ones."""
        if kind not in ("true", "noisy"):
            raise ValueError(f"initial poses must be 'true' or 'noisy', got '{kind}'")
        rows = [f.pose_true if kind == "true" else f.pose_noisy for f in self.frames]
        if any(r is None for r in rows):
            raise DatasetFormatError(f"dataset carries no '{kind}' poses")
        return np.stack(rows).astype(np.float64)

    def true_poses(self) -> Optional[np.ndarray]:
        if not self.frames or any(f.pose_true is None for f in self.frames):
            return None
        return np.stack([f.pose_true for f in self.frames])

    def manifest(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "scene": self.spec.model_dump(mode="json"),
            "cm_per_unit": self.spec.cm_per_unit,
            "frames": [
                {
                    "index": f.index,
                    "camera": f.camera.to_dict(),
                    "illumination": f.illumination,
                    "pose_true": None if f.pose_true is None else np.asarray(f.pose_true).tolist(),
                    "pose_noisy": None if f.pose_noisy is None else np.asarray(f.pose_noisy).tolist(),
                    "human_fraction": None if f.mask is None else float(np.mean(f.mask)),
                }
                for f in self.frames
            ],
            "holdout": [
                {
                    "index": h.index,
                    "pose_frame": h.pose_frame,
                    "camera": h.camera.to_dict(),
                    "pose_true": None if h.pose_true is None else np.asarray(h.pose_true).tolist(),
                }
                for h in self.holdout
            ],
        }

    def save(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        for f in self.frames:
            write_rgb(os.path.join(directory, f"rgb_{f.index:04d}.png"), f.rgb)
            if f.mask is not None:
                write_mask(os.path.join(directory, f"mask_{f.index:04d}.png"), f.mask)
            if f.depth is not None:
                write_depth(os.path.join(directory, f"depth_{f.index:04d}.f32"), f.depth)
        for h in self.holdout:
            write_rgb(os.path.join(directory, f"holdout_rgb_{h.index:02d}.png"), h.rgb)
            if h.mask is not None:
                write_mask(os.path.join(directory, f"holdout_mask_{h.index:02d}.png"), h.mask)
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
        logger.info(f"[SYNTH] Wrote {len(self.frames)} frames and {len(self.holdout)} held-out views to {directory}")

    @classmethod
    def load(cls, directory: str) -> "SyntheticDataset":
        path = os.path.join(directory, "manifest.json")
        if not os.path.isfile(path):
            raise DatasetFormatError(f"no manifest.json in {directory}")
        try:
            with open(path) as fh:
                manifest = json.load(fh)
            if manifest.get("format_version") != FORMAT_VERSION:
                raise DatasetFormatError(f"unsupported dataset format version {manifest.get('format_version')}")
            spec = SyntheticSceneSpec.model_validate(manifest["scene"])
            frames = [_load_frame(directory, entry) for entry in manifest["frames"]]
            holdout = [_load_holdout(directory, entry) for entry in manifest.get("holdout", [])]
        except (KeyError, TypeError, json.JSONDecodeError, ValidationError) as e:
            raise DatasetFormatError(f"malformed dataset manifest {path}: {e}") from e
        except FileNotFoundError as e:
            raise DatasetFormatError(f"dataset file missing: {e}") from e
        if not frames:
            raise DatasetFormatError(f"dataset {directory} has no frames")
        logger.info(f"[SYNTH] Loaded {len(frames)} frames from {directory}")
        return cls(spec=spec, frames=frames, holdout=holdout, seed=int(manifest.get("seed", 0)))


def _optional(path: str, reader, *args):
    return reader(path, *args) if os.path.isfile(path) else None


def _array(value) -> Optional[np.ndarray]:
    return None if value is None else np.asarray(value, dtype=np.float64)


def _load_frame(directory: str, entry: Dict[str, Any]) -> OracleFrame:
    index = int(entry["index"])
    camera = Camera.from_dict(entry["camera"])
    rgb = read_rgb(os.path.join(directory, f"rgb_{index:04d}.png"))
    if rgb.shape[:2] != camera.shape:
        raise DatasetFormatError(f"frame {index}: image {rgb.shape[:2]} does not match camera {camera.shape}")
    return OracleFrame(
        index=index,
        camera=camera,
        rgb=rgb,
        mask=_optional(os.path.join(directory, f"mask_{index:04d}.png"), read_mask),
        depth=_optional(os.path.join(directory, f"depth_{index:04d}.f32"), read_depth, *camera.shape),
        pose_true=_array(entry.get("pose_true")),
        pose_noisy=_array(entry.get("pose_noisy")),
        illumination=float(entry.get("illumination", 1.0)),
    )


def _load_holdout(directory: str, entry: Dict[str, Any]) -> HoldoutView:
    index = int(entry["index"])
    return HoldoutView(
        index=index,
        pose_frame=int(entry["pose_frame"]),
        camera=Camera.from_dict(entry["camera"]),
        rgb=read_rgb(os.path.join(directory, f"holdout_rgb_{index:02d}.png")),
        mask=_optional(os.path.join(directory, f"holdout_mask_{index:02d}.png"), read_mask),
        pose_true=_array(entry.get("pose_true")),
    )

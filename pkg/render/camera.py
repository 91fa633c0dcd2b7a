"""
Pinhole camera (OpenCV convention: x right, y down, z forward).
"""

from typing import Dict, Any, Tuple

import numpy as np


class PixelOutOfBoundsError(IndexError):
    """A requested pixel lies outside the image."""


class Camera:
    def __init__(self, intrinsics: np.ndarray, extrinsics: np.ndarray, width: int, height: int):
        self.intrinsics = np.asarray(intrinsics, dtype=np.float64).reshape(3, 3)
        self.extrinsics = np.asarray(extrinsics, dtype=np.float64).reshape(4, 4)
        self.width = int(width)
        self.height = int(height)
        rotation = self.rotation
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-8):
            raise ValueError("camera rotation is not orthonormal")
        if self.intrinsics[0, 0] <= 0 or self.intrinsics[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid image size {self.width}x{self.height}")

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0), fov_deg: float = 55.0,
                width: int = 96, height: int = 96) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward])
        extrinsics = np.eye(4)
        extrinsics[:3, :3] = rotation
        extrinsics[:3, 3] = -rotation @ eye
        focal = 0.5 * width / np.tan(0.5 * np.deg2rad(fov_deg))
        intrinsics = np.array([[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]])
        return cls(intrinsics, extrinsics, width, height)

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsics[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.extrinsics[:3, 3]

    @property
    def optical_axis(self) -> np.ndarray:
        return self.rotation[2]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def all_pixels(self) -> np.ndarray:
        """Every (row, col) pixel index in row-major order."""
        rows, cols = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        return np.stack([rows.reshape(-1), cols.reshape(-1)], axis=1)

    def rays_through(self, coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """World rays through continuous image coordinates (x, y)."""
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        fx, fy = self.intrinsics[0, 0], self.intrinsics[1, 1]
        cx, cy = self.intrinsics[0, 2], self.intrinsics[1, 2]
        local = np.stack([(coords[:, 0] - cx) / fx, (coords[:, 1] - cy) / fy, np.ones(len(coords))], axis=1)
        directions = local @ self.rotation
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        origins = np.broadcast_to(self.center, directions.shape).copy()
        return origins, directions

    def generate_rays(self, pixels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Rays through the centers of integer (row, col) pixels."""
        pixels = np.asarray(pixels).reshape(-1, 2)
        outside = (pixels[:, 0] < 0) | (pixels[:, 0] >= self.height) | (pixels[:, 1] < 0) | (pixels[:, 1] >= self.width)
        if np.any(outside):
            bad = pixels[outside][0]
            raise PixelOutOfBoundsError(f"pixel {tuple(int(v) for v in bad)} outside {self.height}x{self.width} image")
        coords = np.stack([pixels[:, 1] + 0.5, pixels[:, 0] + 0.5], axis=1)
        return self.rays_through(coords)

    def project(self, points: np.ndarray) -> np.ndarray:
        """World points to continuous (x, y) image coordinates."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        local = points @ self.rotation.T + self.extrinsics[:3, 3]
        pixels = local @ self.intrinsics.T
        return pixels[:, :2] / pixels[:, 2:3]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "intrinsics": self.intrinsics.tolist(),
            "extrinsics": self.extrinsics.tolist(),
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Camera":
        return cls(np.array(data["intrinsics"]), np.array(data["extrinsics"]), data["width"], data["height"])

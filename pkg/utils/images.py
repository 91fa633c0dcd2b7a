"""
Image I/O - PNG read/write through OpenCV and raw float32 depth maps.

Arrays in memory are RGB floats in [0, 1]; OpenCV stores BGR uint8.
"""

import os

import cv2
import numpy as np


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_rgb(path: str, image: np.ndarray) -> None:
    if not cv2.imwrite(path, to_uint8(image)[:, :, ::-1]):
        raise IOError(f"could not write image {path}")


def write_gray(path: str, image: np.ndarray) -> None:
    if not cv2.imwrite(path, to_uint8(image)):
        raise IOError(f"could not write image {path}")


def read_rgb(path: str) -> np.ndarray:
    image = cv2.imread(path, cv2.IMREAD_COLOR)
    if image is None:
        raise FileNotFoundError(path)
    return image[:, :, ::-1].astype(np.float64) / 255.0


def write_mask(path: str, mask: np.ndarray) -> None:
    if not cv2.imwrite(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)):
        raise IOError(f"could not write mask {path}")


def read_mask(path: str) -> np.ndarray:
    mask = cv2.imread(path, cv2.IMREAD_GRAYSCALE)
    if mask is None:
        raise FileNotFoundError(path)
    return mask >= 128


def write_depth(path: str, depth: np.ndarray) -> None:
    """Little-endian row-major float32."""
    np.ascontiguousarray(depth, dtype="<f4").tofile(path)


def read_depth(path: str, height: int, width: int) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size != height * width:
        raise ValueError(f"{os.path.basename(path)} holds {data.size} values, expected {height * width}")
    return data.reshape(height, width).astype(np.float64)

"""
Mesh extraction - marching cubes on an SDF grid, posing by forward LBS, OBJ I/O.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import mcubes
import numpy as np
import trimesh

from body import Skeleton, bone_transforms_numpy, skinning_weights

logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12

Bounds = Union[Tuple[float, float], Tuple[Sequence[float], Sequence[float]]]


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise IndexError(f"face index out of range for {len(self.vertices)} vertices")

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros((0, 3)))

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def face_normals(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-30)

    def without_degenerate(self) -> "TriangleMesh":
        keep = self.face_areas() > DEGENERATE_AREA
        return TriangleMesh(self.vertices, self.faces[keep], self.normals)

    def flipped(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.faces[:, ::-1].copy(), self.normals)

    def edge_valence(self) -> np.ndarray:
        """Number of faces sharing each undirected edge."""
        edges = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return counts

    def is_watertight(self) -> bool:
        return not self.is_empty and bool(np.all(self.edge_valence() == 2))

    def to_trimesh(self) -> trimesh.Trimesh:
        return trimesh.Trimesh(vertices=self.vertices, faces=self.faces, vertex_normals=self.normals, process=False)

    def sample_surface(self, count: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """Area-weighted surface points with their face normals."""
        if self.is_empty:
            return np.zeros((0, 3)), np.zeros((0, 3))
        points, face_index = trimesh.sample.sample_surface(self.to_trimesh(), count, seed=seed)
        return np.asarray(points, dtype=np.float64), self.face_normals()[face_index]

    def write_obj(self, path: str) -> None:
        """ASCII OBJ with v, vn and f records."""
        text = trimesh.exchange.obj.export_obj(self.to_trimesh(), include_normals=self.normals is not None,
                                               include_color=False, include_texture=False)
        with open(path, "w") as fh:
            fh.write(text)

    @classmethod
    def read_obj(cls, path: str) -> "TriangleMesh":
        mesh = trimesh.load(path, file_type="obj", process=False, force="mesh")
        normals = np.asarray(mesh.vertex_normals) if len(mesh.faces) else None
        return cls(np.asarray(mesh.vertices), np.asarray(mesh.faces), normals)


def _bounds(bounds: Bounds) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = bounds
    return (np.broadcast_to(np.asarray(lo, dtype=np.float64), (3,)).copy(),
            np.broadcast_to(np.asarray(hi, dtype=np.float64), (3,)).copy())


def evaluate_grid(sdf: Callable[[np.ndarray], np.ndarray], resolution: int, bounds: Bounds = (-1.0, 1.0),
                  chunk: int = 65536) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SDF values on a resolution^3 lattice spanning bounds (corners included)."""
    lo, hi = _bounds(bounds)
    axes = [np.linspace(lo[k], hi[k], resolution) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    values = np.concatenate([np.asarray(sdf(grid[s:s + chunk]), dtype=np.float64).reshape(-1)
                             for s in range(0, len(grid), chunk)])
    return values.reshape(resolution, resolution, resolution), lo, hi


def sdf_gradient(sdf: Callable[[np.ndarray], np.ndarray], points: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient."""
    grads = np.zeros_like(points)
    for k in range(3):
        offset = np.zeros(3)
        offset[k] = step
        grads[:, k] = (np.asarray(sdf(points + offset)) - np.asarray(sdf(points - offset))) / (2.0 * step)
    return grads


def marching_cubes(sdf: Callable[[np.ndarray], np.ndarray], resolution: int = 128, bounds: Bounds = (-1.0, 1.0),
                   chunk: int = 65536) -> TriangleMesh:
    """
    Zero level set of sdf as a triangle mesh with normals along +grad sdf.

    A field without a sign change yields an empty mesh.
    """
    if resolution < 8:
        raise ValueError(f"marching cubes needs resolution >= 8, got {resolution}")
    values, lo, hi = evaluate_grid(sdf, resolution, bounds, chunk)
    if values.min() > 0.0 or values.max() < 0.0:
        logger.info("[EVAL] SDF has no zero crossing on the grid; returning an empty mesh")
        return TriangleMesh.empty()

    vertices, faces = mcubes.marching_cubes(values, 0.0)
    vertices = lo + vertices * (hi - lo) / (resolution - 1.0)
    mesh = TriangleMesh(vertices, faces).without_degenerate()
    if mesh.is_empty:
        return TriangleMesh.empty()

    voxel = float(np.min((hi - lo) / (resolution - 1.0)))
    gradient = sdf_gradient(sdf, mesh.vertices, 0.5 * voxel)
    centroid_grad = gradient[mesh.faces].mean(axis=1)
    if np.sum(np.sum(mesh.face_normals() * centroid_grad, axis=1) < 0) > len(mesh.faces) / 2:
        mesh = mesh.flipped()
    length = np.linalg.norm(gradient, axis=1, keepdims=True)
    mesh.normals = np.where(length > 1e-12, gradient / np.maximum(length, 1e-12), 0.0)
    logger.info(f"[EVAL] Marching cubes at {resolution}^3: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces")
    return mesh


def pose_mesh(mesh: TriangleMesh, skeleton: Skeleton, pose) -> TriangleMesh:
    """Forward LBS of a canonical mesh with canonical-space skinning weights."""
    if mesh.is_empty:
        return TriangleMesh.empty()
    transforms = bone_transforms_numpy(skeleton, pose)
    weights = skinning_weights(skeleton, mesh.vertices, "canonical")
    blend = np.einsum("pb,bij->pij", weights, transforms)
    posed = np.einsum("pij,pj->pi", blend[:, :3, :3], mesh.vertices) + blend[:, :3, 3]
    normals = None
    if mesh.normals is not None:
        normals = np.einsum("pji,pj->pi", np.linalg.inv(blend[:, :3, :3]), mesh.normals)
        normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-12)
    return TriangleMesh(posed, mesh.faces.copy(), normals)

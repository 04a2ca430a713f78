"""Triangle surface models with normalized coordinates.

A SurfaceModel keeps two copies of its vertices: the raw object-frame
vertices in millimeters, and a normalized copy scaled/centered to fit inside
a sphere of diameter 1 at the origin (so every normalized vertex has norm
<= 0.5 and any two normalized points are at most distance 1 apart).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-9


class SurfaceModelError(ValueError):
    pass


@dataclass(frozen=True)
class Keypoint2D:
    x: float
    y: float
    visible: bool = True

    def __post_init__(self):
        if self.visible and not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("visible keypoint must have finite coordinates")


def _pairwise_diameter(vertices: np.ndarray) -> float:
    """Max pairwise vertex distance; exact, chunked to bound memory."""
    n = len(vertices)
    best = 0.0
    step = 512
    for i in range(0, n, step):
        chunk = vertices[i:i + step]
        d2 = ((chunk[:, None, :] - vertices[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def _enclosing_sphere(vertices: np.ndarray):
    """Deterministic enclosing sphere: AABB center, max vertex radius."""
    center = 0.5 * (vertices.min(axis=0) + vertices.max(axis=0))
    radius = float(np.linalg.norm(vertices - center, axis=1).max())
    return center, radius


@dataclass(frozen=True, eq=False)
class SurfaceModel:
    """Triangle mesh in object frame (mm) plus its normalized-coordinate copy."""

    vertices: np.ndarray          # (V, 3) mm
    triangles: np.ndarray         # (T, 3) int indices
    normalized_vertices: np.ndarray = field(init=False, repr=False)
    diameter: float = field(init=False)
    keypoints: dict | None = None  # name -> (3,) object-frame mm point

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        if len(v) < 2:
            raise SurfaceModelError("mesh needs at least 2 vertices")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise SurfaceModelError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        diameter = _pairwise_diameter(v)
        if diameter <= 0:
            raise SurfaceModelError("degenerate mesh: zero diameter")
        object.__setattr__(self, "diameter", diameter)
        center, radius = _enclosing_sphere(v)
        object.__setattr__(self, "_norm_center", center)
        object.__setattr__(self, "_norm_scale", 1.0 / (2.0 * radius))
        nv = (v - center) * self._norm_scale
        object.__setattr__(self, "normalized_vertices", nv)
        if np.linalg.norm(nv, axis=1).max() > 0.5 + NORM_TOL:
            raise SurfaceModelError("normalization failed to fit the unit-diameter sphere")
        if self.keypoints is not None:
            kp = {str(k): np.asarray(p, dtype=np.float64).reshape(3) for k, p in self.keypoints.items()}
            object.__setattr__(self, "keypoints", kp)

    def normalize_points(self, points_mm) -> np.ndarray:
        """Object-frame mm points -> normalized coordinates."""
        return (np.asarray(points_mm, dtype=np.float64) - self._norm_center) * self._norm_scale

    def denormalize_points(self, points_norm) -> np.ndarray:
        """Normalized coordinates -> object-frame mm points."""
        return np.asarray(points_norm, dtype=np.float64) / self._norm_scale + self._norm_center

    def triangle_corners(self, normalized: bool = False) -> np.ndarray:
        """(T, 3, 3) corner positions."""
        src = self.normalized_vertices if normalized else self.vertices
        return src[self.triangles]

    def triangle_areas(self) -> np.ndarray:
        c = self.triangle_corners()
        cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def face_normals(self) -> np.ndarray:
        c = self.triangle_corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        length[length == 0] = 1.0
        return n / length

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals (used for inward-offset collision tests)."""
        c = self.triangle_corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])  # area-weighted
        out = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(out, self.triangles[:, k], n)
        length = np.linalg.norm(out, axis=1, keepdims=True)
        length[length == 0] = 1.0
        return out / length

    def sample_surface(self, n: int, rng: np.random.Generator, normalized: bool = True) -> np.ndarray:
        """Area-uniform surface samples: area-weighted triangle pick, uniform barycentric."""
        areas = self.triangle_areas()
        total = areas.sum()
        if total <= 0:
            raise SurfaceModelError("mesh has zero surface area")
        cdf = np.cumsum(areas) / total
        tri_idx = np.searchsorted(cdf, rng.random(n), side="right").clip(0, len(areas) - 1)
        u = rng.random(n)
        v = rng.random(n)
        flip = u + v > 1.0
        u[flip] = 1.0 - u[flip]
        v[flip] = 1.0 - v[flip]
        c = self.triangle_corners(normalized=normalized)[tri_idx]
        return c[:, 0] + u[:, None] * (c[:, 1] - c[:, 0]) + v[:, None] * (c[:, 2] - c[:, 0])

    def transformed_triangles(self, pose) -> np.ndarray:
        """(T, 3, 3) corners mapped through an object-to-camera pose."""
        return pose.transform(self.vertices)[self.triangles]


def load_obj(path) -> SurfaceModel:
    """Minimal Wavefront OBJ reader: v and f records, faces fan-triangulated."""
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices or not faces:
        raise SurfaceModelError(f"no usable geometry in {path}")
    return SurfaceModel(np.array(vertices), np.array(faces))

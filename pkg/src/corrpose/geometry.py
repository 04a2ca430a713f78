"""Rigid-body transforms and pinhole camera projection.

Conventions: rotations are 3x3 row-major numpy arrays mapping object-frame
vectors into the camera frame, translations are in millimeters, and image
coordinates place pixel (row i, col j) at the continuous point (x=j, y=i).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-9


class GeometryError(ValueError):
    pass


class BehindCameraError(GeometryError):
    """Raised when a point at or behind the camera plane is projected."""


def _as_rotation(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise GeometryError(f"rotation must be 3x3, got {R.shape}")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > ORTHONORMAL_TOL:
        raise GeometryError(f"rotation not orthonormal (max deviation {err:.3e})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > 1e-6:
        raise GeometryError(f"rotation has determinant {det:.6f}, expected +1")
    return R


@dataclass(frozen=True, eq=False)
class RigidPose:
    """Object-to-camera rigid transform: x_cam = R @ x_obj + t (t in mm)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_axis_angle(axis, angle_rad: float, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        return RigidPose(axis_angle_matrix(axis, angle_rad), np.asarray(translation, dtype=np.float64))

    def transform(self, points) -> np.ndarray:
        """Apply to (3,) or (N,3) object-frame points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidPose(self.rotation @ other.rotation,
                         self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidPose":
        return RigidPose(self.rotation.T, -self.rotation.T @ self.translation)

    def almost_equal(self, other: "RigidPose", tol: float = 1e-9) -> bool:
        return (np.abs(self.rotation - other.rotation).max() <= tol
                and np.abs(self.translation - other.translation).max() <= tol)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point outside image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @staticmethod
    def from_matrix(K, width: int, height: int) -> "CameraIntrinsics":
        K = np.asarray(K, dtype=np.float64).reshape(3, 3)
        return CameraIntrinsics(K[0, 0], K[1, 1], K[0, 2], K[1, 2], width, height)


MIN_PROJECT_DEPTH = 1e-9


def project(points, pose: RigidPose, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Pinhole-project object-frame points (mm) to pixel coordinates.

    Raises BehindCameraError if any transformed point has depth <= 1e-9 mm.
    """
    p = pose.transform(points)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    z = p[:, 2]
    if np.any(z <= MIN_PROJECT_DEPTH):
        raise BehindCameraError("point at or behind the camera plane")
    uv = np.empty((p.shape[0], 2))
    uv[:, 0] = intrinsics.fx * p[:, 0] / z + intrinsics.cx
    uv[:, 1] = intrinsics.fy * p[:, 1] / z + intrinsics.cy
    return uv[0] if single else uv


def project_camera_points(points_cam, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points without a pose (no depth check)."""
    p = np.atleast_2d(np.asarray(points_cam, dtype=np.float64))
    z = p[:, 2]
    uv = np.stack([intrinsics.fx * p[:, 0] / z + intrinsics.cx,
                   intrinsics.fy * p[:, 1] / z + intrinsics.cy], axis=1)
    return uv


def back_project(pixel, depth_mm, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Invert `project` for a pixel with known depth; returns a camera-frame point."""
    uv = np.atleast_2d(np.asarray(pixel, dtype=np.float64))
    z = np.atleast_1d(np.asarray(depth_mm, dtype=np.float64))
    x = (uv[:, 0] - intrinsics.cx) / intrinsics.fx * z
    y = (uv[:, 1] - intrinsics.cy) / intrinsics.fy * z
    out = np.stack([x, y, z], axis=1)
    return out[0] if np.asarray(pixel).ndim == 1 else out


def axis_angle_matrix(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    n = np.linalg.norm(a)
    if n == 0.0:
        return np.eye(3)
    a = a / n
    K = np.array([[0, -a[2], a[1]],
                  [a[2], 0, -a[0]],
                  [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle_rad) * K + (1.0 - np.cos(angle_rad)) * (K @ K)


def rotvec_matrix(w) -> np.ndarray:
    """Exponential map of a rotation vector (angle = |w|)."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        K = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
        return np.eye(3) + K + 0.5 * (K @ K)
    return axis_angle_matrix(w, theta)


def rotation_to_quaternion(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=np.float64)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        return np.array([0.25 * s,
                         (R[2, 1] - R[1, 2]) / s,
                         (R[0, 2] - R[2, 0]) / s,
                         (R[1, 0] - R[0, 1]) / s])
    i = int(np.argmax(np.diag(R)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = np.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2.0
    q = np.empty(4)
    q[0] = (R[k, j] - R[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (R[j, i] + R[i, j]) / s
    q[1 + k] = (R[k, i] + R[i, k]) / s
    return q


def orthonormalize(R) -> np.ndarray:
    """Nearest proper rotation to a 3x3 matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=np.float64))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation (quaternion method)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])

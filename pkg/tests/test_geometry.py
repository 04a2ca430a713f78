import numpy as np
import pytest

from corrpose.geometry import (
    BehindCameraError,
    CameraIntrinsics,
    GeometryError,
    RigidPose,
    axis_angle_matrix,
    back_project,
    orthonormalize,
    project,
    random_rotation,
    rotvec_matrix,
)

from conftest import random_pose


K = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


class TestRigidPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(GeometryError):
            RigidPose(np.eye(3) * 1.001, np.zeros(3))

    def test_rejects_reflection(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(GeometryError):
            RigidPose(R, np.zeros(3))

    def test_compose_with_inverse_is_identity(self, rng):
        for _ in range(20):
            p = random_pose(rng)
            ident = p.compose(p.inverse())
            assert np.abs(ident.rotation - np.eye(3)).max() < 1e-9
            assert np.abs(ident.translation).max() < 1e-9

    def test_transform_matches_manual(self, rng):
        p = random_pose(rng)
        x = rng.normal(size=(5, 3))
        expected = (p.rotation @ x.T).T + p.translation
        assert np.allclose(p.transform(x), expected, atol=1e-12)


class TestProjection:
    def test_optical_axis_hits_principal_point(self):
        uv = project(np.array([0.0, 0.0, 100.0]), RigidPose.identity(), K)
        assert np.allclose(uv, [K.cx, K.cy])

    def test_unit_slope_closed_form(self):
        # X = Z with fx = 500, cx = 320 -> u = 820
        uv = project(np.array([50.0, 0.0, 50.0]), RigidPose.identity(), K)
        assert np.isclose(uv[0], 820.0)

    def test_behind_camera_raises(self):
        with pytest.raises(BehindCameraError):
            project(np.array([0.0, 0.0, -5.0]), RigidPose.identity(), K)
        with pytest.raises(BehindCameraError):
            project(np.array([0.0, 0.0, 0.0]), RigidPose.identity(), K)

    def test_roundtrip_with_back_projection(self, rng):
        # project then back-project with known depth recovers the point
        for _ in range(50):
            pose = random_pose(rng)
            x = rng.normal(scale=20.0, size=3)
            cam = pose.transform(x)
            uv = project(x, pose, K)
            recovered = back_project(uv, cam[2], K)
            assert np.linalg.norm(recovered - cam) < 1e-9

    def test_intrinsics_validation(self):
        with pytest.raises(GeometryError):
            CameraIntrinsics(fx=-1.0, fy=1.0, cx=0.0, cy=0.0, width=10, height=10)
        with pytest.raises(GeometryError):
            CameraIntrinsics(fx=1.0, fy=1.0, cx=10.0, cy=0.0, width=10, height=10)


class TestRotationHelpers:
    def test_axis_angle_quarter_turn(self):
        R = axis_angle_matrix([0, 0, 1], np.pi / 2)
        assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)

    def test_rotvec_small_angle(self):
        R = rotvec_matrix([1e-14, 0, 0])
        assert np.abs(R - np.eye(3)).max() < 1e-12

    def test_orthonormalize_recovers_rotation(self, rng):
        for _ in range(20):
            R = random_rotation(rng)
            noisy = R + rng.normal(scale=1e-4, size=(3, 3))
            fixed = orthonormalize(noisy)
            assert np.abs(fixed.T @ fixed - np.eye(3)).max() < 1e-12
            assert np.abs(fixed - R).max() < 1e-3

    def test_random_rotation_is_valid(self, rng):
        for _ in range(50):
            R = random_rotation(rng)
            assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
            assert np.isclose(np.linalg.det(R), 1.0)

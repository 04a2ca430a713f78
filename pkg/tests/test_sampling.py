import numpy as np
import pytest

from corrpose.geometry import CameraIntrinsics
from corrpose.synth.bvh import detect_collision_brute_force, ray_mesh_first_hit
from corrpose.synth.meshes import JointLimits, build_instrument, build_scene
from corrpose.synth.sampling import (
    instrument_part_poses,
    line_point_distance,
    randomize_lighting,
    sample_instrument_config,
)


@pytest.fixture(scope="module")
def instrument():
    return build_instrument()


@pytest.fixture(scope="module")
def scene():
    return build_scene()


class TestJointLimits:
    def test_fixed_limits_enforced(self):
        JointLimits()  # defaults fine
        with pytest.raises(ValueError):
            JointLimits(roll_deg=45.0)


class TestSampler:
    def test_seed_reproducibility(self, instrument, scene):
        poses_a, info_a = sample_instrument_config(instrument, scene, 0)
        poses_b, info_b = sample_instrument_config(instrument, scene, 0)
        for name in poses_a:
            assert np.array_equal(poses_a[name].rotation, poses_b[name].rotation)
            assert np.array_equal(poses_a[name].translation, poses_b[name].translation)
        assert info_a.depth_mm == info_b.depth_mm

    def test_constraints_on_accepted_samples(self, instrument, scene):
        # trocar on the shaft line, depth in range, roll and bends within limits
        for seed in range(150):
            poses, info = sample_instrument_config(instrument, scene, seed)
            shaft = poses["shaft"]
            axis = shaft.rotation[:, 2]
            dist = line_point_distance(shaft.translation, axis, info.trocar)
            assert dist < 1e-6
            assert 30.0 <= info.depth_mm <= 100.0
            assert -30.0 <= info.roll_deg <= 30.0
            assert all(0.0 <= b <= 60.0 for b in info.bend_degs)

    def test_depth_is_distance_to_surface_along_shaft(self, instrument, scene):
        poses, info = sample_instrument_config(instrument, scene, 7)
        tip = poses["shaft"].translation
        axis = poses["shaft"].rotation[:, 2]
        t = ray_mesh_first_hit(tip, axis, scene.backdrop, scene.backdrop_pose)
        assert t is not None
        assert abs(t - info.depth_mm) < 1e-6

    def test_no_collisions_on_accepted(self, instrument, scene):
        for seed in range(30):
            poses, _ = sample_instrument_config(instrument, scene, seed)
            parts = [(instrument.part_model(n), poses[n]) for n in instrument.part_names()]
            assert not detect_collision_brute_force(parts, scene.backdrop, scene.backdrop_pose,
                                                    adjacent=instrument.adjacent_pairs())

    def test_kinematic_chain_offsets(self, instrument):
        d = np.array([0.0, 0.0, 1.0])
        tip = np.array([5.0, -3.0, 80.0])
        poses = instrument_part_poses(instrument, d, 0.3, tip, 0.5, 0.2)
        wrist_offset = poses["wrist"].translation - tip
        assert np.isclose(np.linalg.norm(wrist_offset), instrument.wrist_gap)
        # wrist pivot lies on the shaft axis
        assert line_point_distance(tip, d, poses["wrist"].translation) < 1e-9


class TestLighting:
    def test_deterministic(self, scene):
        d = np.array([0.1, 0.2, 0.97])
        d /= np.linalg.norm(d)
        a = randomize_lighting(scene, d, 42)
        b = randomize_lighting(scene, d, 42)
        assert np.array_equal(a.light.position, b.light.position)
        assert a.light.intensity == b.light.intensity

    def test_intensity_multiplier_range(self, scene):
        d = np.array([0.0, 0.0, 1.0])
        base = scene.light.intensity
        for seed in range(1000):
            lit = randomize_lighting(scene, d, seed)
            factor = lit.light.intensity / base
            assert 0.5 <= factor <= 2.0

    def test_zero_jitter_on_shaft_ray(self, scene):
        d = np.array([0.0, 0.3, 0.954])
        d /= np.linalg.norm(d)
        lit = randomize_lighting(scene, d, 5, jitter_sigma_mm=0.0)
        v = lit.light.position - scene.trocar
        axial = v @ d
        assert 10.0 <= axial <= 40.0
        assert np.linalg.norm(v - axial * d) < 1e-9

    def test_axial_distance_range(self, scene):
        d = np.array([0.0, 0.0, 1.0])
        for seed in range(200):
            lit = randomize_lighting(scene, d, seed, jitter_sigma_mm=0.0)
            axial = (lit.light.position - scene.trocar) @ d
            assert 10.0 <= axial <= 40.0

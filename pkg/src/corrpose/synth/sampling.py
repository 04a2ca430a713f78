"""Trocar-constrained instrument pose sampling and per-frame lighting randomization.

The sampler draws the four articulated degrees of freedom (insertion depth
along the shaft, axial roll, two wrist bends) with the shaft line passing
through the scene's trocar point by construction, then rejects colliding
configurations. All draws come from a seeded generator in a fixed order, so
a given seed always reproduces the same configuration.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..geometry import RigidPose, axis_angle_matrix
from .bvh import detect_collision, ray_mesh_first_hit
from .meshes import InstrumentSpec, LightSpec, SceneSpec


class SamplingError(RuntimeError):
    def __init__(self, attempts: int, rejections: Counter):
        self.attempts = attempts
        self.rejections = dict(rejections)
        super().__init__(f"no valid configuration after {attempts} attempts "
                         f"(rejections: {self.rejections})")


@dataclass
class SampleInfo:
    depth_mm: float
    roll_deg: float
    bend_degs: tuple[float, float]
    shaft_direction: np.ndarray
    trocar: np.ndarray
    surface_distance_mm: float     # trocar -> first backdrop hit along the shaft
    attempts: int = 1
    rejections: Counter = field(default_factory=Counter)


def perpendicular_basis(direction: np.ndarray):
    """Deterministic right-handed (x, y) pair orthogonal to a unit direction."""
    d = np.asarray(direction, dtype=np.float64)
    ref = np.array([0.0, 1.0, 0.0]) if abs(d[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, d)
    x /= np.linalg.norm(x)
    y = np.cross(d, x)
    return x, y


def shaft_rotation(direction, roll_rad: float) -> np.ndarray:
    """Rotation whose +z axis is the shaft direction, rolled about it."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    x0, y0 = perpendicular_basis(d)
    c, s = np.cos(roll_rad), np.sin(roll_rad)
    x = c * x0 + s * y0
    y = -s * x0 + c * y0
    return np.stack([x, y, d], axis=1)


def instrument_part_poses(spec: InstrumentSpec, direction, roll_rad: float,
                          tip_position, bend1_rad: float, bend2_rad: float) -> dict:
    """Forward kinematics of the articulated chain, object-to-camera poses per part."""
    r_shaft = shaft_rotation(direction, roll_rad)
    tip = np.asarray(tip_position, dtype=np.float64)
    poses = {"shaft": RigidPose(r_shaft, tip)}
    r_wrist = r_shaft @ axis_angle_matrix([1, 0, 0], bend1_rad) @ axis_angle_matrix([0, 1, 0], bend2_rad)
    t_wrist = tip + r_shaft @ np.array([0.0, 0.0, spec.wrist_gap])
    poses["wrist"] = RigidPose(r_wrist, t_wrist)
    if spec.jaws is not None:
        # rotation by -a about +x tips the +z-pointing jaw toward +y
        half = np.radians(spec.jaw_opening_deg)
        for name, side, angle in (("jaw_left", spec.jaw_separation, -half),
                                  ("jaw_right", -spec.jaw_separation, half)):
            t_jaw = t_wrist + r_wrist @ np.array([0.0, side, spec.wrist_length + spec.jaw_gap])
            poses[name] = RigidPose(r_wrist @ axis_angle_matrix([1, 0, 0], angle), t_jaw)
    return poses


def line_point_distance(origin, direction, point) -> float:
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    v = np.asarray(point, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    return float(np.linalg.norm(v - (v @ d) * d))


def sample_instrument_config(spec: InstrumentSpec, scene: SceneSpec, rng_seed,
                             max_attempts: int = 1000):
    """Draw a collision-free articulated configuration.

    Returns (poses, SampleInfo). Raises SamplingError after `max_attempts`
    rejected attempts, carrying the rejection-reason histogram.
    """
    rng = np.random.default_rng(rng_seed)
    limits = spec.joint_limits
    lo, hi = scene.depth_range
    rejections = Counter()
    backdrop_z = float(scene.backdrop_pose.transform(scene.backdrop.vertices).mean(axis=0)[2])

    for attempt in range(1, max_attempts + 1):
        aim_xy = rng.uniform(-scene.aim_lateral_mm, scene.aim_lateral_mm, size=2)
        depth = rng.uniform(lo, hi)
        roll = np.radians(rng.uniform(-limits.roll_deg, limits.roll_deg))
        bends = rng.uniform(np.radians(limits.wrist_min_deg), np.radians(limits.wrist_max_deg), size=2)

        aim = np.array([aim_xy[0], aim_xy[1], backdrop_z])
        direction = aim - scene.trocar
        direction /= np.linalg.norm(direction)
        t_hit = ray_mesh_first_hit(scene.trocar, direction, scene.backdrop, scene.backdrop_pose)
        if t_hit is None or t_hit - depth < 10.0:
            rejections["infeasible"] += 1
            continue
        tip = scene.trocar + (t_hit - depth) * direction
        poses = instrument_part_poses(spec, direction, roll, tip, bends[0], bends[1])
        parts = [(spec.part_model(name), poses[name]) for name in spec.part_names()]
        if detect_collision(parts, scene.backdrop, scene.backdrop_pose,
                            adjacent=spec.adjacent_pairs()):
            rejections["collision"] += 1
            continue
        info = SampleInfo(depth_mm=float(depth), roll_deg=float(np.degrees(roll)),
                          bend_degs=(float(np.degrees(bends[0])), float(np.degrees(bends[1]))),
                          shaft_direction=direction, trocar=scene.trocar.copy(),
                          surface_distance_mm=float(t_hit),
                          attempts=attempt, rejections=rejections)
        return poses, info
    raise SamplingError(max_attempts, rejections)


def randomize_lighting(scene: SceneSpec, shaft_direction, rng_seed,
                       axial_range_mm=(10.0, 40.0), jitter_sigma_mm: float = 5.0,
                       intensity_range=(0.5, 2.0)) -> SceneSpec:
    """New scene with the light moved along the shaft ray and intensity rescaled.

    Position: trocar + direction * U[10, 40] mm + isotropic Gaussian (sigma 5 mm).
    Intensity: multiplied by a log-uniform factor in [0.5, 2.0].
    """
    rng = np.random.default_rng(rng_seed)
    d = np.asarray(shaft_direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    axial = rng.uniform(*axial_range_mm)
    jitter = rng.normal(scale=jitter_sigma_mm, size=3) if jitter_sigma_mm > 0 else np.zeros(3)
    factor = float(np.exp(rng.uniform(np.log(intensity_range[0]), np.log(intensity_range[1]))))
    light = LightSpec(position=scene.trocar + axial * d + jitter,
                      intensity=scene.light.intensity * factor,
                      color=scene.light.color)
    return SceneSpec(backdrop=scene.backdrop, trocar=scene.trocar, light=light,
                     depth_range=scene.depth_range, backdrop_pose=scene.backdrop_pose,
                     aim_lateral_mm=scene.aim_lateral_mm)

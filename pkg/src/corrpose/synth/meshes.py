"""Procedural instrument and backdrop meshes, plus the scene/instrument specs.

The articulated tool is a triangle-soup assembly of four rigid parts:
a capped-cylinder shaft, a block-shaped wrist with a ball-shaped proximal
end (so bending never drives it into the shaft cap), and an optional pair
of wedge jaws. The wrist carries an asymmetric fin and chamfer so its pose
is never ambiguous under 180-degree flips, and it defines three named
keypoints used by the keypoint-similarity metric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import RigidPose
from ..surface import SurfaceModel

ROLL_LIMIT_DEG = 30.0
WRIST_BEND_MIN_DEG = 0.0
WRIST_BEND_MAX_DEG = 60.0
DEPTH_RANGE_MM = (30.0, 100.0)


@dataclass(frozen=True)
class JointLimits:
    roll_deg: float = ROLL_LIMIT_DEG
    wrist_min_deg: float = WRIST_BEND_MIN_DEG
    wrist_max_deg: float = WRIST_BEND_MAX_DEG

    def __post_init__(self):
        if (self.roll_deg, self.wrist_min_deg, self.wrist_max_deg) != (
                ROLL_LIMIT_DEG, WRIST_BEND_MIN_DEG, WRIST_BEND_MAX_DEG):
            raise ValueError("joint limits are fixed: roll +/-30 deg, wrist bends 0-60 deg")


@dataclass(frozen=True, eq=False)
class InstrumentSpec:
    """Rigid parts plus the offsets of the articulated chain (all mm).

    Part frames: the shaft's distal tip is its origin with the axis along +z;
    the wrist pivot sits `wrist_gap` beyond the tip; the jaw pivots sit
    `jaw_gap` beyond the wrist's distal end (`wrist_length` from its pivot).
    """

    shaft: SurfaceModel
    wrist: SurfaceModel
    jaws: tuple[SurfaceModel, SurfaceModel] | None
    joint_limits: JointLimits = field(default_factory=JointLimits)
    shaft_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    wrist_gap: float = 4.0
    wrist_length: float = 11.0
    jaw_gap: float = 2.6
    jaw_separation: float = 1.2    # lateral pivot offset of each jaw (+y / -y)
    jaw_opening_deg: float = 10.0

    def __post_init__(self):
        axis = np.asarray(self.shaft_axis, dtype=np.float64).reshape(3)
        if not np.isclose(np.linalg.norm(axis), 1.0):
            raise ValueError("shaft_axis must be a unit vector")
        object.__setattr__(self, "shaft_axis", axis)

    def part_names(self):
        names = ["shaft", "wrist"]
        if self.jaws is not None:
            names += ["jaw_left", "jaw_right"]
        return names

    def part_model(self, name: str) -> SurfaceModel:
        return {"shaft": self.shaft, "wrist": self.wrist,
                "jaw_left": self.jaws[0] if self.jaws else None,
                "jaw_right": self.jaws[1] if self.jaws else None}[name]

    def adjacent_pairs(self):
        """Index pairs (into part_names order) that share an articulated joint."""
        pairs = [(0, 1)]
        if self.jaws is not None:
            pairs += [(1, 2), (1, 3), (2, 3)]
        return pairs


@dataclass(frozen=True)
class LightSpec:
    position: np.ndarray
    intensity: float
    color: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.97, 0.92]))

    def __post_init__(self):
        if self.intensity <= 0:
            raise ValueError("light intensity must be positive")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64).reshape(3))


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Camera-frame scene: backdrop surface, trocar point, light, insertion range."""

    backdrop: SurfaceModel
    trocar: np.ndarray
    light: LightSpec
    depth_range: tuple[float, float] = DEPTH_RANGE_MM
    backdrop_pose: RigidPose = field(default_factory=RigidPose.identity)
    aim_lateral_mm: float = 12.0

    def __post_init__(self):
        if tuple(self.depth_range) != DEPTH_RANGE_MM:
            raise ValueError(f"depth_range is fixed at {DEPTH_RANGE_MM} mm")
        object.__setattr__(self, "trocar", np.asarray(self.trocar, dtype=np.float64).reshape(3))


def _quad(a, b, c, d):
    return [[a, b, c], [a, c, d]]


def capped_cylinder(radius: float = 3.6, length: float = 120.0, segments: int = 20) -> SurfaceModel:
    """Shaft: axis along +z, distal tip at the origin, body over z in [-length, 0]."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.concatenate([ring, np.full((segments, 1), -length)], axis=1)
    top = np.concatenate([ring, np.zeros((segments, 1))], axis=1)
    verts = [bottom, top, [[0.0, 0.0, -length]], [[0.0, 0.0, 0.0]]]
    v = np.concatenate([np.asarray(x, dtype=np.float64).reshape(-1, 3) for x in verts])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += _quad(i, j, segments + j, segments + i)
        faces.append([cb, j, i])
        faces.append([ct, segments + i, segments + j])
    return SurfaceModel(v, np.array(faces))


def _uv_sphere(radius, center, n_lon=10, n_lat=6):
    """Small faceted sphere (triangle soup)."""
    cz = np.asarray(center, dtype=np.float64)
    verts = [cz + [0, 0, radius]]
    for i in range(1, n_lat):
        phi = np.pi * i / n_lat
        for j in range(n_lon):
            th = 2 * np.pi * j / n_lon
            verts.append(cz + radius * np.array([np.sin(phi) * np.cos(th),
                                                 np.sin(phi) * np.sin(th),
                                                 np.cos(phi)]))
    verts.append(cz + [0, 0, -radius])
    faces = []
    def rid(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)
    for j in range(n_lon):
        faces.append([0, rid(1, j), rid(1, j + 1)])
        faces.append([len(verts) - 1, rid(n_lat - 1, j + 1), rid(n_lat - 1, j)])
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            faces += _quad(rid(i, j), rid(i, j + 1), rid(i + 1, j + 1), rid(i + 1, j))
    return np.array(verts), np.array(faces)


def _box(x0, x1, y0, y1, z0, z1):
    v = np.array([[x, y, z] for x in (x0, x1) for y in (y0, y1) for z in (z0, z1)], dtype=np.float64)
    f = np.array([
        [0, 1, 3], [0, 3, 2], [4, 7, 5], [4, 6, 7],
        [0, 5, 1], [0, 4, 5], [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ])
    return v, f


def _merge(parts):
    verts, faces = [], []
    offset = 0
    for v, f in parts:
        verts.append(v)
        faces.append(np.asarray(f) + offset)
        offset += len(v)
    return np.concatenate(verts), np.concatenate(faces)


def wrist_block(width: float = 7.2, height: float = 5.6, length: float = 11.0,
                ball_radius: float = 3.3) -> SurfaceModel:
    """Wrist: ball joint at the origin, block body toward +z, asymmetric fin.

    The proximal ball is rotation-invariant about the pivot, so any bend
    angle keeps the same clearance to the shaft cap. The fin on +x near the
    tip and the chamfer block on -y break every 180-degree symmetry.
    """
    w, h = width / 2.0, height / 2.0
    body = _box(-w, w, -h, h, 0.45 * ball_radius, length)
    ball = _uv_sphere(ball_radius, (0.0, 0.0, 0.0))
    # fin: thin raised ridge on the +x face, biased toward the distal end
    fin = _box(w, w + 1.3, -0.18 * h, 0.18 * h, 0.55 * length, 0.92 * length)
    # chamfer block: asymmetric step on the -y face near the proximal end
    cham = _box(-0.6 * w, 0.2 * w, -h - 1.0, -h, 0.18 * length, 0.45 * length)
    v, f = _merge([body, ball, fin, cham])
    keypoints = {
        "tip_left": np.array([-w, 0.0, length]),
        "tip_right": np.array([w, 0.0, length]),
        "hub": np.array([0.0, 0.0, 0.0]),
    }
    return SurfaceModel(v, f, keypoints=keypoints)


def jaw_wedge(width: float = 3.0, thickness: float = 2.2, length: float = 10.0,
              ball_radius: float = 1.0) -> SurfaceModel:
    """Single jaw: small ball at the pivot, tapering wedge toward +z."""
    w, t = width / 2.0, thickness / 2.0
    v = np.array([
        [-w, -t, 0.3 * ball_radius], [w, -t, 0.3 * ball_radius],
        [w, t, 0.3 * ball_radius], [-w, t, 0.3 * ball_radius],
        [-0.6 * w, -0.25 * t, length], [0.6 * w, -0.25 * t, length],
        [0.6 * w, 0.25 * t, length], [-0.6 * w, 0.25 * t, length],
    ])
    f = np.array([
        [0, 2, 1], [0, 3, 2],
        [4, 5, 6], [4, 6, 7],
        [0, 1, 5], [0, 5, 4],
        [2, 3, 7], [2, 7, 6],
        [0, 4, 7], [0, 7, 3],
        [1, 2, 6], [1, 6, 5],
    ])
    ball = _uv_sphere(ball_radius, (0.0, 0.0, 0.0), n_lon=8, n_lat=5)
    verts, faces = _merge([(v, f), ball])
    return SurfaceModel(verts, faces)


def bumpy_backdrop(size_mm: float = 150.0, grid: int = 26, base_z: float = 130.0,
                   amplitude: float = 6.0, seed: int = 7) -> SurfaceModel:
    """Tissue-like displaced grid facing the camera (camera-frame mm)."""
    rng = np.random.default_rng(seed)
    coarse = rng.normal(size=(5, 5))
    xs = np.linspace(-size_mm / 2, size_mm / 2, grid)
    u = np.linspace(0, 4, grid)
    i0 = np.clip(u.astype(int), 0, 3)
    frac = u - i0
    rows = coarse[i0] * (1 - frac[:, None]) + coarse[i0 + 1] * frac[:, None]      # (grid, 5)
    bump = rows[:, i0] * (1 - frac[None, :]) + rows[:, i0 + 1] * frac[None, :]    # (grid, grid)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    gz = base_z - amplitude * bump - amplitude * 0.4 * np.cos(gx / 23.0) * np.cos(gy / 31.0)
    v = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    faces = []
    for r in range(grid - 1):
        for c in range(grid - 1):
            k = r * grid + c
            faces += _quad(k, k + 1, k + grid + 1, k + grid)
    return SurfaceModel(v, np.array(faces))


def build_instrument(with_jaws: bool = True) -> InstrumentSpec:
    """Default desk-scale articulated instrument."""
    jaws = (jaw_wedge(), jaw_wedge()) if with_jaws else None
    return InstrumentSpec(shaft=capped_cylinder(), wrist=wrist_block(), jaws=jaws)


def build_scene(backdrop_seed: int = 7, trocar=(10.0, -9.0, 6.0),
                light_intensity: float = 1.0) -> SceneSpec:
    """Default desk-scale scene: backdrop at ~130 mm, trocar near the camera."""
    backdrop = bumpy_backdrop(seed=backdrop_seed)
    light = LightSpec(position=np.array([15.0, -12.0, 20.0]), intensity=light_intensity)
    return SceneSpec(backdrop=backdrop, trocar=np.asarray(trocar, dtype=np.float64), light=light)

import numpy as np
import pytest

from corrpose.geometry import RigidPose, random_rotation
from corrpose.surface import SurfaceModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_pose(rng, t_scale=50.0, t_offset=(0.0, 0.0, 200.0)):
    """Random pose with positive depth, handy for projection tests."""
    t = rng.normal(scale=t_scale, size=3) + np.asarray(t_offset)
    return RigidPose(random_rotation(rng), t)


def random_mesh(rng, n_vertices=20, n_triangles=12, scale=30.0):
    v = rng.normal(scale=scale, size=(n_vertices, 3))
    t = rng.integers(0, n_vertices, size=(n_triangles, 3))
    return SurfaceModel(v, t)


@pytest.fixture
def unit_cube():
    v = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
    t = np.array([
        [0, 1, 3], [0, 3, 2],  # x = 0
        [4, 7, 5], [4, 6, 7],  # x = 1
        [0, 5, 1], [0, 4, 5],  # y = 0
        [2, 3, 7], [2, 7, 6],  # y = 1
        [0, 2, 6], [0, 6, 4],  # z = 0
        [1, 5, 7], [1, 7, 3],  # z = 1
    ])
    return SurfaceModel(v, t)

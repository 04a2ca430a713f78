import numpy as np
import pytest

from corrpose.surface import SurfaceModel, SurfaceModelError, load_obj

from conftest import random_mesh


class TestNormalization:
    def test_norm_bound(self, rng):
        for _ in range(20):
            m = random_mesh(rng, n_vertices=30)
            assert np.linalg.norm(m.normalized_vertices, axis=1).max() <= 0.5 + 1e-9

    def test_pairwise_distances_bounded_by_one(self, rng):
        m = random_mesh(rng, n_vertices=25)
        nv = m.normalized_vertices
        d = np.linalg.norm(nv[:, None] - nv[None, :], axis=2)
        assert d.max() <= 1.0 + 1e-9

    def test_diameter_matches_brute_force(self, rng):
        v = rng.normal(scale=10.0, size=(40, 3))
        m = SurfaceModel(v, [[0, 1, 2]])
        brute = max(np.linalg.norm(v[i] - v[j]) for i in range(40) for j in range(40))
        assert np.isclose(m.diameter, brute, atol=1e-12)

    def test_normalize_roundtrip(self, rng):
        m = random_mesh(rng)
        pts = rng.normal(scale=5.0, size=(10, 3))
        back = m.denormalize_points(m.normalize_points(pts))
        assert np.abs(back - pts).max() < 1e-9

    def test_rejects_bad_indices(self):
        with pytest.raises(SurfaceModelError):
            SurfaceModel([[0, 0, 0], [1, 0, 0]], [[0, 1, 5]])

    def test_rejects_degenerate(self):
        with pytest.raises(SurfaceModelError):
            SurfaceModel([[1, 2, 3], [1, 2, 3]], [[0, 1, 0]])


class TestSurfaceSampling:
    def test_area_weighted_triangle_choice(self, rng):
        # two triangles with areas 1:3 -> pick frequencies 0.25/0.75 within 0.03
        v = np.array([
            [0, 0, 0], [1, 0, 0], [0, 2, 0],      # area 1
            [10, 0, 0], [13, 0, 0], [10, 4, 0],   # area 6 -> scale to 3:1? use area ratio below
        ], dtype=float)
        # areas: tri0 = 1, tri1 = 6 -> rebuild so ratio is exactly 1:3
        v[4] = [12, 0, 0]  # tri1 legs 2 and 4 -> area 4? (2*4)/2 = 4 ... set legs 2,3
        v[5] = [10, 3, 0]  # area = (2*3)/2 = 3
        m = SurfaceModel(v, [[0, 1, 2], [3, 4, 5]])
        areas = m.triangle_areas()
        assert np.allclose(sorted(areas), [1.0, 3.0])
        pts = m.sample_surface(10_000, np.random.default_rng(0), normalized=False)
        frac_small = (pts[:, 0] < 5).mean()
        assert abs(frac_small - 0.25) < 0.03

    def test_samples_lie_on_surface(self, unit_cube):
        pts = unit_cube.sample_surface(500, np.random.default_rng(1), normalized=False)
        on_face = np.zeros(len(pts), dtype=bool)
        for axis in range(3):
            for val in (0.0, 1.0):
                on_face |= np.isclose(pts[:, axis], val, atol=1e-12)
        assert on_face.all()

    def test_normalized_samples_bounded(self, unit_cube):
        pts = unit_cube.sample_surface(500, np.random.default_rng(2), normalized=True)
        assert np.linalg.norm(pts, axis=1).max() <= 0.5 + 1e-9

    def test_deterministic_given_seed(self, unit_cube):
        a = unit_cube.sample_surface(64, np.random.default_rng(7))
        b = unit_cube.sample_surface(64, np.random.default_rng(7))
        assert np.array_equal(a, b)


class TestObj:
    def test_load_writes_back(self, tmp_path, unit_cube):
        path = tmp_path / "cube.obj"
        lines = [f"v {x} {y} {z}" for x, y, z in unit_cube.vertices]
        lines += [f"f {a+1} {b+1} {c+1}" for a, b, c in unit_cube.triangles]
        path.write_text("\n".join(lines))
        m = load_obj(path)
        assert np.allclose(m.vertices, unit_cube.vertices)
        assert np.array_equal(m.triangles, unit_cube.triangles)

    def test_quad_fan_triangulation(self, tmp_path):
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n")
        m = load_obj(path)
        assert len(m.triangles) == 2

    def test_empty_raises(self, tmp_path):
        path = tmp_path / "empty.obj"
        path.write_text("# nothing\n")
        with pytest.raises(SurfaceModelError):
            load_obj(path)

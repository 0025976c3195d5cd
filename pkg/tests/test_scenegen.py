import numpy as np
import pytest
import torch

from panorf import scenegen
from panorf.config import SceneSpec
from panorf.data import load_dataset


def small_spec(**kw):
    base = dict(width=32, height=16, n_frames=4, test_every=2)
    base.update(kw)
    return SceneSpec(**base)


class TestNoise:
    def test_hash_deterministic_and_uniformish(self):
        ix = np.arange(10000, dtype=np.int64)
        a = scenegen._hash01(ix, ix * 3, ix * 7, seed=1)
        b = scenegen._hash01(ix, ix * 3, ix * 7, seed=1)
        assert np.array_equal(a, b)
        assert 0.0 <= a.min() and a.max() < 1.0
        assert abs(a.mean() - 0.5) < 0.02

    def test_hash_seed_sensitivity(self):
        ix = np.arange(100, dtype=np.int64)
        a = scenegen._hash01(ix, ix, ix, seed=1)
        b = scenegen._hash01(ix, ix, ix, seed=2)
        assert not np.array_equal(a, b)

    def test_value_noise_matches_lattice(self):
        # at integer lattice points the noise equals the hash directly
        p = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        v = scenegen.value_noise(p, seed=5)
        i = p.astype(np.int64)
        expected = scenegen._hash01(i[:, 0], i[:, 1], i[:, 2], seed=5)
        assert np.allclose(v, expected, atol=1e-12)

    def test_value_noise_continuous(self):
        p = np.array([[0.5, 0.5, 0.5]])
        v0 = scenegen.value_noise(p, seed=0)
        v1 = scenegen.value_noise(p + 1e-7, seed=0)
        assert abs(v0 - v1).max() < 1e-5


class TestIntersections:
    def test_sphere_head_on(self):
        o = np.zeros(3)
        d = np.array([[0.0, 0.0, 1.0]])
        t = scenegen._intersect_sphere(o, d, np.array([0.0, 0.0, 5.0]), 1.0)
        assert t[0] == pytest.approx(4.0, abs=1e-12)

    def test_sphere_from_inside(self):
        o = np.zeros(3)
        d = np.array([[1.0, 0.0, 0.0]])
        t = scenegen._intersect_sphere(o, d, np.zeros(3), 8.0)
        assert t[0] == pytest.approx(8.0, abs=1e-12)

    def test_sphere_miss(self):
        o = np.zeros(3)
        d = np.array([[0.0, 0.0, -1.0]])
        t = scenegen._intersect_sphere(o, d, np.array([0.0, 0.0, 5.0]), 1.0)
        assert np.isinf(t[0])

    def test_box_head_on(self):
        o = np.zeros(3)
        d = np.array([[0.0, 0.0, 1.0]])
        t = scenegen._intersect_box(o, d, np.array([0.0, 0.0, 3.0]), np.array([1.0, 1.0, 0.5]))
        assert t[0] == pytest.approx(2.5, abs=1e-12)

    def test_box_miss(self):
        o = np.zeros(3)
        d = np.array([[0.0, 1.0, 0.0]])
        t = scenegen._intersect_box(o, d, np.array([5.0, 0.0, 0.0]), np.ones(3))
        assert np.isinf(t[0])


class TestDynamics:
    def test_linear_motion(self):
        vals = [1.0, 0.0, 0.0, 0.5, 0, 0, 0, 2.0, 0.0, 0.0, 0.0]
        c0, r = scenegen._dynamic_center(vals, 0.0)
        c1, _ = scenegen._dynamic_center(vals, 1.0)
        assert np.allclose(c0, [1.0, 0.0, 0.0]) and r == 0.5
        assert np.allclose(c1, [3.0, 0.0, 0.0])

    def test_circular_motion(self):
        vals = [0.0, 1.0, 0.0, 0.3, 0, 0, 0, 2.0, 0.0, 0.0, 1.0]
        c0, _ = scenegen._dynamic_center(vals, 0.0)
        ch, _ = scenegen._dynamic_center(vals, 0.5)
        assert np.allclose(c0, [2.0, 1.0, 0.0], atol=1e-12)
        assert np.allclose(ch, [-2.0, 1.0, 0.0], atol=1e-9)
        assert np.allclose(np.linalg.norm(c0 - [0, 1, 0]), np.linalg.norm(ch - [0, 1, 0]))


class TestCameraPath:
    def test_circle_radius(self):
        spec = small_spec(camera_path="circle", camera_radius=0.8)
        for k in range(spec.n_frames):
            p = scenegen.camera_pose(spec, k)
            assert np.linalg.norm(p.t.detach().numpy()) == pytest.approx(0.8, abs=1e-9)

    def test_line_endpoints(self):
        spec = small_spec(camera_path="line", camera_radius=0.5)
        p0 = scenegen.camera_pose(spec, 0).t.detach().numpy()
        pn = scenegen.camera_pose(spec, spec.n_frames - 1).t.detach().numpy()
        assert p0[0] == pytest.approx(-0.5) and pn[0] == pytest.approx(0.5)

    def test_bad_path(self):
        with pytest.raises(ValueError, match="camera_path"):
            scenegen.camera_pose(small_spec(camera_path="zigzag"), 0)

    def test_rotation_valid(self):
        p = scenegen.camera_pose(small_spec(), 3)
        r = p.rot().detach().numpy()
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)


class TestRenderGT:
    def test_shapes_and_ranges(self):
        spec = small_spec()
        rgb, mask, depth = scenegen.render_gt(spec, 0)
        assert rgb.shape == (16, 32, 3) and mask.shape == (16, 32) and depth.shape == (16, 32)
        assert (rgb >= 0).all() and (rgb <= 1).all()
        assert np.isfinite(depth).all()  # room encloses everything

    def test_depth_bounded_by_room(self):
        spec = small_spec(static_spheres=[], static_boxes=[])
        _, _, depth = scenegen.render_gt(spec, 0)
        # from inside the room sphere at an offset of camera_radius, depth
        # stays within [room - offset, room + offset]
        assert depth.min() >= spec.room_radius - spec.camera_radius - 1e-9
        assert depth.max() <= spec.room_radius + spec.camera_radius + 1e-9

    def test_static_scene_mask_empty(self):
        _, mask, _ = scenegen.render_gt(small_spec(), 1)
        assert not mask.any()

    def test_dynamic_sphere_visible_and_moving(self):
        spec = small_spec(
            dynamic_spheres=[0.0, 0.0, 3.0, 1.0, 0.9, 0.1, 0.1, 0.0, 0.0, -5.0, 0.0]
        )
        _, m0, _ = scenegen.render_gt(spec, 0)
        _, m3, _ = scenegen.render_gt(spec, 3)
        assert m0.any() and m3.any()
        assert not np.array_equal(m0, m3)

    def test_deterministic(self):
        spec = small_spec()
        a = scenegen.render_gt(spec, 2)
        b = scenegen.render_gt(spec, 2)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)


class TestEmitAndLoad:
    def test_dataset_round_trip(self, tmp_path):
        spec = small_spec(dynamic_spheres=[0.0, 0.0, 3.0, 1.0, 0.9, 0.1, 0.1, 0.0, 0.0, -5.0, 0.0])
        scenegen.emit_dataset(spec, tmp_path)
        ds = load_dataset(tmp_path)
        assert sorted(ds.images) == list(range(4))
        assert ds.test_indices == [0, 2]
        assert ds.train_indices == [1, 3]
        assert ds.gt_poses is not None and len(ds.gt_poses) == 4
        assert ds.images[0].shape == (16, 32, 3)
        assert ds.masks[0].dtype == bool

    def test_byte_exact_regeneration(self, tmp_path):
        spec = small_spec()
        d1, d2 = tmp_path / "a", tmp_path / "b"
        scenegen.emit_dataset(spec, d1)
        scenegen.emit_dataset(spec, d2)
        for sub in ("frames/0000.png", "masks/0003.png", "depth/0001.pfm", "gt_poses.txt"):
            assert (d1 / sub).read_bytes() == (d2 / sub).read_bytes()

    def test_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope")

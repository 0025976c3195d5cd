import math

import numpy as np
import pytest
import torch

from panorf import camera


def random_rotation(seed):
    g = torch.Generator().manual_seed(seed)
    a = torch.randn(3, dtype=torch.float64, generator=g)
    b = torch.randn(3, dtype=torch.float64, generator=g)
    return camera.rot_from_generators(a, b)


class TestRotFromGenerators:
    def test_identity(self):
        r = camera.rot_from_generators(
            torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64),
            torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64),
        )
        assert torch.allclose(r, torch.eye(3, dtype=torch.float64), atol=1e-12)

    def test_scale_invariance(self):
        a = torch.tensor([0.3, -0.2, 0.9], dtype=torch.float64)
        b = torch.tensor([0.1, 0.8, -0.4], dtype=torch.float64)
        r1 = camera.rot_from_generators(a, b)
        r2 = camera.rot_from_generators(7.0 * a, 0.01 * b)
        assert torch.allclose(r1, r2, atol=1e-12)

    def test_orthonormal(self):
        for seed in range(50):
            r = random_rotation(seed)
            assert torch.allclose(r.T @ r, torch.eye(3, dtype=torch.float64), atol=1e-12)
            assert torch.linalg.det(r).item() == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_raises(self):
        a = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
        with pytest.raises(camera.DegenerateRotationError):
            camera.rot_from_generators(a, 2.0 * a)
        with pytest.raises(camera.DegenerateRotationError):
            camera.rot_from_generators(torch.zeros(3, dtype=torch.float64), a)


class TestRelative:
    def test_identity_pair(self):
        p = camera.CameraPose(dtype=torch.float64)
        r, t = camera.relative(p, p)
        assert torch.allclose(r, torch.eye(3, dtype=torch.float64), atol=1e-12)
        assert torch.allclose(t, torch.zeros(3, dtype=torch.float64), atol=1e-12)

    def test_pure_translation(self):
        src = camera.CameraPose(dtype=torch.float64)
        dst = camera.CameraPose(dtype=torch.float64)
        with torch.no_grad():
            src.t.copy_(torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64))
            dst.t.copy_(torch.tensor([1.0, 2.0, 0.0], dtype=torch.float64))
        r, t = camera.relative(src, dst)
        # a point at the src origin lands 3 units ahead of dst
        assert torch.allclose(t, torch.tensor([0.0, 0.0, 3.0], dtype=torch.float64), atol=1e-12)

    def test_consistency_with_matrices(self):
        # analytic oracle: build world transforms explicitly and compose
        g = torch.Generator().manual_seed(11)
        for seed in range(20):
            src = camera.CameraPose(dtype=torch.float64)
            dst = camera.CameraPose(dtype=torch.float64)
            with torch.no_grad():
                for p in (src, dst):
                    p.a.copy_(torch.randn(3, dtype=torch.float64, generator=g))
                    p.b.copy_(torch.randn(3, dtype=torch.float64, generator=g))
                    p.t.copy_(torch.randn(3, dtype=torch.float64, generator=g))
            r_rel, t_rel = camera.relative(src, dst)
            x_cam = torch.randn(3, dtype=torch.float64, generator=g)
            world = src.rot() @ x_cam + src.t
            in_dst = dst.rot().T @ (world - dst.t)
            assert torch.allclose(r_rel @ x_cam + t_rel, in_dst, atol=1e-10)

    def test_apply_rigid(self):
        r = random_rotation(3)
        t = torch.tensor([0.5, -1.0, 2.0], dtype=torch.float64)
        x = torch.randn((10, 3), dtype=torch.float64, generator=torch.Generator().manual_seed(4))
        y = camera.apply_rigid(r, t, x)
        assert torch.allclose(y, x @ r.T + t, atol=1e-12)


class TestTrajectoryIO:
    def make_traj(self, n=5, seed=7):
        traj = camera.Trajectory()
        for k in range(n):
            p = camera.CameraPose(dtype=torch.float64)
            g = torch.Generator().manual_seed(seed + k)
            with torch.no_grad():
                p.a.copy_(torch.randn(3, dtype=torch.float64, generator=g))
                p.b.copy_(torch.randn(3, dtype=torch.float64, generator=g))
                p.t.copy_(torch.randn(3, dtype=torch.float64, generator=g))
            traj.append(2 * k, p)
        return traj

    def test_round_trip(self, tmp_path):
        traj = self.make_traj()
        path = tmp_path / "poses.txt"
        camera.save_trajectory(traj, path)
        back = camera.load_trajectory(path, dtype=torch.float64)
        assert back.indices() == traj.indices()
        for k in traj.indices():
            assert torch.allclose(back.pose(k).rot(), traj.pose(k).rot(), atol=1e-7)
            assert torch.allclose(back.pose(k).t, traj.pose(k).t, atol=1e-7)

    def test_strictly_increasing_required(self):
        traj = camera.Trajectory()
        traj.append(3, camera.CameraPose())
        with pytest.raises(ValueError):
            traj.append(3, camera.CameraPose())
        with pytest.raises(ValueError):
            traj.append(1, camera.CameraPose())

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0 0 0 0 0 0 0 1\n1 2 3\n")
        with pytest.raises(ValueError, match=":2"):
            camera.load_trajectory(path)

    def test_quaternion_unit_norm_written(self, tmp_path):
        traj = self.make_traj(3)
        path = tmp_path / "poses.txt"
        camera.save_trajectory(traj, path)
        for line in path.read_text().splitlines():
            if line.startswith("#"):
                continue
            vals = [float(x) for x in line.split()]
            assert len(vals) == 8
            q = np.array(vals[4:])
            assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-6)

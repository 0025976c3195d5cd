import math

import numpy as np
import pytest
import torch

from panorf import trainer as tr
from panorf.camera import CameraPose, Trajectory
from panorf.config import TrainConfig


def tiny_config(**kw):
    base = dict(
        insert_interval=2,
        budget_multiplier=4,
        upsample_milestones=[1, 2],
        resolution_ladder=[4, 8, 16],
        n_samples_start=8,
        n_samples_end=16,
        batch_size=16,
        mask_base_height=8,
        mask_levels=2,
        mask_hidden=16,
        decoder_hidden=16,
        bidi_batch_fraction=0.5,
    )
    base.update(kw)
    return TrainConfig(**base)


def tiny_images(n_frames=4, h=8, w=16, seed=0):
    g = torch.Generator().manual_seed(seed)
    base = torch.rand((h, w, 3), generator=g)
    return {k: (0.7 * base + 0.1 * k / n_frames).clamp(0, 1) for k in range(n_frames)}


def line_prior(n_frames, spacing):
    traj = Trajectory()
    for k in range(n_frames):
        traj.append(k, CameraPose(t=[spacing * k, 0.0, 0.0]))
    return traj


class TestSchedulePieces:
    def test_lr_exponential(self):
        # geometric interpolation: midpoint is the geometric mean
        assert tr.lr_at(2e-2, 2e-3, 0, 100) == pytest.approx(2e-2)
        assert tr.lr_at(2e-2, 2e-3, 100, 100) == pytest.approx(2e-3)
        assert tr.lr_at(2e-2, 2e-3, 50, 100) == pytest.approx(
            math.sqrt(2e-2 * 2e-3), rel=1e-12
        )

    def test_lr_clamped(self):
        assert tr.lr_at(1e-2, 1e-3, 200, 100) == pytest.approx(1e-3)
        assert tr.lr_at(1e-2, 1e-3, 5, 0) == 1e-2

    def test_adam_first_step_signlike(self):
        # with zero moments, step 1 moves by ~lr * sign(grad)
        p = torch.zeros(3, dtype=torch.float64)
        g = torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64)
        m = torch.zeros(3, dtype=torch.float64)
        v = torch.zeros(3, dtype=torch.float64)
        tr.adam_update(p, g, m, v, step=1, lr=0.1)
        assert torch.allclose(p, -0.1 * torch.sign(g), atol=1e-6)

    def test_adam_group_converges_quadratic(self):
        p = torch.nn.Parameter(torch.tensor([5.0], dtype=torch.float64))
        group = tr.AdamGroup(0.9, 0.99, 1e-8)
        for _ in range(500):
            loss = (p**2).sum()
            p.grad = None
            loss.backward()
            group.step([p], 0.05)
        assert p.detach().abs().item() < 1e-2

    def test_adam_group_resets_on_shape_change(self):
        p = torch.nn.Parameter(torch.ones(2, dtype=torch.float64))
        group = tr.AdamGroup(0.9, 0.99, 1e-8)
        p.grad = torch.ones(2, dtype=torch.float64)
        group.step([p], 0.1)
        # simulate an in-place upsample: same object id, new shape
        p.data = torch.ones(4, dtype=torch.float64)
        p.grad = torch.ones(4, dtype=torch.float64)
        group.step([p], 0.1)  # must not crash
        assert group.state[id(p)][0].shape == (4,)


class TestSingleBlockRun:
    def test_event_schedule_closed_form(self):
        cfg = tiny_config()
        t = tr.Trainer(tiny_images(4), cfg)
        t.run()
        kinds = [(it, kind) for it, kind, _ in t.events]
        # frame 0 inserted at construction; one more every insert_interval
        inserts = [it for it, kind, _ in t.events if kind == "insert"]
        assert inserts == [0, 2, 4, 6]
        stop = [it for it, kind, _ in t.events if kind == "stop_insertion"]
        assert stop == [6]
        # budget = 4 frames * 4 = 16 iterations for the block
        done = [it for it, kind, _ in t.events if kind == "block_done"]
        assert done == [16]
        assert t.events[-1][1] == "done"
        assert t.finished

    def test_upsample_milestones(self):
        cfg = tiny_config()
        t = tr.Trainer(tiny_images(4), cfg)
        t.run()
        ups = [(it, detail) for it, kind, detail in t.events if kind == "upsample"]
        # milestones are in units of window-size iterations; the window grows
        # during insertion, so recompute from the recorded event stream
        assert len(ups) == 2
        assert t.blocks[0].resolution == cfg.resolution_ladder[2]
        assert t.n_samples == cfg.n_samples_end

    def test_no_backward_single_block(self):
        t = tr.Trainer(tiny_images(4), tiny_config())
        t.run()
        assert not any(kind == "backward_on" for _, kind, _ in t.events)

    def test_loss_terms_present(self):
        t = tr.Trainer(tiny_images(4), tiny_config())
        loss = t.step()
        assert set(loss) >= {"rgb", "mask_rgb", "mask_tv", "mask_bin"}
        assert all(np.isfinite(v) for v in loss.values())

    def test_mask_disabled(self):
        t = tr.Trainer(tiny_images(4), tiny_config(use_mask=False))
        loss = t.step()
        assert "mask_rgb" not in loss and t.mask is None


class TestMultiBlock:
    def make(self, **cfg_kw):
        cfg = tiny_config(block_scale=1.0, block_radius=1.0, **cfg_kw)
        images = tiny_images(4)
        prior = line_prior(4, spacing=1.5)
        return tr.Trainer(images, cfg, pose_prior=prior)

    def test_block_split_on_distance(self):
        t = self.make()
        t.run()
        assert len(t.blocks) >= 2
        # overlap seeding: first frame of block 1 is the last frame of block 0
        assert t.windows[1][0] == t.windows[0][-1]
        news = [detail for _, kind, detail in t.events if kind == "block_new"]
        assert news[1].startswith("block=1 seed=")

    def test_backward_activates_on_later_block(self):
        t = self.make()
        t.run()
        assert any(kind == "backward_on" for _, kind, _ in t.events)

    def test_backward_disabled_by_config(self):
        t = self.make(use_backward=False)
        t.run()
        assert not any(kind == "backward_on" for _, kind, _ in t.events)

    def test_prior_pose_used(self):
        t = self.make()
        assert torch.allclose(
            t.poses[0].t.detach(), torch.tensor([0.0, 0.0, 0.0]), atol=1e-6
        )
        assert any(kind == "prior_loaded" for _, kind, _ in t.events)


class TestDeterminism:
    def run_once(self, tmp_path, name):
        cfg = tiny_config()
        t = tr.Trainer(tiny_images(4), cfg, deterministic=True)
        t.run()
        out = tmp_path / name
        t.save_checkpoint(out)
        return out

    def test_byte_identical_runs(self, tmp_path):
        a = self.run_once(tmp_path, "a")
        b = self.run_once(tmp_path, "b")
        for rel in ("blocks/000.bin", "poses.txt", "planes.bin", "events.log", "config.txt"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


class TestCheckpointAndEval:
    def test_round_trip_render(self, tmp_path):
        images = tiny_images(4)
        t = tr.Trainer(images, tiny_config())
        for _ in range(4):
            t.step()
        t.save_checkpoint(tmp_path)
        back = tr.load_trainer(tmp_path, images)
        assert len(back.blocks) == len(t.blocks)
        assert back.windows == t.windows
        pose = t.poses[0].detached_copy()
        img_a = t.render_frame(pose, 0)
        back.n_samples = t.n_samples
        img_b = back.render_frame(pose, 0)
        assert torch.allclose(img_a, img_b, atol=1e-6)

    def test_planes_round_trip(self, tmp_path):
        t = tr.Trainer(tiny_images(3), tiny_config())
        path = tmp_path / "planes.bin"
        tr.save_planes(t.mask, path)
        back = tr.load_planes(path)
        u = torch.rand(5)
        v = torch.rand(5)
        a = t.mask(1, u, v)
        b = back(1, u, v)
        assert torch.allclose(a[0], b[0], atol=1e-6)
        assert torch.allclose(a[1], b[1], atol=1e-6)

    def test_optimize_test_pose_moves_only_pose(self):
        t = tr.Trainer(tiny_images(4), tiny_config())
        for _ in range(4):
            t.step()
        field_before = [p.detach().clone() for p in t.blocks[0].field_parameters()]
        init = CameraPose(t=[0.05, 0.0, 0.0])
        refined = t.optimize_test_pose(t.images[0], init, n_iters=5, batch=32)
        for p0, p1 in zip(field_before, t.blocks[0].field_parameters()):
            assert torch.equal(p0, p1.detach())
        assert isinstance(refined, CameraPose)

    def test_step_after_finish_raises(self):
        t = tr.Trainer(tiny_images(2), tiny_config())
        t.run()
        with pytest.raises(RuntimeError, match="finished"):
            t.step()

    def test_nonfinite_loss_named(self):
        t = tr.Trainer(tiny_images(2), tiny_config())
        # corrupt the field so the render goes non-finite
        with torch.no_grad():
            for p in t.blocks[0].field_parameters():
                p.mul_(float("nan"))
        with pytest.raises((tr.NonFiniteLossError, ValueError)):
            t.step()

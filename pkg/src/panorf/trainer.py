"""Progressive window trainer: frame insertion, block allocation, learning
rate / upsampling / sample-count schedules, Adam updates, joint pose
optimization, test-pose-only refinement, and overlap blending for novel
views.

One logical control thread owns all parameter updates.  Every source of
randomness (batch sampling, distant-frame selection, supervision noise,
parameter init) draws from torch.Generators seeded from the config, so a
deterministic run reproduces bit-identical checkpoints and event logs.
"""

from __future__ import annotations

import math
import os
import struct

import numpy as np
import torch
from scipy.spatial.transform import Rotation as ScipyRotation

from . import bidi
from .camera import CameraPose, Trajectory, load_trajectory, save_trajectory
from .config import TrainConfig, load_config, save_config
from .field import RadianceBlock, load_block, save_block
from .maskmod import MaskModule, bin_loss, mask_rgb_loss, tv_loss
from .renderer import bilinear_fetch, integrate, sample_ray
from .sphere import pixel_to_dir

_PLANES_MAGIC = b"PRFM"


class NonFiniteLossError(RuntimeError):
    pass


def lr_at(start: float, end: float, iteration: int, total: int) -> float:
    """Exponential decay from start to end over total iterations."""
    if total <= 0:
        return start
    frac = min(max(iteration / total, 0.0), 1.0)
    return start * (end / start) ** frac


def adam_update(param, grad, exp_avg, exp_avg_sq, step, lr, beta1=0.9, beta2=0.99, eps=1e-8):
    """One bias-corrected Adam step (in-place on param); returns new moments."""
    exp_avg = beta1 * exp_avg + (1.0 - beta1) * grad
    exp_avg_sq = beta2 * exp_avg_sq + (1.0 - beta2) * grad * grad
    m_hat = exp_avg / (1.0 - beta1**step)
    v_hat = exp_avg_sq / (1.0 - beta2**step)
    with torch.no_grad():
        param -= lr * m_hat / (torch.sqrt(v_hat) + eps)
    return exp_avg, exp_avg_sq


class AdamGroup:
    """Adam moments for a dynamic set of parameter tensors."""

    def __init__(self, beta1: float, beta2: float, eps: float):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state: dict[int, list] = {}

    def step(self, params, lr: float):
        for p in params:
            if p.grad is None:
                continue
            st = self.state.get(id(p))
            if st is None or st[0].shape != p.shape:
                st = [torch.zeros_like(p), torch.zeros_like(p), 0]
                self.state[id(p)] = st
            st[2] += 1
            st[0], st[1] = adam_update(
                p.data, p.grad, st[0], st[1], st[2], lr, self.beta1, self.beta2, self.eps
            )


class Trainer:
    """Drives progressive optimization over one video."""

    def __init__(
        self,
        images: dict[int, torch.Tensor],
        config: TrainConfig | None = None,
        pose_prior: Trajectory | None = None,
        deterministic: bool = False,
        dtype=torch.float32,
    ):
        self.cfg = config or TrainConfig()
        self.dtype = dtype
        self.frames = sorted(images)
        self.images = {k: torch.as_tensor(images[k], dtype=dtype) for k in self.frames}
        h, w = next(iter(self.images.values())).shape[:2]
        self.height, self.width = h, w
        if deterministic:
            torch.set_num_threads(1)
        self.gen = torch.Generator().manual_seed(self.cfg.seed)
        self.noise_gen = torch.Generator().manual_seed(self.cfg.seed + 1)
        self.init_gen = torch.Generator().manual_seed(self.cfg.seed + 2)

        self.poses: dict[int, CameraPose] = {}
        self.prior: dict[int, CameraPose] = {}
        if pose_prior is not None:
            self.prior = {idx: pose for idx, pose in pose_prior}

        self.mask = (
            MaskModule(
                self.frames,
                base_height=self.cfg.mask_base_height,
                levels=self.cfg.mask_levels,
                channels=self.cfg.mask_channels,
                hidden=self.cfg.mask_hidden,
                dtype=dtype,
                generator=self.init_gen,
            )
            if self.cfg.use_mask
            else None
        )

        self.blocks: list[RadianceBlock] = []
        self.windows: list[list[int]] = []
        self.events: list[tuple[int, str, str]] = []
        self.it = 0  # global iteration
        self.block_iter = 0  # iterations within the current block
        self.cursor = 0  # next frame (position in self.frames) to insert
        self.inserting = True
        self.budget: int | None = None
        self.ups_count = 0
        self.n_samples = self.cfg.n_samples_start
        self.backward_active = False
        self.finished = False

        self._adam = {
            name: AdamGroup(self.cfg.adam_beta1, self.cfg.adam_beta2, self.cfg.adam_eps)
            for name in ("field", "decoder", "pose", "planes", "mask_mlp", "prior")
        }
        if self.prior:
            self._log("prior_loaded", f"n={len(self.prior)}")
        self._start_block(seed_frames=[])
        self.last_loss: dict[str, float] = {}

    # ----- scheduling helpers -------------------------------------------------

    def _log(self, kind: str, detail: str):
        self.events.append((self.it, kind, detail))

    def _new_pose(self, k: int) -> CameraPose:
        if k in self.prior:
            return self.prior[k].detached_copy(dtype=self.dtype)
        prevs = sorted(i for i in self.poses if i < k)
        if len(prevs) >= 2:
            # constant-velocity extrapolation from the last two registered
            # poses, scaled by the index gap
            i0, i1 = prevs[-2], prevs[-1]
            g = (k - i1) / (i1 - i0)
            p0, p1 = self.poses[i0], self.poses[i1]
            r0 = ScipyRotation.from_matrix(p0.rot().detach().to(torch.float64).numpy())
            r1 = ScipyRotation.from_matrix(p1.rot().detach().to(torch.float64).numpy())
            step_rot = ScipyRotation.from_rotvec((r1 * r0.inv()).as_rotvec() * g)
            t1 = p1.t.detach().to(torch.float64)
            t_new = t1 + g * (t1 - p0.t.detach().to(torch.float64))
            return CameraPose.from_matrix(
                torch.tensor((step_rot * r1).as_matrix(), dtype=self.dtype),
                t_new.to(self.dtype),
                dtype=self.dtype,
            )
        if prevs:
            return self.poses[prevs[-1]].detached_copy()
        return CameraPose(dtype=self.dtype)

    def _start_block(self, seed_frames: list[int]):
        if seed_frames:
            center = self.poses[seed_frames[-1]].t.detach().clone()
        elif self.prior:
            center = self.prior[self.frames[0]].t.detach().clone().to(self.dtype)
        else:
            center = torch.zeros(3, dtype=self.dtype)
        block = RadianceBlock(
            center=center,
            scale=self.cfg.block_scale,
            resolution=self.cfg.resolution_ladder[0],
            rank=self.cfg.rank,
            c_sigma=self.cfg.c_sigma,
            c_app=self.cfg.c_app,
            hidden=self.cfg.decoder_hidden,
            n_freqs=self.cfg.n_freqs,
            dtype=self.dtype,
            generator=self.init_gen,
        )
        block.window = list(seed_frames)
        self.blocks.append(block)
        self.windows.append(block.window)
        self.block_iter = 0
        self.inserting = True
        self.budget = None
        self.ups_count = 0
        self.n_samples = self.cfg.n_samples_start
        self.backward_active = False
        self._log("block_new", f"block={len(self.blocks)-1} seed={','.join(map(str, seed_frames))}")
        if not seed_frames:
            self._insert_next_frame()

    @property
    def current(self) -> int:
        return len(self.blocks) - 1

    @property
    def window(self) -> list[int]:
        return self.windows[self.current]

    def _insert_next_frame(self):
        k = self.frames[self.cursor]
        self.cursor += 1
        if k not in self.poses:
            self.poses[k] = self._new_pose(k)
            if k not in self.prior and self.window and self.block_iter > 0:
                # track-then-map: align the new pose photometrically against
                # the frozen field before it joins the joint optimization
                self.poses[k] = self.optimize_test_pose(
                    self.images[k],
                    self.poses[k],
                    n_iters=self.cfg.register_iters,
                    batch=self.cfg.batch_size,
                    block_idx=self.current,
                )
        self.window.append(k)
        block = self.blocks[self.current]
        dist = float(
            torch.linalg.vector_norm(self.poses[k].t.detach() - block.center) / block.scale
        )
        self._log("insert", f"frame={k} dist={dist:.4f}")
        out_of_frames = self.cursor >= len(self.frames)
        if (dist > self.cfg.block_radius and len(self.window) > 1) or out_of_frames:
            self._stop_insertion()

    def _stop_insertion(self):
        self.inserting = False
        self.budget = len(self.window) * self.cfg.budget_multiplier
        self._log("stop_insertion", f"n_frames={len(self.window)} budget={self.budget}")

    def _maybe_upsample(self):
        block = self.blocks[self.current]
        milestones = self.cfg.upsample_milestones
        ladder = self.cfg.resolution_ladder
        n = len(self.window)
        while self.ups_count < len(milestones) and self.block_iter >= milestones[self.ups_count] * n:
            self.ups_count += 1
            if self.ups_count < len(ladder):
                block.upsample(ladder[self.ups_count])
            ramp = self.ups_count / len(milestones)
            self.n_samples = round(
                self.cfg.n_samples_start
                * (self.cfg.n_samples_end / self.cfg.n_samples_start) ** ramp
            )
            self._log(
                "upsample",
                f"block={self.current} res={block.resolution} n_samples={self.n_samples}",
            )

    def _total_budget(self) -> int:
        return self.budget if self.budget is not None else len(self.window) * self.cfg.budget_multiplier

    def _lr(self, start: float, end: float) -> float:
        return lr_at(start, end, self.block_iter, self._total_budget())

    # ----- rendering ----------------------------------------------------------

    def render_rays(self, block_idx: int, origins, dirs, with_color: bool = True, n_samples=None):
        """Render world-space rays through one block; depth in block-scale units."""
        block = self.blocks[block_idx]
        o = (origins - block.center) / block.scale
        n_samples = n_samples or self.n_samples
        t, x_c, delta = sample_ray(o, dirs, n_samples, self.cfg.near, self.cfg.far)
        flat = x_c.reshape(-1, 3)
        sigma = block.query_density(flat).reshape(x_c.shape[:-1])
        if with_color:
            # decode color only where the sample can contribute
            with torch.no_grad():
                alpha = 1.0 - torch.exp(-sigma * delta)
                trans = torch.cumprod(1.0 - alpha, dim=-1)
                trans = torch.cat((torch.ones_like(trans[..., :1]), trans[..., :-1]), dim=-1)
                keep = (trans * alpha > 1e-4).reshape(-1)
            color = torch.full((flat.shape[0], 3), 0.5, dtype=flat.dtype)
            if keep.any():
                dirs_per_sample = (
                    dirs.unsqueeze(-2).expand(*x_c.shape[:-1], 3).reshape(-1, 3)
                )
                color = color.index_put(
                    (keep.nonzero(as_tuple=True)[0],),
                    block.query_color(flat[keep], dirs_per_sample[keep]),
                )
            color = color.reshape(*x_c.shape[:-1], 3)
        else:
            color = torch.full((*x_c.shape[:-1], 3), 0.5, dtype=flat.dtype)
        return integrate(sigma, color, delta, t)

    def _context(self) -> bidi.SceneContext:
        return bidi.SceneContext(
            images=self.images,
            poses=self.poses,
            windows=self.windows,
            current=self.current,
            render=self.render_rays,
            mask=self.mask,
        )

    # ----- one iteration ------------------------------------------------------

    def _pick_frames(self) -> list[int]:
        """Frames supplying rays this iteration.  During insertion the newest
        frame always contributes, so its pose registers against the partly
        trained field before the next frame arrives."""
        window = self.window
        n_f = min(len(window), 4)
        if self.inserting and len(window) > 1:
            rest = window[:-1]
            order = torch.randperm(len(rest), generator=self.gen).tolist()
            return [window[-1]] + [rest[i] for i in order[: n_f - 1]]
        order = torch.randperm(len(window), generator=self.gen).tolist()
        return [window[i] for i in order[:n_f]]

    def _sample_pixels(self, n: int):
        u = (torch.randint(self.width, (n,), generator=self.gen).to(self.dtype) + 0.5) / self.width
        v = (torch.randint(self.height, (n,), generator=self.gen).to(self.dtype) + 0.5) / self.height
        return u, v

    def _trainable_params(self, prior_idx=None):
        block = self.blocks[self.current]
        groups = {
            "field": list(block.field_parameters()),
            "decoder": list(block.decoder_parameters()),
            # every registered pose may receive gradients (window rays plus
            # the src/dst poses of the cross-window terms) except the first
            # frame, which stays fixed to anchor the gauge
            "pose": [
                p
                for k in self.poses
                if k != self.frames[0]
                for p in self.poses[k].parameters()
            ],
        }
        if self.mask is not None:
            groups["planes"] = list(self.mask.plane_parameters())
            groups["mask_mlp"] = list(self.mask.decoder_parameters())
        if prior_idx is not None:
            groups["prior"] = list(self.blocks[prior_idx].field_parameters()) + list(
                self.blocks[prior_idx].decoder_parameters()
            )
        return groups

    def step(self):
        """Run one training iteration; returns the loss breakdown."""
        cfg = self.cfg
        if self.finished:
            raise RuntimeError("training already finished")
        if (
            self.inserting
            and self.block_iter > 0
            and self.block_iter % cfg.insert_interval == 0
        ):
            self._insert_next_frame()
        self._maybe_upsample()

        refining = not self.inserting
        ladder_done = self.ups_count >= len(cfg.upsample_milestones)
        if ladder_done and refining and self.current > 0 and cfg.use_backward and not self.backward_active:
            self.backward_active = True
            self._log("backward_on", f"block={self.current}")

        ctx = self._context()
        picks = self._pick_frames()
        n_each = max(cfg.batch_size // len(picks), 1)
        use_distant = cfg.use_forward and refining and self.current > 0
        losses: dict[str, torch.Tensor] = {}
        for frame_i in picks:
            u, v = self._sample_pixels(n_each)
            loss_src, loss_fwd, aux = bidi.forward_losses(
                ctx, frame_i, u, v, self.gen, use_distant=use_distant
            )
            terms = {"rgb": loss_src, "forward": cfg.w_forward * loss_fwd}

            if self.mask is not None and "m" in aux:
                target = bilinear_fetch(self.images[frame_i], u, v)
                terms["mask_rgb"] = cfg.w_mask_rgb * mask_rgb_loss(
                    aux["dyn"], target, self.noise_gen, cfg.mask_noise_std
                )
                du, dv = 1.0 / self.width, 1.0 / self.height
                _, m_dx = self.mask(frame_i, u + du, v)
                _, m_dy = self.mask(frame_i, u, torch.clamp(v + dv, 0.0, 1.0))
                m_dt = None
                nxt = frame_i + 1
                if self.mask.has_frame(nxt):
                    _, m_dt = self.mask(nxt, u, v)
                terms["mask_tv"] = cfg.w_mask_tv * tv_loss(aux["m"], m_dx, m_dy, m_dt)
                terms["mask_bin"] = cfg.w_mask_bin * bin_loss(aux["m"])
            for name, val in terms.items():
                losses[name] = losses.get(name, 0.0) + val / len(picks)

        prior_idx = None
        if self.backward_active:
            n_b = max(int(cfg.batch_size * cfg.bidi_batch_fraction), 16)
            ub, vb = self._sample_pixels(n_b)
            back = bidi.backward_losses(ctx, ub, vb, self.gen, use_src_loss=cfg.use_backward_src)
            if back is not None:
                prior_idx, b_src, b_dst = back
                losses["backward_src"] = cfg.w_backward_src * b_src
                losses["backward_dst"] = cfg.w_backward_dst * b_dst

        total = sum(losses.values())
        for name, val in losses.items():
            if not torch.isfinite(torch.as_tensor(val)).all():
                raise NonFiniteLossError(f"non-finite loss term: {name} at iteration {self.it}")

        groups = self._trainable_params(prior_idx)
        params = [p for ps in groups.values() for p in ps]
        for p in params:
            p.grad = None
        total.backward()

        lrs = {
            "field": self._lr(cfg.lr_field_start, cfg.lr_field_end),
            "decoder": self._lr(cfg.lr_decoder_start, cfg.lr_decoder_end),
            "pose": self._lr(cfg.lr_pose_start, cfg.lr_pose_end),
            "planes": self._lr(cfg.lr_planes_start, cfg.lr_planes_end),
            "mask_mlp": self._lr(cfg.lr_mask_mlp_start, cfg.lr_mask_mlp_end),
            "prior": cfg.lr_field_end,
        }
        for name, ps in groups.items():
            self._adam[name].step(ps, lrs[name])

        self.block_iter += 1
        self.it += 1
        self.last_loss = {k: float(torch.as_tensor(val).detach()) for k, val in losses.items()}

        if self.budget is not None and self.block_iter >= self.budget:
            self._log("block_done", f"block={self.current} n_frames={len(self.window)}")
            if self.cursor < len(self.frames):
                n_overlap = max(1, math.ceil(cfg.overlap_fraction * len(self.window)))
                self._start_block(seed_frames=self.window[-n_overlap:])
            else:
                self.finished = True
                self._log("done", f"total_iters={self.it}")
                self._polish_poses()
        return self.last_loss

    def _polish_poses(self):
        """Final pose-only refinement of every registered frame against the
        frozen fields (removes residual per-frame jitter after mapping)."""
        if self.cfg.polish_iters <= 0:
            return
        for k in sorted(self.poses):
            self.poses[k] = self.optimize_test_pose(
                self.images[k],
                self.poses[k].detached_copy(),
                n_iters=self.cfg.polish_iters,
                batch=512,
            )

    def run(self, progress: bool = False):
        while not self.finished and self.it < self.cfg.max_iters:
            loss = self.step()
            if progress and self.it % 100 == 0:
                terms = " ".join(f"{k}={val:.4f}" for k, val in loss.items())
                print(f"iter {self.it} block {self.current} {terms}", flush=True)
        return self

    # ----- evaluation helpers -------------------------------------------------

    def block_for_frame(self, k: int) -> list[int]:
        return [m for m, w in enumerate(self.windows) if k in w]

    def render_frame(self, pose: CameraPose, block_idx: int, chunk: int = 4096) -> torch.Tensor:
        """Full static-branch render of one view through one block."""
        h, w = self.height, self.width
        u = (torch.arange(w, dtype=self.dtype) + 0.5) / w
        v = (torch.arange(h, dtype=self.dtype) + 0.5) / h
        vv, uu = torch.meshgrid(v, u, indexing="ij")
        dirs_cam = pixel_to_dir(uu.reshape(-1), vv.reshape(-1))
        with torch.no_grad():
            r = pose.rot()
            dirs = dirs_cam @ r.transpose(-1, -2)
            origins = pose.t.expand_as(dirs)
            out = []
            for i in range(0, dirs.shape[0], chunk):
                res = self.render_rays(block_idx, origins[i : i + chunk], dirs[i : i + chunk])
                out.append(res["color"])
        return torch.cat(out).reshape(h, w, 3)

    def render_novel(self, pose: CameraPose, frame_hint: int | None = None) -> torch.Tensor:
        """Render a novel view, blending the two blocks that share the
        nearest training frame (weight linear in the overlap position)."""
        if frame_hint is not None and frame_hint in self.poses:
            nearest = frame_hint
        else:
            dists = {
                k: float(torch.linalg.vector_norm(self.poses[k].t.detach() - pose.t.detach()))
                for k in self.poses
            }
            nearest = min(dists, key=dists.get)
        owners = self.block_for_frame(nearest)
        if len(owners) <= 1:
            idx = owners[0] if owners else self.current
            return self.render_frame(pose, idx)
        m0, m1 = owners[0], owners[1]
        run = [k for k in self.windows[m1] if k in set(self.windows[m0])]
        pos = run.index(nearest)
        w1 = (pos + 0.5) / len(run)
        img0 = self.render_frame(pose, m0)
        img1 = self.render_frame(pose, m1)
        return (1.0 - w1) * img0 + w1 * img1

    def optimize_test_pose(
        self,
        image: torch.Tensor,
        init_pose: CameraPose,
        n_iters: int = 100,
        batch: int = 1024,
        block_idx: int | None = None,
    ) -> CameraPose:
        """Refine a held-out view's pose against the trained field.

        Only the pose parameters move; field and mask receive no updates
        (gradients are taken w.r.t. the pose alone).
        """
        image = torch.as_tensor(image, dtype=self.dtype)
        pose = init_pose.detached_copy()
        params = list(pose.parameters())
        adam = AdamGroup(self.cfg.adam_beta1, self.cfg.adam_beta2, self.cfg.adam_eps)
        best = (float("inf"), [p.detach().clone() for p in params])
        for i in range(n_iters):
            u, vv = self._sample_pixels(batch)
            dirs_cam = pixel_to_dir(u, vv)
            r = pose.rot()
            dirs = dirs_cam @ r.transpose(-1, -2)
            origins = pose.t.expand_as(dirs)
            bi = self._nearest_block(pose) if block_idx is None else block_idx
            out = self.render_rays(bi, origins, dirs)
            target = bilinear_fetch(image, u, vv)
            loss = (out["color"] - target).abs().sum(dim=-1).mean()
            if not torch.isfinite(loss):
                import warnings

                warnings.warn("divergent test-pose loss; returning best-so-far pose")
                break
            grads = torch.autograd.grad(loss, params)
            for p, g in zip(params, grads):
                p.grad = g
            adam.step(params, lr_at(self.cfg.lr_pose_start, self.cfg.lr_pose_end, i, n_iters))
            cur = float(loss.detach())
            if cur < best[0]:
                best = (cur, [p.detach().clone() for p in params])
        with torch.no_grad():
            for p, bp in zip(params, best[1]):
                p.copy_(bp)
        return pose

    def _nearest_block(self, pose: CameraPose) -> int:
        dists = [
            float(torch.linalg.vector_norm(pose.t.detach() - b.center)) for b in self.blocks
        ]
        return int(np.argmin(dists))

    # ----- persistence --------------------------------------------------------

    def save_checkpoint(self, out_dir):
        os.makedirs(os.path.join(out_dir, "blocks"), exist_ok=True)
        for i, block in enumerate(self.blocks):
            save_block(block, os.path.join(out_dir, "blocks", f"{i:03d}.bin"))
        traj = Trajectory((k, self.poses[k]) for k in sorted(self.poses))
        save_trajectory(traj, os.path.join(out_dir, "poses.txt"))
        if self.mask is not None:
            save_planes(self.mask, os.path.join(out_dir, "planes.bin"))
        save_config(self.cfg, os.path.join(out_dir, "config.txt"))
        with open(os.path.join(out_dir, "events.log"), "w") as f:
            for it, kind, detail in self.events:
                f.write(f"{it} {kind} {detail}\n")


def save_planes(mask: MaskModule, path):
    with open(path, "wb") as f:
        f.write(_PLANES_MAGIC)
        f.write(
            struct.pack(
                "<6I",
                1,
                mask.base_height,
                mask.levels,
                mask.channels,
                mask.hidden,
                len(mask.frame_indices),
            )
        )
        f.write(struct.pack(f"<{len(mask.frame_indices)}I", *mask.frame_indices))
        state = mask.state_dict()
        for key in sorted(state):
            arr = np.ascontiguousarray(state[key].detach().numpy(), dtype="<f4")
            f.write(struct.pack("<I", arr.size))
            f.write(arr.tobytes())


def load_planes(path, dtype=torch.float32) -> MaskModule:
    with open(path, "rb") as f:
        if f.read(4) != _PLANES_MAGIC:
            raise ValueError(f"{path}: not a feature-plane checkpoint")
        version, base_h, levels, channels, hidden, n_frames = struct.unpack("<6I", f.read(24))
        if version != 1:
            raise ValueError(f"{path}: unsupported version {version}")
        frames = list(struct.unpack(f"<{n_frames}I", f.read(4 * n_frames)))
        mask = MaskModule(
            frames, base_height=base_h, levels=levels, channels=channels, hidden=hidden, dtype=dtype
        )
        state = mask.state_dict()
        new_state = {}
        for key in sorted(state):
            (count,) = struct.unpack("<I", f.read(4))
            arr = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(state[key].shape)
            new_state[key] = torch.tensor(arr.copy(), dtype=dtype)
        mask.load_state_dict(new_state)
        return mask


def load_trainer(ckpt_dir, images: dict[int, torch.Tensor], dtype=torch.float32) -> Trainer:
    """Rebuild a trainer (for rendering/evaluation) from a checkpoint dir."""
    cfg = load_config(TrainConfig, os.path.join(ckpt_dir, "config.txt"))
    tr = Trainer.__new__(Trainer)
    tr.cfg = cfg
    tr.dtype = dtype
    tr.frames = sorted(images)
    tr.images = {k: torch.as_tensor(images[k], dtype=dtype) for k in tr.frames}
    h, w = next(iter(tr.images.values())).shape[:2]
    tr.height, tr.width = h, w
    tr.gen = torch.Generator().manual_seed(cfg.seed)
    tr.noise_gen = torch.Generator().manual_seed(cfg.seed + 1)
    block_dir = os.path.join(ckpt_dir, "blocks")
    tr.blocks = [
        load_block(os.path.join(block_dir, name), dtype=dtype)
        for name in sorted(os.listdir(block_dir))
    ]
    tr.windows = [b.window for b in tr.blocks]
    traj = load_trajectory(os.path.join(ckpt_dir, "poses.txt"), dtype=dtype)
    tr.poses = {idx: pose for idx, pose in traj}
    planes_path = os.path.join(ckpt_dir, "planes.bin")
    tr.mask = load_planes(planes_path, dtype=dtype) if os.path.exists(planes_path) else None
    tr.n_samples = cfg.n_samples_end
    tr.events = []
    tr.it = 0
    tr.finished = True
    return tr

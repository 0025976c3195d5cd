"""Bidirectional refinement across distant frames: depth-based reprojection
between the windows of two radiance blocks, the co-visibility gate, and the
four photometric loss assemblies.

Forward step: rays of the current window are projected (using the current
block's rendered depth) into a randomly chosen frame of an earlier window;
co-visible destination rays supervise the current block against the input
image, weighted by (1 - mask).  Backward step: the roles are reversed and
only the earlier block (plus poses) receives gradients.

Rendered depths are treated as geometric lookups: they are detached before
projection, so pose/field gradients reach the losses only through rendered
colors and the projected pixel coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import torch

from .camera import CameraPose, relative
from .renderer import bilinear_fetch
from .sphere import dir_to_pixel, pixel_to_dir

COVIS_MARGIN = 0.05


def project_to_frame(u, v, depth, r_rel, t_rel):
    """Project source pixels with known depth into a destination frame.

    depth is in the source camera's units and is detached from the graph;
    gradients flow through the relative transform only.  Returns
    (u_dst, v_dst, valid) where valid is False for points that land on the
    destination camera origin or a pole.
    """
    x_src = depth.detach().unsqueeze(-1) * pixel_to_dir(u, v)
    x_dst = x_src @ r_rel.transpose(-1, -2) + t_rel
    n = torch.linalg.vector_norm(x_dst, dim=-1)
    valid = n > 1e-9
    dirs = x_dst / torch.clamp(n, min=1e-9).unsqueeze(-1)
    u_dst, v_dst, degenerate = dir_to_pixel(dirs)
    return u_dst, v_dst, valid & ~degenerate


def covis_valid(d_c, d_p, margin: float = COVIS_MARGIN, reverse: bool = False):
    """Depth-consistency gate selecting rays co-visible from two blocks.

    Forward form: (1-T)*d_p <= d_c <= (1+T)*d_p and d_c <= 1 (inside the
    near block's uncontracted region).  reverse=True swaps the two roles
    for the backward step.
    """
    if reverse:
        d_c, d_p = d_p, d_c
    lo = (1.0 - margin) * d_p
    hi = (1.0 + margin) * d_p
    return (d_c >= lo) & (d_c <= hi) & (d_c <= 1.0)


def select_distant_frame(windows, current_idx: int, generator: torch.Generator):
    """Uniformly pick an (optimized block, frame) pair whose frame is not
    shared with the current window.  Returns None when nothing is eligible."""
    current = set(windows[current_idx])
    eligible = [
        (m, k)
        for m in range(len(windows))
        if m != current_idx
        for k in windows[m]
        if k not in current
    ]
    if not eligible:
        return None
    i = int(torch.randint(len(eligible), (1,), generator=generator))
    return eligible[i]


@dataclass
class SceneContext:
    """Everything the loss assemblies need from the trainer.

    render(block, origins, dirs, with_color, n_samples) renders world-space
    rays through one block and returns {"color", "depth", "opacity"}; depth
    is in block-scale units (comparable across blocks: one shared scale).
    """

    images: dict  # frame -> (H, W, 3) tensor
    poses: dict  # frame -> CameraPose
    windows: list  # per block: list of frame indices
    current: int
    render: Callable
    mask: object = None  # MaskModule or None
    loss_weights: dict = field(default_factory=dict)


def _rays_from_pixels(pose: CameraPose, u, v):
    dirs_cam = pixel_to_dir(u, v)
    r = pose.rot()
    dirs_world = dirs_cam @ r.transpose(-1, -2)
    origins = pose.t.expand_as(dirs_world)
    return origins, dirs_world, dirs_cam


def _mask_at(ctx: SceneContext, frame: int, u, v, detach: bool = False):
    if ctx.mask is None or not ctx.mask.has_frame(frame):
        zeros = torch.zeros_like(u)
        return zeros
    _, m = ctx.mask(frame, u, v)
    return m.detach() if detach else m


def forward_losses(
    ctx: SceneContext,
    frame_i: int,
    u,
    v,
    generator: torch.Generator,
    use_distant: bool = True,
):
    """Photometric losses for one forward iteration.

    Returns (loss_src, loss_dst, aux): loss_src is the window loss at the
    sampled rays (mask-composited when a mask module is present), loss_dst
    the (1-mask)-weighted loss on co-visible rays projected into a distant
    frame (zero when no distant frame or no valid ray exists).  aux carries
    the mask/dynamic outputs at the source rays for the regularizers.
    """
    c = ctx.current
    pose_i = ctx.poses[frame_i]
    origins, dirs_world, dirs_cam = _rays_from_pixels(pose_i, u, v)
    out_c = ctx.render(c, origins, dirs_world, with_color=True)
    target = bilinear_fetch(ctx.images[frame_i], u, v).detach()

    aux = {"static": out_c["color"], "depth": out_c["depth"]}
    if ctx.mask is not None and ctx.mask.has_frame(frame_i):
        dyn_rgb, m = ctx.mask(frame_i, u, v)
        final = m.unsqueeze(-1) * dyn_rgb + (1.0 - m.unsqueeze(-1)) * out_c["color"]
        aux.update(dyn=dyn_rgb, m=m)
    else:
        final = out_c["color"]
    loss_src = (final - target).abs().sum(dim=-1).mean()

    loss_dst = final.new_zeros(())
    pick = select_distant_frame(ctx.windows, c, generator) if use_distant else None
    if pick is not None:
        p_idx, frame_j = pick
        pose_j = ctx.poses[frame_j]
        r_rel, t_rel = relative(pose_i, pose_j)
        u_dst, v_dst, proj_ok = project_to_frame(u, v, out_c["depth"], r_rel, t_rel)
        if proj_ok.any():
            u_d, v_d = u_dst[proj_ok], v_dst[proj_ok]
            o_dst, d_dst, _ = _rays_from_pixels(pose_j, u_d, v_d)
            out_cd = ctx.render(c, o_dst, d_dst, with_color=True)
            with torch.no_grad():
                out_pd = ctx.render(p_idx, o_dst, d_dst, with_color=False)
            ok = covis_valid(out_cd["depth"].detach(), out_pd["depth"])
            if ok.any():
                mask_w = 1.0 - _mask_at(ctx, frame_j, u_d[ok], v_d[ok])
                c_bar = bilinear_fetch(ctx.images[frame_j], u_d[ok], v_d[ok])
                resid = (out_cd["color"][ok] - c_bar).abs().sum(dim=-1)
                loss_dst = (mask_w * resid).mean()
                aux["covis_fraction"] = float(ok.float().mean())
    return loss_src, loss_dst, aux


def backward_losses(
    ctx: SceneContext,
    u,
    v,
    generator: torch.Generator,
    use_src_loss: bool = True,
):
    """Photometric losses refining a previously optimized block.

    Picks a prior block p and one of its frames; supervises p's rendering
    at that frame ((1-mask)-weighted) and, through depth reprojection into
    a current-window frame, at co-visible distant rays.  Gradients reach
    only block p and the poses: the current block's depth is evaluated
    without grad and the mask weights are detached.

    Returns (p_idx, loss_src, loss_dst) or None when no prior block exists.
    """
    c = ctx.current
    if c == 0:
        return None
    p_idx = int(torch.randint(c, (1,), generator=generator))
    w_p = ctx.windows[p_idx]
    frame_j = w_p[int(torch.randint(len(w_p), (1,), generator=generator))]
    pose_j = ctx.poses[frame_j]

    origins, dirs_world, _ = _rays_from_pixels(pose_j, u, v)
    out_p = ctx.render(p_idx, origins, dirs_world, with_color=True)
    zero = out_p["color"].new_zeros(())

    loss_src = zero
    if use_src_loss:
        target = bilinear_fetch(ctx.images[frame_j], u, v).detach()
        mask_w = 1.0 - _mask_at(ctx, frame_j, u, v, detach=True)
        loss_src = (mask_w * (out_p["color"] - target).abs().sum(dim=-1)).mean()

    # reproject into a current-window frame not shared with W_p
    candidates = [k for k in ctx.windows[c] if k not in set(w_p)]
    loss_dst = zero
    if candidates:
        frame_i = candidates[int(torch.randint(len(candidates), (1,), generator=generator))]
        pose_i = ctx.poses[frame_i]
        r_rel, t_rel = relative(pose_j, pose_i)
        u_dst, v_dst, proj_ok = project_to_frame(u, v, out_p["depth"], r_rel, t_rel)
        if proj_ok.any():
            u_d, v_d = u_dst[proj_ok], v_dst[proj_ok]
            o_dst, d_dst, _ = _rays_from_pixels(pose_i, u_d, v_d)
            out_pd = ctx.render(p_idx, o_dst, d_dst, with_color=True)
            with torch.no_grad():
                out_cd = ctx.render(c, o_dst, d_dst, with_color=False)
            ok = covis_valid(out_cd["depth"], out_pd["depth"].detach(), reverse=True)
            if ok.any():
                mask_w = 1.0 - _mask_at(ctx, frame_i, u_d[ok], v_d[ok], detach=True)
                c_bar = bilinear_fetch(ctx.images[frame_i], u_d[ok], v_d[ok])
                resid = (out_pd["color"][ok] - c_bar).abs().sum(dim=-1)
                loss_dst = (mask_w * resid).mean()
    return p_idx, loss_src, loss_dst

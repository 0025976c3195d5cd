"""Deterministic synthetic data generator: tiny equirectangular videos of a
textured spherical room with optional static and moving props, plus
ground-truth poses, motion masks, and depth.

Everything is a pure function of (spec, frame index): textures come from a
seeded hash-lattice value noise, so regenerating a dataset is byte-exact.
"""

from __future__ import annotations

import os

import numpy as np
import torch

from .camera import CameraPose, Trajectory, save_trajectory
from .config import SceneSpec
from .renderer import write_pfm, write_png
from .sphere import pixel_to_dir


def _hash01(ix, iy, iz, seed):
    """Deterministic uint64 lattice hash to [0,1)."""
    h = (
        ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        + iy.astype(np.uint64) * np.uint64(0xBF58476D1CE4E5B9)
        + iz.astype(np.uint64) * np.uint64(0x94D049BB133111EB)
        + np.uint64((seed * 0x2545F4914F6CDD1D + 0x632BE59BD9B4E019) & 0xFFFFFFFFFFFFFFFF)
    )
    h ^= h >> np.uint64(31)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(29)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def value_noise(p: np.ndarray, seed: int) -> np.ndarray:
    """Trilinear value noise at points p (..., 3), in [0,1)."""
    # missed-ray hit points come through as inf; their values are masked out
    # later, so pin them to 0 instead of warning on the int cast
    p = np.where(np.isfinite(p), p, 0.0)
    p0 = np.floor(p)
    f = p - p0
    f = f * f * (3.0 - 2.0 * f)  # smoothstep
    i = p0.astype(np.int64)
    out = np.zeros(p.shape[:-1], dtype=np.float64)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                val = _hash01(i[..., 0] + dx, i[..., 1] + dy, i[..., 2] + dz, seed)
                wx = f[..., 0] if dx else 1.0 - f[..., 0]
                wy = f[..., 1] if dy else 1.0 - f[..., 1]
                wz = f[..., 2] if dz else 1.0 - f[..., 2]
                out += val * wx * wy * wz
    return out


def room_texture(points: np.ndarray, spec: SceneSpec) -> np.ndarray:
    """Procedural albedo for the room wall at world points (..., 3)."""
    rgb = []
    for ch in range(3):
        acc = np.zeros(points.shape[:-1])
        amp_sum = 0.0
        for octv in range(spec.texture_octaves):
            freq = spec.texture_scale * (2.0**octv)
            amp = 0.5**octv
            acc += amp * value_noise(points * freq, spec.seed * 7 + ch * 131 + octv)
            amp_sum += amp
        rgb.append(acc / amp_sum)
    tex = np.stack(rgb, axis=-1)
    checker = (
        np.floor(points[..., 0] * spec.texture_scale)
        + np.floor(points[..., 1] * spec.texture_scale)
        + np.floor(points[..., 2] * spec.texture_scale)
    ) % 2.0
    tex = (1.0 - spec.checker_mix) * tex + spec.checker_mix * checker[..., None]
    return 0.15 + 0.7 * np.clip(tex, 0.0, 1.0)


def _intersect_sphere(origin, dirs, center, radius):
    """Nearest positive hit distance with a sphere; inf where missed."""
    oc = origin - center
    b = (dirs * oc).sum(axis=-1)
    c = (oc * oc).sum(axis=-1) - radius**2
    disc = b * b - c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    t = np.where(t0 > 1e-6, t0, t1)
    return np.where(hit & (t > 1e-6), t, np.inf)


def _intersect_box(origin, dirs, center, half):
    """Axis-aligned box hit distance via the slab method; inf where missed."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        lo = (center - half - origin) * inv
        hi = (center + half - origin) * inv
    tmin = np.minimum(lo, hi).max(axis=-1)
    tmax = np.maximum(lo, hi).min(axis=-1)
    t = np.where(tmin > 1e-6, tmin, tmax)
    ok = (tmax >= np.maximum(tmin, 0.0)) & (t > 1e-6)
    return np.where(ok, t, np.inf)


def _dynamic_center(vals, t_frac):
    cx, cy, cz, r = vals[0:4]
    v = np.array(vals[7:10])
    motion = int(vals[10])
    c = np.array([cx, cy, cz])
    if motion == 0:
        return c + v * t_frac, r
    angle = 2.0 * np.pi * t_frac
    radius = np.linalg.norm(v)
    return c + radius * np.array([np.cos(angle), 0.0, np.sin(angle)]), r


def camera_pose(spec: SceneSpec, k: int) -> CameraPose:
    """Ground-truth camera-to-world pose for frame k."""
    t_frac = k / max(spec.n_frames - 1, 1)
    if spec.camera_path == "line":
        pos = np.array([-spec.camera_radius + 2 * spec.camera_radius * t_frac,
                        spec.camera_height, 0.0])
        yaw = 0.3 * t_frac
    elif spec.camera_path == "circle":
        angle = 2.0 * np.pi * spec.camera_turns * t_frac
        pos = np.array([
            spec.camera_radius * np.cos(angle),
            spec.camera_height,
            spec.camera_radius * np.sin(angle),
        ])
        yaw = 0.5 * angle
    else:
        raise ValueError(f"unknown camera_path: {spec.camera_path}")
    cy, sy = np.cos(yaw), np.sin(yaw)
    rot = torch.tensor([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]], dtype=torch.float64)
    return CameraPose.from_matrix(rot, torch.tensor(pos, dtype=torch.float64), dtype=torch.float64)


def _chunked(spec: SceneSpec, vals, n):
    return [vals[i : i + n] for i in range(0, len(vals), n)]


def render_gt(spec: SceneSpec, k: int):
    """Ray-cast frame k: returns (rgb HxWx3, mask HxW bool, depth HxW)."""
    h, w = spec.height, spec.width
    pose = camera_pose(spec, k)
    u = (np.arange(w) + 0.5) / w
    v = (np.arange(h) + 0.5) / h
    uu, vv = np.meshgrid(u, v)
    dirs_cam = pixel_to_dir(torch.tensor(uu), torch.tensor(vv)).numpy()
    r = pose.rot().detach().numpy()
    dirs = dirs_cam @ r.T
    origin = pose.t.detach().numpy()

    t_frac = k / max(spec.n_frames - 1, 1)
    best_t = _intersect_sphere(origin, dirs, np.zeros(3), spec.room_radius)
    hit_pts = origin + best_t[..., None] * dirs
    rgb = room_texture(hit_pts, spec)
    dyn_mask = np.zeros((h, w), dtype=bool)

    def shade(color, points, obj_seed):
        base = np.asarray(color)
        mod = 0.75 + 0.25 * value_noise(points * 4.0, spec.seed * 13 + obj_seed)
        return base * mod[..., None]

    objs = []
    for i, s in enumerate(_chunked(spec, spec.static_spheres, 7)):
        t = _intersect_sphere(origin, dirs, np.array(s[0:3]), s[3])
        objs.append((t, s[4:7], False, 100 + i))
    for i, b in enumerate(_chunked(spec, spec.static_boxes, 9)):
        t = _intersect_box(origin, dirs, np.array(b[0:3]), np.array(b[3:6]))
        objs.append((t, b[6:9], False, 200 + i))
    for i, d in enumerate(_chunked(spec, spec.dynamic_spheres, 11)):
        center, radius = _dynamic_center(d, t_frac)
        t = _intersect_sphere(origin, dirs, center, radius)
        objs.append((t, d[4:7], True, 300 + i))

    for t, color, dynamic, obj_seed in objs:
        closer = t < best_t
        if not closer.any():
            continue
        pts = origin + t[..., None] * dirs
        col = shade(color, pts, obj_seed)
        rgb = np.where(closer[..., None], col, rgb)
        best_t = np.where(closer, t, best_t)
        dyn_mask = np.where(closer, dynamic, dyn_mask)

    if spec.glossy:
        spec_hl = np.clip(dirs @ np.array([0.0, 1.0, 0.0]), 0.0, 1.0) ** 8
        rgb = np.clip(rgb + 0.2 * spec_hl[..., None], 0.0, 1.0)
    return np.clip(rgb, 0.0, 1.0), dyn_mask, best_t


def gt_trajectory(spec: SceneSpec) -> Trajectory:
    return Trajectory((k, camera_pose(spec, k)) for k in range(spec.n_frames))


def test_indices(spec: SceneSpec) -> list[int]:
    """Every test_every-th frame is held out, always including frame 0."""
    return list(range(0, spec.n_frames, spec.test_every))


def emit_dataset(spec: SceneSpec, out_dir):
    """Write frames/, masks/, depth/, gt_poses.txt, and test_split.txt."""
    for sub in ("frames", "masks", "depth"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    for k in range(spec.n_frames):
        rgb, mask, depth = render_gt(spec, k)
        write_png(os.path.join(out_dir, "frames", f"{k:04d}.png"), rgb)
        write_png(os.path.join(out_dir, "masks", f"{k:04d}.png"), mask.astype(np.float64))
        write_pfm(os.path.join(out_dir, "depth", f"{k:04d}.pfm"), depth)
    save_trajectory(gt_trajectory(spec), os.path.join(out_dir, "gt_poses.txt"))
    with open(os.path.join(out_dir, "test_split.txt"), "w") as f:
        for k in test_indices(spec):
            f.write(f"{k}\n")

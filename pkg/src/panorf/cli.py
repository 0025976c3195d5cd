"""Command-line entry point.

Subcommands: gen-scene, train, render, eval-images, eval-poses.  Exit codes:
0 success, 2 invalid input, 3 I/O failure, 4 non-finite training loss.
Diagnostics go to stderr; report summaries to stdout.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .camera import load_trajectory
from .config import SceneSpec, TrainConfig, load_config
from .data import load_dataset
from .metrics import (
    ate,
    psnr,
    rpe,
    spherical_row_weights,
    ssim,
    write_image_report,
    write_pose_report,
)
from .renderer import read_png, write_png
from .scenegen import emit_dataset
from .trainer import NonFiniteLossError, Trainer, load_trainer

EXIT_INVALID = 2
EXIT_IO = 3
EXIT_NONFINITE = 4


def _overrides(pairs) -> dict[str, str]:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, val = pair.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def cmd_gen_scene(args) -> int:
    try:
        spec = load_config(SceneSpec, args.spec, _overrides(args.set))
        if args.seed is not None:
            spec.seed = args.seed
    except (OSError, ValueError, KeyError) as e:
        print(f"error: invalid scene spec: {e}", file=sys.stderr)
        return EXIT_INVALID
    try:
        emit_dataset(spec, args.out)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {spec.n_frames} frames to {args.out}")
    return 0


def cmd_train(args) -> int:
    try:
        cfg = load_config(TrainConfig, args.config, _overrides(args.set))
        dataset = load_dataset(args.data)
        prior = load_trajectory(args.pose_prior) if args.pose_prior else None
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    trainer = Trainer(
        dataset.train_images(),
        config=cfg,
        pose_prior=prior,
        deterministic=args.deterministic,
    )
    try:
        trainer.run(progress=not args.quiet)
    except NonFiniteLossError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NONFINITE
    try:
        os.makedirs(args.out, exist_ok=True)
        trainer.save_checkpoint(args.out)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"trained {len(trainer.blocks)} block(s), {trainer.it} iterations -> {args.out}")
    return 0


def cmd_render(args) -> int:
    if not os.path.isdir(os.path.join(args.ckpt, "blocks")):
        print(f"error: missing checkpoint at {args.ckpt}", file=sys.stderr)
        return EXIT_INVALID
    try:
        dataset = load_dataset(args.data) if args.data else None
        poses = load_trajectory(args.poses)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    images = dataset.images if dataset else {}
    trainer = load_trainer(args.ckpt, images or _dummy_images(args))
    os.makedirs(args.out, exist_ok=True)
    if len(poses) == 0:
        print("warning: empty pose file, nothing to render", file=sys.stderr)
        return 0
    for idx, pose in poses:
        img = trainer.render_novel(pose.detached_copy())
        write_png(os.path.join(args.out, f"{idx:04d}.png"), img.numpy())
    print(f"rendered {len(poses)} view(s) -> {args.out}")
    return 0


def _dummy_images(args):
    import torch

    return {0: torch.zeros((int(args.height), int(args.width), 3))}


def _frames_in(path):
    return sorted(f for f in os.listdir(path) if f.endswith(".png"))


def cmd_eval_images(args) -> int:
    pred_names = _frames_in(args.pred)
    gt_names = _frames_in(args.gt)
    if len(pred_names) != len(gt_names):
        print(
            f"error: frame count mismatch: {len(pred_names)} predictions vs {len(gt_names)} references",
            file=sys.stderr,
        )
        return EXIT_INVALID
    rows = []
    for pn, gn in zip(pred_names, gt_names):
        a = read_png(os.path.join(args.pred, pn))
        b = read_png(os.path.join(args.gt, gn))
        mask = None
        if args.masks:
            dyn = read_png(os.path.join(args.masks, gn)) > 0.5
            mask = ~dyn  # keep static pixels
        row = {
            "frame": os.path.splitext(pn)[0],
            "psnr": psnr(a, b, mask=mask),
            "ssim": ssim(a, b, mask=mask),
        }
        if args.ws:
            wts = spherical_row_weights(a.shape[0])
            row["psnr_ws"] = psnr(a, b, mask=mask, weights=wts)
            row["ssim_ws"] = ssim(a, b, mask=mask, weights=wts)
        rows.append(row)
    keys = [k for k in ("psnr", "psnr_ws", "ssim", "ssim_ws") if k in rows[0]]
    summary = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    write_image_report(args.report, rows, summary)
    print(" ".join(f"{k}={v:.4f}" for k, v in summary.items()))
    return 0


def cmd_eval_poses(args) -> int:
    try:
        est = load_trajectory(args.est)
        gt = load_trajectory(args.gt)
        # evaluate on the common frames (the estimate typically covers only
        # the training split)
        common = set(est.indices()) & set(gt.indices())
        if not common:
            raise ValueError("no common frames between the two trajectories")
        est = type(est)((i, p) for i, p in est if i in common)
        gt = type(gt)((i, p) for i, p in gt if i in common)
        ate_val = ate(est, gt)
        rpe_r, rpe_t = rpe(est, gt)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if args.report:
        write_pose_report(args.report, ate_val, rpe_r, rpe_t)
    print(f"ATE={ate_val:.6g} RPE_r={rpe_r:.6g} RPE_t={rpe_t:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panorf")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--pose-prior", default=None)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render novel views from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", default=None, help="dataset dir (for frame size)")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=64)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval-images", help="image metrics between two directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--masks", default=None)
    p.add_argument("--ws", action="store_true")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval_images)

    p = sub.add_parser("eval-poses", help="ATE/RPE between two trajectory files")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_eval_poses)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

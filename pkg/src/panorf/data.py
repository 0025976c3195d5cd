"""Dataset directory loading (the layout written by scenegen.emit_dataset)."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .camera import Trajectory, load_trajectory
from .renderer import read_png


@dataclass
class Dataset:
    images: dict[int, torch.Tensor]  # frame -> (H, W, 3) float
    masks: dict[int, np.ndarray] = field(default_factory=dict)  # gt dynamic masks
    test_indices: list[int] = field(default_factory=list)
    gt_poses: Trajectory | None = None

    @property
    def train_indices(self) -> list[int]:
        held = set(self.test_indices)
        return [k for k in sorted(self.images) if k not in held]

    def train_images(self) -> dict[int, torch.Tensor]:
        return {k: self.images[k] for k in self.train_indices}


def load_dataset(path) -> Dataset:
    frame_dir = os.path.join(path, "frames")
    if not os.path.isdir(frame_dir):
        raise FileNotFoundError(f"{path}: no frames/ directory")
    images = {}
    for name in sorted(os.listdir(frame_dir)):
        if not name.endswith(".png"):
            continue
        k = int(os.path.splitext(name)[0])
        images[k] = torch.tensor(read_png(os.path.join(frame_dir, name)), dtype=torch.float32)
    masks = {}
    mask_dir = os.path.join(path, "masks")
    if os.path.isdir(mask_dir):
        for name in sorted(os.listdir(mask_dir)):
            if name.endswith(".png"):
                masks[int(os.path.splitext(name)[0])] = read_png(os.path.join(mask_dir, name)) > 0.5
    test_indices = []
    split_path = os.path.join(path, "test_split.txt")
    if os.path.exists(split_path):
        with open(split_path) as f:
            test_indices = [int(line) for line in f if line.strip()]
    gt_poses = None
    pose_path = os.path.join(path, "gt_poses.txt")
    if os.path.exists(pose_path):
        gt_poses = load_trajectory(pose_path)
    return Dataset(images=images, masks=masks, test_indices=test_indices, gt_poses=gt_poses)

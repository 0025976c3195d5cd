"""Trainable camera poses, relative transforms, and trajectory file I/O.

A pose stores camera-to-world: rays originate at t with direction
rot() @ pixel_to_dir(p).  Rotation uses the 6D parameterization (two
generator vectors orthonormalized by Gram-Schmidt, third column from the
cross product), which is smooth and unconstrained under the optimizer.

Trajectory files are plain text, one line per frame:

    idx tx ty tz qx qy qz qw

with '#' comment lines ignored.  Quaternions are the interchange form; the
internal 6D representation is rebuilt on load.
"""

from __future__ import annotations

import torch
from scipy.spatial.transform import Rotation as ScipyRotation

_EPS = 1e-12


class DegenerateRotationError(ValueError):
    pass


class CameraPose(torch.nn.Module):
    """6D rotation generators (a, b) plus Euclidean translation t."""

    def __init__(self, a=None, b=None, t=None, dtype=torch.float32):
        super().__init__()
        a = torch.tensor([1.0, 0.0, 0.0], dtype=dtype) if a is None else torch.as_tensor(a, dtype=dtype)
        b = torch.tensor([0.0, 1.0, 0.0], dtype=dtype) if b is None else torch.as_tensor(b, dtype=dtype)
        t = torch.zeros(3, dtype=dtype) if t is None else torch.as_tensor(t, dtype=dtype)
        self.a = torch.nn.Parameter(a.clone())
        self.b = torch.nn.Parameter(b.clone())
        self.t = torch.nn.Parameter(t.clone())

    def rot(self) -> torch.Tensor:
        """3x3 rotation with columns [r1 r2 r3] from Gram-Schmidt on (a, b)."""
        return rot_from_generators(self.a, self.b)

    @staticmethod
    def from_matrix(r: torch.Tensor, t: torch.Tensor, dtype=torch.float32) -> "CameraPose":
        return CameraPose(a=r[:, 0], b=r[:, 1], t=t, dtype=dtype)

    def detached_copy(self, dtype=None) -> "CameraPose":
        dtype = dtype or self.a.dtype
        return CameraPose(self.a.detach(), self.b.detach(), self.t.detach(), dtype=dtype)

    def __repr__(self):
        return f"CameraPose(t={self.t.detach().tolist()})"


def rot_from_generators(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    na = torch.linalg.vector_norm(a)
    if na < 1e-9:
        raise DegenerateRotationError("degenerate rotation parameterization: a is zero")
    r1 = a / na
    b_perp = b - (b @ r1) * r1
    nb = torch.linalg.vector_norm(b_perp)
    if nb < 1e-9:
        raise DegenerateRotationError("degenerate rotation parameterization: a, b parallel")
    r2 = b_perp / nb
    r3 = torch.linalg.cross(r1, r2)
    return torch.stack((r1, r2, r3), dim=-1)


def relative(src: CameraPose, dst: CameraPose):
    """Rigid transform taking points in src camera frame to dst camera frame.

    With camera-to-world poses (R, t), the map is
    X_dst = R_dst^T (R_src X_src + t_src - t_dst); returns (R_rel, t_rel).
    """
    r_src, r_dst = src.rot(), dst.rot()
    r_rel = r_dst.transpose(-1, -2) @ r_src
    t_rel = r_dst.transpose(-1, -2) @ (src.t - dst.t)
    return r_rel, t_rel


def apply_rigid(r: torch.Tensor, t: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
    return points @ r.transpose(-1, -2) + t


class Trajectory:
    """Ordered (frame index, CameraPose) pairs with strictly increasing indices."""

    def __init__(self, entries=None):
        self.entries: list[tuple[int, CameraPose]] = []
        for idx, pose in entries or []:
            self.append(idx, pose)

    def append(self, idx: int, pose: CameraPose):
        if self.entries and idx <= self.entries[-1][0]:
            raise ValueError(f"frame indices must be strictly increasing, got {idx}")
        self.entries.append((int(idx), pose))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def indices(self):
        return [idx for idx, _ in self.entries]

    def pose(self, idx: int) -> CameraPose:
        for i, pose in self.entries:
            if i == idx:
                return pose
        raise KeyError(f"no pose for frame {idx}")


def save_trajectory(traj: Trajectory, path):
    with open(path, "w") as f:
        f.write("# idx tx ty tz qx qy qz qw\n")
        for idx, pose in traj:
            r = pose.rot().detach().to(torch.float64).numpy()
            t = pose.t.detach().to(torch.float64).numpy()
            q = ScipyRotation.from_matrix(r).as_quat()  # (qx, qy, qz, qw)
            vals = " ".join(f"{x:.10g}" for x in (*t, *q))
            f.write(f"{idx} {vals}\n")


def load_trajectory(path, dtype=torch.float32) -> Trajectory:
    traj = Trajectory()
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 8:
                raise ValueError(
                    f"{path}:{lineno}: expected 8 fields (idx tx ty tz qx qy qz qw), got {len(fields)}"
                )
            try:
                idx = int(fields[0])
                nums = [float(x) for x in fields[1:]]
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: malformed number: {e}") from e
            r = ScipyRotation.from_quat(nums[3:]).as_matrix()
            pose = CameraPose.from_matrix(
                torch.tensor(r, dtype=dtype), torch.tensor(nums[:3], dtype=dtype), dtype=dtype
            )
            traj.append(idx, pose)
    return traj

"""Ray sampling, volume integration, compositing, photometric loss, and
image fetch/write helpers.

All positions here are in block-normalized coordinates: the camera origin
and sample distances are divided by the block scale before calling in, so
a rendered depth of 1.0 means the ray terminates at the edge of the
uncontracted focus region.
"""

from __future__ import annotations

import numpy as np
import torch

from .sphere import contract

_DEPTH_EPS = 1e-6


def _warp(t: torch.Tensor) -> torch.Tensor:
    """Contracted arc length along the ray parameter: identity below 1,
    2 - 1/t beyond (the radial contraction profile)."""
    return torch.where(t <= 1.0, t, 2.0 - 1.0 / torch.clamp(t, min=1e-12))


def _unwarp(s: torch.Tensor) -> torch.Tensor:
    return torch.where(s <= 1.0, s, 1.0 / torch.clamp(2.0 - s, min=1e-12))


def sample_ray(origin: torch.Tensor, direction: torch.Tensor, n_samples: int, near: float, far: float):
    """Sample points along rays, uniformly in contracted arc length.

    origin: (..., 3), direction: (..., 3) unit.  Returns (t, x_c, delta):
    t (..., n) strictly increasing distances, x_c (..., n, 3) contracted
    positions, delta (..., n) interval lengths (last interval repeats).
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if not (0.0 < near < far):
        raise ValueError("need 0 < near < far")
    dtype, device = origin.dtype, origin.device
    s = torch.linspace(
        float(_warp(torch.tensor(near, dtype=dtype))),
        float(_warp(torch.tensor(far, dtype=dtype))),
        n_samples,
        dtype=dtype,
        device=device,
    )
    t = _unwarp(s).expand(*origin.shape[:-1], n_samples)
    x = origin.unsqueeze(-2) + t.unsqueeze(-1) * direction.unsqueeze(-2)
    x_c = contract(x)
    delta = t[..., 1:] - t[..., :-1]
    delta = torch.cat((delta, delta[..., -1:]), dim=-1)
    return t, x_c, delta


def integrate(sigma: torch.Tensor, color: torch.Tensor, delta: torch.Tensor, t: torch.Tensor):
    """Alpha-composite samples along rays.

    sigma, delta, t: (..., n); color: (..., n, 3).  Returns a dict with
    color (..., 3), depth (...), opacity (...), weights (..., n).
    """
    if not (torch.isfinite(sigma).all() and torch.isfinite(color).all()):
        raise ValueError("non-finite sample")
    # 1 - alpha = exp(-sigma*delta) is strictly positive, so the exact
    # cumulative product keeps the sum(w) = 1 - prod(1-alpha) identity tight
    alpha = 1.0 - torch.exp(-sigma * delta)
    trans = torch.cumprod(1.0 - alpha, dim=-1)
    trans = torch.cat((torch.ones_like(trans[..., :1]), trans[..., :-1]), dim=-1)
    weights = trans * alpha
    out_color = (weights.unsqueeze(-1) * color).sum(dim=-2)
    opacity = weights.sum(dim=-1)
    depth = (weights * t).sum(dim=-1) / torch.clamp(opacity, min=_DEPTH_EPS)
    return {"color": out_color, "depth": depth, "opacity": opacity, "weights": weights}


def composite(static_rgb: torch.Tensor, dyn_rgb: torch.Tensor, m: torch.Tensor) -> torch.Tensor:
    """Blend dynamic over static with mask alpha m in [0,1]."""
    m = m.unsqueeze(-1) if m.dim() == static_rgb.dim() - 1 else m
    return m * dyn_rgb + (1.0 - m) * static_rgb


def l1_loss(pred: torch.Tensor, target: torch.Tensor, weight=None):
    """Weighted L1 loss summed over elements, plus its subgradient w.r.t.
    pred (sign convention sign(0) = 0)."""
    diff = pred - target
    if weight is None:
        weight = torch.ones_like(diff)
    else:
        weight = torch.as_tensor(weight, dtype=pred.dtype).expand_as(diff)
    loss = (weight * diff.abs()).sum()
    grad = weight * torch.sign(diff)
    return loss, grad


def bilinear_fetch(image: torch.Tensor, u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Sample an (H, W, C) equirectangular image at normalized (u, v) with
    azimuthal wrap-around and polar clamp.  Differentiable in (u, v).

    Pixel (i, j) is centered at u = (i + 0.5)/W, v = (j + 0.5)/H.
    """
    h, w = image.shape[0], image.shape[1]
    x = torch.remainder(u, 1.0) * w - 0.5
    y = torch.clamp(v, 0.0, 1.0) * h - 0.5
    x0 = torch.floor(x)
    y0 = torch.floor(y)
    fx = x - x0
    fy = y - y0
    x0l = x0.long()
    y0l = y0.long()
    xi0 = torch.remainder(x0l, w)
    xi1 = torch.remainder(x0l + 1, w)
    yi0 = torch.clamp(y0l, 0, h - 1)
    yi1 = torch.clamp(y0l + 1, 0, h - 1)
    fx = fx.unsqueeze(-1)
    fy = fy.unsqueeze(-1)
    top = (1 - fx) * image[yi0, xi0] + fx * image[yi0, xi1]
    bot = (1 - fx) * image[yi1, xi0] + fx * image[yi1, xi1]
    return (1 - fy) * top + fy * bot


def write_png(path, image: np.ndarray):
    """Write an HxWx3 float image in [0,1] (or HxW for grayscale) as 8-bit PNG."""
    from PIL import Image

    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def read_png(path) -> np.ndarray:
    from PIL import Image

    return np.asarray(Image.open(path), dtype=np.float64) / 255.0


def write_pfm(path, data: np.ndarray):
    """Single-channel little-endian PFM (rows stored bottom-to-top)."""
    data = np.asarray(data, dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(data).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a single-channel PFM")
        w, h = (int(x) for x in f.readline().split())
        scale = float(f.readline())
        data = np.frombuffer(f.read(4 * w * h), dtype="<f4" if scale < 0 else ">f4")
        return np.flipud(data.reshape(h, w)).copy()

"""Motion-mask module: per-frame multi-resolution equirectangular feature
planes plus one global shallow decoder producing dynamic color and mask
alpha, with the mask losses.

Each training frame k owns a pyramid of L low-resolution planes, level l
sized h^l x 2h^l with h^l = h0 / 2^(l-1) and 4 channels.  A pixel's code is
the concatenation of bilinear samples from every level (azimuth wrap, polar
clamp); the decoder maps the code through two hidden layers to sigmoid
(dyn_rgb, m).
"""

from __future__ import annotations

import torch

from .renderer import l1_loss

TEMPORAL_TV_WEIGHT = 0.1


class MaskModule(torch.nn.Module):
    def __init__(
        self,
        frame_indices,
        base_height: int = 32,
        levels: int = 4,
        channels: int = 4,
        hidden: int = 64,
        dtype=torch.float32,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        if base_height % (2 ** (levels - 1)) != 0:
            raise ValueError("base_height must be divisible by 2**(levels-1)")
        self.base_height = int(base_height)
        self.levels = int(levels)
        self.channels = int(channels)
        self.hidden = int(hidden)
        self.frame_indices = sorted(int(k) for k in frame_indices)
        self._frame_slot = {k: i for i, k in enumerate(self.frame_indices)}

        gen = generator
        self.planes = torch.nn.ParameterList()
        for _ in self.frame_indices:
            for level in range(levels):
                h = base_height // (2**level)
                self.planes.append(
                    torch.nn.Parameter(
                        0.1 * torch.randn((channels, h, 2 * h), dtype=dtype, generator=gen)
                    )
                )
        code_dim = channels * levels
        self.decoder = torch.nn.Sequential(
            torch.nn.Linear(code_dim, hidden),
            torch.nn.ReLU(inplace=True),
            torch.nn.Linear(hidden, hidden),
            torch.nn.ReLU(inplace=True),
            torch.nn.Linear(hidden, 4),
        ).to(dtype)
        if gen is not None:
            for m in self.decoder:
                if isinstance(m, torch.nn.Linear):
                    bound = 1.0 / (m.in_features**0.5)
                    with torch.no_grad():
                        m.weight.uniform_(-bound, bound, generator=gen)
                        m.bias.uniform_(-bound, bound, generator=gen)

    def has_frame(self, k: int) -> bool:
        return int(k) in self._frame_slot

    def frame_planes(self, k: int):
        if not self.has_frame(k):
            raise KeyError(f"no feature planes for frame {k}")
        slot = self._frame_slot[int(k)]
        return [self.planes[slot * self.levels + l] for l in range(self.levels)]

    def sample_code(self, k: int, u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        """Concatenated bilinear samples from all levels of frame k's planes.

        Plane node (c, j, i) sits at u = (i + 0.5)/W, v = (j + 0.5)/H;
        azimuth wraps, polar clamps.  Returns (..., channels*levels).
        """
        codes = []
        for plane in self.frame_planes(k):
            codes.append(_bilinear_plane(plane, u, v))
        return torch.cat(codes, dim=-1)

    def decode(self, code: torch.Tensor):
        """Map a feature code to (dyn_rgb, m), both sigmoid-activated."""
        out = torch.sigmoid(self.decoder(code))
        return out[..., :3], out[..., 3]

    def forward(self, k: int, u: torch.Tensor, v: torch.Tensor):
        return self.decode(self.sample_code(k, u, v))

    def plane_parameters(self):
        yield from self.planes

    def decoder_parameters(self):
        yield from self.decoder.parameters()


def _bilinear_plane(plane: torch.Tensor, u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Bilinear sample of a (C, H, W) plane at normalized coords; wraps u,
    clamps v.  Gradients touch only the footprint entries."""
    c, h, w = plane.shape
    x = torch.remainder(u, 1.0) * w - 0.5
    y = torch.clamp(v, 0.0, 1.0) * h - 0.5
    x0 = torch.floor(x)
    y0 = torch.floor(y)
    fx = (x - x0).unsqueeze(-1)
    fy = (y - y0).unsqueeze(-1)
    xi0 = torch.remainder(x0.long(), w)
    xi1 = torch.remainder(x0.long() + 1, w)
    yi0 = torch.clamp(y0.long(), 0, h - 1)
    yi1 = torch.clamp(y0.long() + 1, 0, h - 1)
    img = plane.permute(1, 2, 0)  # (H, W, C)
    top = (1 - fx) * img[yi0, xi0] + fx * img[yi0, xi1]
    bot = (1 - fx) * img[yi1, xi0] + fx * img[yi1, xi1]
    return (1 - fy) * top + fy * bot


def mask_rgb_loss(
    dyn_rgb: torch.Tensor,
    input_rgb: torch.Tensor,
    generator: torch.Generator,
    noise_std: float = 0.1,
) -> torch.Tensor:
    """L1 between the decoded dynamic color and the noise-perturbed input
    color; the noise target keeps the dynamic/static factorization unique
    while stopping the mask branch from memorizing fine static detail."""
    noise = noise_std * torch.randn(
        input_rgb.shape, dtype=input_rgb.dtype, generator=generator
    )
    target = torch.clamp(input_rgb + noise, 0.0, 1.0)
    loss, _ = l1_loss(dyn_rgb, target.detach())
    return loss / max(dyn_rgb.shape[0], 1)


def tv_loss(m, m_dx, m_dy, m_dt=None) -> torch.Tensor:
    """Squared neighbor differences of the mask, averaged over the batch;
    the temporal term is down-weighted by 0.1."""
    loss = ((m - m_dx) ** 2).mean() + ((m - m_dy) ** 2).mean()
    if m_dt is not None and m_dt.numel() > 0:
        loss = loss + TEMPORAL_TV_WEIGHT * ((m[: m_dt.shape[0]] - m_dt) ** 2).mean()
    return loss


def bin_loss(m: torch.Tensor) -> torch.Tensor:
    """Pushes mask values toward {0, 1}; maximal at m = 0.5."""
    return (m**2 * (1.0 - m) ** 2).mean()

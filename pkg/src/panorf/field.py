"""One local radiance block: VM-factorized density/appearance grids over the
contracted cube [-2,2]^3 plus a small color decoder MLP.

The factorization follows the vector-matrix scheme: for each axis the grid
is represented by a vector factor along that axis and a matrix factor over
the other two; a channel's value at a point is the sum over axes and rank
components of (interpolated vector) * (interpolated matrix).  Density
channels are summed to a scalar and passed through a shifted softplus so a
freshly initialized block is near-empty; appearance channels feed the
decoder together with a sinusoidal view-direction encoding.

Grid arrays hold resolution+1 samples per axis (nodes at i/N of the domain),
so doubling the resolution keeps every old node an exact new node.
"""

from __future__ import annotations

import struct

import numpy as np
import torch
import torch.nn.functional as F

# axis layout: component i has its vector along VEC_AXES[i] and its matrix
# over MAT_AXES[i] (grid_sample x=fast axis, y=slow axis)
MAT_AXES = ((0, 1), (0, 2), (1, 2))
VEC_AXES = (2, 1, 0)

DOMAIN_RADIUS = 2.0
DENSITY_SHIFT = -10.0

_CKPT_MAGIC = b"PRFB"
_CKPT_VERSION = 1


def view_encoding(dirs: torch.Tensor, n_freqs: int = 4) -> torch.Tensor:
    """Sinusoidal encoding [d, sin(2^k pi d), cos(2^k pi d)], k < n_freqs."""
    out = [dirs]
    for k in range(n_freqs):
        s = (2.0**k) * np.pi * dirs
        out.append(torch.sin(s))
        out.append(torch.cos(s))
    return torch.cat(out, dim=-1)


def view_encoding_dim(n_freqs: int = 4) -> int:
    return 3 + 6 * n_freqs


class RadianceBlock(torch.nn.Module):
    """Factorized radiance field for one temporal window of frames."""

    def __init__(
        self,
        center,
        scale: float,
        resolution: int = 32,
        rank: int = 4,
        c_sigma: int = 8,
        c_app: int = 24,
        hidden: int = 128,
        n_freqs: int = 4,
        dtype=torch.float32,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        self.resolution = int(resolution)
        self.rank = int(rank)
        self.c_sigma = int(c_sigma)
        self.c_app = int(c_app)
        self.hidden = int(hidden)
        self.n_freqs = int(n_freqs)
        self.window: list[int] = []
        self.register_buffer("center", torch.as_tensor(center, dtype=dtype))
        self.scale = float(scale)

        n = self.resolution + 1
        gen = generator

        def init(shape, std=0.1):
            return torch.nn.Parameter(std * torch.randn(shape, dtype=dtype, generator=gen))

        self.den_vecs = torch.nn.ParameterList(
            [init((1, c_sigma * rank, n, 1)) for _ in range(3)]
        )
        self.den_mats = torch.nn.ParameterList(
            [init((1, c_sigma * rank, n, n)) for _ in range(3)]
        )
        self.app_vecs = torch.nn.ParameterList(
            [init((1, c_app * rank, n, 1)) for _ in range(3)]
        )
        self.app_mats = torch.nn.ParameterList(
            [init((1, c_app * rank, n, n)) for _ in range(3)]
        )
        in_dim = c_app + view_encoding_dim(n_freqs)
        self.decoder = torch.nn.Sequential(
            torch.nn.Linear(in_dim, hidden),
            torch.nn.ReLU(inplace=True),
            torch.nn.Linear(hidden, hidden),
            torch.nn.ReLU(inplace=True),
            torch.nn.Linear(hidden, 3),
        ).to(dtype)
        if gen is not None:
            # reinitialize linear layers from the block generator so block
            # construction is fully determined by (config, seed)
            for m in self.decoder:
                if isinstance(m, torch.nn.Linear):
                    bound = 1.0 / np.sqrt(m.in_features)
                    with torch.no_grad():
                        m.weight.uniform_(-bound, bound, generator=gen)
                        m.bias.uniform_(-bound, bound, generator=gen)

    @property
    def dtype(self):
        return self.den_vecs[0].dtype

    def in_domain(self, x_c: torch.Tensor) -> torch.Tensor:
        return (x_c.abs() <= DOMAIN_RADIUS).all(dim=-1)

    def _factor_sample(self, vecs, mats, x_c: torch.Tensor, channels: int) -> torch.Tensor:
        """Sum the VM components at contracted points; returns (npts, channels)."""
        s = x_c / DOMAIN_RADIUS  # [-1, 1]
        npts = s.shape[0]
        feat = None
        for i in range(3):
            ax, ay = MAT_AXES[i]
            mat_coords = torch.stack((s[:, ax], s[:, ay]), dim=-1).view(1, npts, 1, 2)
            vec_coords = torch.stack(
                (torch.zeros_like(s[:, 0]), s[:, VEC_AXES[i]]), dim=-1
            ).view(1, npts, 1, 2)
            m = F.grid_sample(mats[i], mat_coords, mode="bilinear", align_corners=True)
            v = F.grid_sample(vecs[i], vec_coords, mode="bilinear", align_corners=True)
            term = (m * v).view(channels, self.rank, npts).sum(dim=1)
            feat = term if feat is None else feat + term
        return feat.transpose(0, 1)

    def density_feature(self, x_c: torch.Tensor) -> torch.Tensor:
        """Pre-activation scalar density feature at contracted points."""
        return self._factor_sample(self.den_vecs, self.den_mats, x_c, self.c_sigma).sum(dim=-1)

    def query_density(self, x_c: torch.Tensor) -> torch.Tensor:
        """Nonnegative density; points outside the contracted cube are empty."""
        inside = self.in_domain(x_c)
        sigma = F.softplus(self.density_feature(x_c) + DENSITY_SHIFT)
        return torch.where(inside, sigma, torch.zeros_like(sigma))

    def appearance_feature(self, x_c: torch.Tensor) -> torch.Tensor:
        return self._factor_sample(self.app_vecs, self.app_mats, x_c, self.c_app)

    def query_color(self, x_c: torch.Tensor, view_dir: torch.Tensor) -> torch.Tensor:
        """Decoded RGB in [0,1]^3 at contracted points with unit view dirs."""
        feat = self.appearance_feature(x_c)
        enc = view_encoding(view_dir, self.n_freqs)
        return torch.sigmoid(self.decoder(torch.cat((feat, enc), dim=-1)))

    def upsample(self, new_resolution: int):
        """Resample all factors to a finer grid in place.

        Old node values are preserved exactly whenever new_resolution is an
        integer multiple of the current one.
        """
        if new_resolution <= self.resolution:
            raise ValueError(
                f"upsample requires new_resolution > {self.resolution}, got {new_resolution}"
            )
        n = new_resolution + 1
        for plist, size in (
            (self.den_vecs, (n, 1)),
            (self.app_vecs, (n, 1)),
            (self.den_mats, (n, n)),
            (self.app_mats, (n, n)),
        ):
            for i in range(3):
                plist[i] = torch.nn.Parameter(
                    F.interpolate(
                        plist[i].data, size=size, mode="bilinear", align_corners=True
                    )
                )
        self.resolution = int(new_resolution)

    def field_parameters(self):
        """Grid factors (scheduled at the field learning rate)."""
        for plist in (self.den_vecs, self.den_mats, self.app_vecs, self.app_mats):
            yield from plist

    def decoder_parameters(self):
        yield from self.decoder.parameters()


def param_grads(loss: torch.Tensor, block: RadianceBlock) -> dict[str, torch.Tensor]:
    """Gradients of a scalar loss w.r.t. every block parameter, by name."""
    names, params = zip(*block.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True, retain_graph=True)
    return {
        n: (g if g is not None else torch.zeros_like(p))
        for n, p, g in zip(names, params, grads)
    }


def _write_array(f, arr: torch.Tensor):
    a = np.ascontiguousarray(arr.detach().cpu().numpy(), dtype="<f4")
    f.write(struct.pack("<I", a.ndim))
    f.write(struct.pack(f"<{a.ndim}I", *a.shape))
    f.write(a.tobytes())


def _read_array(f) -> np.ndarray:
    (ndim,) = struct.unpack("<I", f.read(4))
    shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
    count = int(np.prod(shape))
    return np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape).copy()


def save_block(block: RadianceBlock, path):
    """Versioned binary checkpoint; little-endian f32 arrays, byte-exact."""
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        header = struct.pack(
            "<7I",
            _CKPT_VERSION,
            block.resolution,
            block.rank,
            block.c_sigma,
            block.c_app,
            block.hidden,
            block.n_freqs,
        )
        f.write(header)
        f.write(np.asarray(block.center.detach().cpu().numpy(), dtype="<f4").tobytes())
        f.write(struct.pack("<f", block.scale))
        f.write(struct.pack("<I", len(block.window)))
        f.write(struct.pack(f"<{len(block.window)}I", *block.window))
        state = block.state_dict()
        keys = sorted(k for k in state if k != "center")
        f.write(struct.pack("<I", len(keys)))
        for k in keys:
            kb = k.encode()
            f.write(struct.pack("<I", len(kb)))
            f.write(kb)
            _write_array(f, state[k])


def load_block(path, dtype=torch.float32) -> RadianceBlock:
    with open(path, "rb") as f:
        if f.read(4) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a radiance block checkpoint")
        version, resolution, rank, c_sigma, c_app, hidden, n_freqs = struct.unpack(
            "<7I", f.read(28)
        )
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        center = np.frombuffer(f.read(12), dtype="<f4")
        (scale,) = struct.unpack("<f", f.read(4))
        (nwin,) = struct.unpack("<I", f.read(4))
        window = list(struct.unpack(f"<{nwin}I", f.read(4 * nwin)))
        block = RadianceBlock(
            center=center.astype(np.float32),
            scale=scale,
            resolution=resolution,
            rank=rank,
            c_sigma=c_sigma,
            c_app=c_app,
            hidden=hidden,
            n_freqs=n_freqs,
            dtype=dtype,
        )
        block.window = window
        (nkeys,) = struct.unpack("<I", f.read(4))
        state = {}
        for _ in range(nkeys):
            (klen,) = struct.unpack("<I", f.read(4))
            k = f.read(klen).decode()
            state[k] = torch.tensor(_read_array(f), dtype=dtype)
        state["center"] = torch.tensor(center.copy(), dtype=dtype)
        block.load_state_dict(state)
        return block

"""Equirectangular sphere geometry: pixel/direction maps, contraction, row weights.

Convention (fixed here, consumed everywhere else): y is up, z is forward,
u in [0,1) increases eastward with u=0.5 looking down +z, v in [0,1] runs
from the north pole (v=0) to the south pole (v=1).  Azimuth
theta = 2*pi*(u - 0.5), polar angle phi = pi*v, and

    dir = (sin(phi)*sin(theta), cos(phi), sin(phi)*cos(theta)).

All functions accept torch tensors of any batch shape and preserve dtype,
so callers can run them in float64 for gradient checks.
"""

import numpy as np
import torch

TWO_PI = 2.0 * np.pi

# |y| above this counts as a pole, where azimuth is undefined.
_POLE_EPS = 1.0 - 1e-12


def pixel_to_dir(u, v):
    """Map normalized pixel coordinates to unit directions.

    u wraps modulo 1, v is clamped to [0,1].  Returns a (..., 3) tensor.
    """
    u = torch.remainder(u, 1.0)
    v = torch.clamp(v, 0.0, 1.0)
    theta = TWO_PI * (u - 0.5)
    phi = np.pi * v
    sin_phi = torch.sin(phi)
    return torch.stack(
        (sin_phi * torch.sin(theta), torch.cos(phi), sin_phi * torch.cos(theta)),
        dim=-1,
    )


def dir_to_pixel(d):
    """Map unit directions to normalized pixel coordinates.

    Returns (u, v, degenerate).  At the poles azimuth is undefined; u is 0
    there by convention and the degenerate flag is set.
    """
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    u = torch.remainder(torch.atan2(x, z) / TWO_PI + 0.5, 1.0)
    v = torch.acos(torch.clamp(y, -1.0, 1.0)) / np.pi
    degenerate = torch.abs(y) >= _POLE_EPS
    u = torch.where(degenerate, torch.zeros_like(u), u)
    return u, v, degenerate


def contract(x):
    """Piecewise scene contraction: identity inside the unit ball, else
    (2 - 1/|x|) * x/|x|.  Output norm is always < 2."""
    n = torch.linalg.vector_norm(x, dim=-1, keepdim=True)
    safe_n = torch.clamp(n, min=1e-12)
    outer = (2.0 - 1.0 / safe_n) * (x / safe_n)
    return torch.where(n <= 1.0, x, outer)


def contract_jacobian(x):
    """Analytic Jacobian of contract(), shape (..., 3, 3).

    Inside the unit ball (including |x| = 1, where the map is C0 but not C1)
    this is the identity.  Outside, with g(n) = 2/n - 1/n^2,

        J = g(n) * I + (g'(n)/n) * x x^T,   g'(n) = -2/n^2 + 2/n^3.
    """
    n = torch.linalg.vector_norm(x, dim=-1, keepdim=True)
    eye = torch.eye(3, dtype=x.dtype, device=x.device).expand(*x.shape[:-1], 3, 3)
    safe_n = torch.clamp(n, min=1e-12)
    g = 2.0 / safe_n - 1.0 / safe_n**2
    dg = -2.0 / safe_n**2 + 2.0 / safe_n**3
    outer = x.unsqueeze(-1) * x.unsqueeze(-2)
    j_out = g.unsqueeze(-1) * eye + (dg / safe_n).unsqueeze(-1) * outer
    inner = (n <= 1.0).unsqueeze(-1)
    return torch.where(inner, eye, j_out)


def spherical_weight(j, height):
    """Per-row solid-angle weight for equirectangular images.

    w(j) = cos((j + 0.5 - H/2) * pi / H); strictly positive, symmetric about
    the equator, maximal at equator rows.  Accepts scalar or array j.
    """
    j = np.asarray(j, dtype=np.float64)
    return np.cos((j + 0.5 - height / 2.0) * np.pi / height)

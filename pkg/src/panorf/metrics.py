"""Image-quality metrics (plain and spherically weighted, mask-aware) and
trajectory metrics (ATE with similarity alignment, RPE).

Implemented on numpy, independent of the torch rendering path.  The
spherically weighted (WS) variants weight each pixel row by its solid
angle via sphere.spherical_weight, which compensates the oversampling of
polar rows in equirectangular images.
"""

from __future__ import annotations

import csv

import numpy as np
from scipy.ndimage import convolve

from .sphere import spherical_weight

PSNR_CAP = 99.0
_LUMA = np.array([0.299, 0.587, 0.114])


def _pixel_weights(shape, mask, weights):
    """Combine the keep-mask and row weights into per-pixel weights."""
    h, w = shape[:2]
    out = np.ones((h, w), dtype=np.float64)
    if weights is not None:
        out *= np.asarray(weights, dtype=np.float64).reshape(h, 1)
    if mask is not None:
        out *= np.asarray(mask, dtype=np.float64)
    return out


def spherical_row_weights(height: int) -> np.ndarray:
    return spherical_weight(np.arange(height), height)


def psnr(a, b, mask=None, weights=None) -> float:
    """-10*log10 of the (weighted) mean squared error over kept pixels.

    Values are expected in [0,1]; identical images cap at 99 dB.  mask is a
    per-pixel keep flag; weights are per-row (pass spherical_row_weights(H)
    for the WS variant).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    w = _pixel_weights(a.shape, mask, weights)
    total = w.sum()
    if total <= 0:
        raise ValueError("no kept pixels")
    se = ((a - b) ** 2).reshape(*w.shape, -1).mean(axis=-1)
    mse = (w * se).sum() / total
    if mse <= 10 ** (-PSNR_CAP / 10.0):
        return PSNR_CAP
    return float(-10.0 * np.log10(mse))


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(r**2) / (2 * sigma**2))
    k /= k.sum()
    return np.outer(k, k)


def ssim_map(a, b, k1: float = 0.01, k2: float = 0.03, window: int = 11, sigma: float = 1.5):
    """Standard SSIM map on the luma channel (Gaussian window)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 3:
        a = a @ _LUMA
        b = b @ _LUMA
    if min(a.shape) < window:
        raise ValueError(f"image smaller than the {window}x{window} SSIM window")
    kern = _gaussian_kernel(window, sigma)
    c1 = k1**2
    c2 = k2**2

    def filt(x):
        return convolve(x, kern, mode="nearest")

    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, mask=None, weights=None) -> float:
    """Mean SSIM; windows whose center pixel is masked out are excluded.

    For the inpaint-to-gray evaluation protocol, fill masked regions with
    0.5 in both images before calling instead of passing a mask.
    """
    smap = ssim_map(a, b)
    w = _pixel_weights(smap.shape, mask, weights)
    total = w.sum()
    if total <= 0:
        raise ValueError("no kept pixels")
    return float((w * smap).sum() / total)


def umeyama_alignment(src: np.ndarray, dst: np.ndarray):
    """Least-squares similarity (s, R, t) with s*R@src + t ~= dst.

    src, dst: (N, 3) point sets, N >= 3.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.shape[0] < 3:
        raise ValueError("need >= 3 corresponding points")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / src.shape[0]
    u, d, vt = np.linalg.svd(cov)
    s_fix = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[2, 2] = -1.0
    if np.linalg.matrix_rank(cov) < 2:
        import warnings

        warnings.warn("degenerate (collinear) trajectory: rotation under-determined")
    r = u @ s_fix @ vt
    var_s = (xs**2).sum() / src.shape[0]
    scale = float(np.trace(np.diag(d) @ s_fix) / var_s) if var_s > 0 else 1.0
    t = mu_d - scale * r @ mu_s
    return scale, r, t


def _traj_arrays(est, gt):
    """Match trajectories on frame index; returns (idx, est_t, gt_t, est_R, gt_R)."""
    est_map = {idx: pose for idx, pose in est}
    gt_map = {idx: pose for idx, pose in gt}
    common = sorted(set(est_map) & set(gt_map))
    missing = sorted((set(est_map) ^ set(gt_map)))
    if missing:
        raise ValueError(f"trajectory index mismatch, unmatched frames: {missing}")
    if not common:
        raise ValueError("no common frames")

    est_t = np.array([est_map[i].t.detach().double().numpy() for i in common])
    gt_t = np.array([gt_map[i].t.detach().double().numpy() for i in common])
    est_r = np.array([est_map[i].rot().detach().double().numpy() for i in common])
    gt_r = np.array([gt_map[i].rot().detach().double().numpy() for i in common])
    return common, est_t, gt_t, est_r, gt_r


def align(est, gt):
    """Similarity alignment of est onto gt translations: (s, R, t)."""
    _, est_t, gt_t, _, _ = _traj_arrays(est, gt)
    return umeyama_alignment(est_t, gt_t)


def ate(est, gt) -> float:
    """RMSE of translation residuals after similarity alignment."""
    _, est_t, gt_t, _, _ = _traj_arrays(est, gt)
    s, r, t = umeyama_alignment(est_t, gt_t)
    aligned = est_t @ (s * r).T + t
    return float(np.sqrt(((aligned - gt_t) ** 2).sum(axis=-1).mean()))


def rpe(est, gt, delta: int = 1):
    """Relative pose error at frame spacing delta.

    Per step: E = (gt_i^-1 gt_{i+d})^-1 (est_i^-1 est_{i+d}); returns
    (RPE_r, RPE_t) as RMS rotation angle in degrees and RMS translation
    norm.  Invariant to independent global rigid transforms of each input.
    """
    common, est_t, gt_t, est_r, gt_r = _traj_arrays(est, gt)
    pairs = [
        (i, common.index(idx + delta))
        for i, idx in enumerate(common)
        if idx + delta in common
    ]
    if not pairs:
        raise ValueError(f"no frame pairs at spacing {delta}")
    rot_errs = []
    t_errs = []
    for i, j in pairs:
        # relative motions, camera-to-world convention
        r_gt = gt_r[i].T @ gt_r[j]
        t_gt = gt_r[i].T @ (gt_t[j] - gt_t[i])
        r_es = est_r[i].T @ est_r[j]
        t_es = est_r[i].T @ (est_t[j] - est_t[i])
        r_err = r_gt.T @ r_es
        t_err = r_gt.T @ (t_es - t_gt)
        cos_a = np.clip((np.trace(r_err) - 1.0) / 2.0, -1.0, 1.0)
        rot_errs.append(np.degrees(np.arccos(cos_a)))
        t_errs.append(np.linalg.norm(t_err))
    rpe_r = float(np.sqrt(np.mean(np.square(rot_errs))))
    rpe_t = float(np.sqrt(np.mean(np.square(t_errs))))
    return rpe_r, rpe_t


def write_image_report(path, rows, summary):
    """Per-frame metric rows plus a summary row as CSV.

    rows: list of dicts with keys frame, psnr, psnr_ws, ssim, ssim_ws.
    """
    fields = ["frame", "psnr", "psnr_ws", "ssim", "ssim_ws"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fields})
        writer.writerow({"frame": "mean", **{k: summary.get(k, "") for k in fields[1:]}})


def write_pose_report(path, ate_val, rpe_r, rpe_t):
    with open(path, "w") as f:
        f.write("# aggregation: RMS\n")
        f.write(f"ATE {ate_val:.10g}\n")
        f.write(f"RPE_r {rpe_r:.10g}\n")
        f.write(f"RPE_t {rpe_t:.10g}\n")

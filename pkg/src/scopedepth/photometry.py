"""Appearance terms: SSIM, the per-pixel photometric residual, and the
edge-aware smoothness prior.

Windowed SSIM statistics use a box filter with edge replication, so every
value is checkable against a brute-force loop over clamped windows.  The
module also exposes the exact adjoint of that filter and the reverse-mode
derivative of the SSIM map, which training needs to push photometric error
back through warped images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imagery import DepthMap, Image, Mask, same_shape


def _depth_array(d) -> np.ndarray:
    arr = d.data if isinstance(d, DepthMap) else d
    return np.asarray(arr, dtype=np.float64)


@dataclass(frozen=True)
class PhotometricConfig:
    """Weights of the residual: ``(1-alpha) L1 + (alpha/2)(1 - SSIM)``.

    Defaults follow the standard view-synthesis configuration on [0, 1]
    intensities: alpha 0.85, 3x3 window, c1 = 0.01^2, c2 = 0.03^2.
    """

    alpha: float = 0.85
    ssim_window: int = 3
    c1: float = 0.01**2
    c2: float = 0.03**2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 3")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1, c2 must be positive")


def box_filter(x: np.ndarray, window: int) -> np.ndarray:
    """Windowed mean with edge replication (mode 'nearest')."""
    weights = np.full(window, 1.0 / window)
    out = ndimage.correlate1d(np.asarray(x, dtype=np.float64), weights, axis=0,
                              mode="nearest")
    return ndimage.correlate1d(out, weights, axis=1, mode="nearest")


def _box_adjoint_1d(g: np.ndarray, window: int, axis: int) -> np.ndarray:
    """Transpose of the 1-D replicate-padded moving mean along ``axis``."""
    n = g.shape[axis]
    r = window // 2
    if n < window:
        raise ValueError("array smaller than filter window")
    weights = np.full(window, 1.0 / window)
    out = ndimage.correlate1d(g, weights, axis=axis, mode="constant", cval=0.0)
    # fold the window mass that replicate padding borrowed from the edges
    gm = np.moveaxis(g, axis, 0)
    om = np.moveaxis(out, axis, 0)
    counts = np.arange(r, 0, -1, dtype=np.float64)  # r, r-1, ..., 1
    om[0] = om[0] + np.tensordot(counts, gm[:r], axes=(0, 0)) / window
    om[n - 1] = om[n - 1] + np.tensordot(counts[::-1], gm[n - r:], axes=(0, 0)) / window
    return out


def box_filter_adjoint(g: np.ndarray, window: int) -> np.ndarray:
    """Adjoint of :func:`box_filter`: <box(x), g> == <x, adjoint(g)>."""
    out = _box_adjoint_1d(np.asarray(g, dtype=np.float64), window, axis=1)
    return _box_adjoint_1d(out, window, axis=0)


def _ssim_channel(a: np.ndarray, b: np.ndarray, cfg: PhotometricConfig) -> np.ndarray:
    win = cfg.ssim_window
    mu_a = box_filter(a, win)
    mu_b = box_filter(b, win)
    var_a = box_filter(a * a, win) - mu_a**2
    var_b = box_filter(b * b, win) - mu_b**2
    cov = box_filter(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + cfg.c1) * (2 * cov + cfg.c2)
    den = (mu_a**2 + mu_b**2 + cfg.c1) * (var_a + var_b + cfg.c2)
    return num / den


def ssim_map(a: Image, b: Image, cfg: PhotometricConfig | None = None) -> np.ndarray:
    """Per-pixel SSIM of two images, channel-mean, float64 in [-1, 1]."""
    cfg = cfg or PhotometricConfig()
    same_shape(a, b)
    if a.channels != b.channels:
        raise ValueError("channel counts disagree")
    da = a.data.astype(np.float64)
    db = b.data.astype(np.float64)
    chans = [_ssim_channel(da[:, :, c], db[:, :, c], cfg) for c in range(a.channels)]
    return np.mean(chans, axis=0)


def ssim_backward_channel(
    a: np.ndarray, b: np.ndarray, upstream: np.ndarray, cfg: PhotometricConfig
) -> np.ndarray:
    """d(sum(upstream * ssim(a, b)))/db for a single channel, a held fixed."""
    win = cfg.ssim_window
    mu_a = box_filter(a, win)
    mu_b = box_filter(b, win)
    e_b2 = box_filter(b * b, win)
    e_ab = box_filter(a * b, win)
    var_a = box_filter(a * a, win) - mu_a**2
    var_b = e_b2 - mu_b**2
    cov = e_ab - mu_a * mu_b
    A1 = 2 * mu_a * mu_b + cfg.c1
    A2 = 2 * cov + cfg.c2
    B1 = mu_a**2 + mu_b**2 + cfg.c1
    B2 = var_a + var_b + cfg.c2
    S = (A1 * A2) / (B1 * B2)
    dS_dA1 = A2 / (B1 * B2)
    dS_dA2 = A1 / (B1 * B2)
    dS_dB1 = -S / B1
    dS_dB2 = -S / B2
    # mu_b feeds A1 directly and A2, B1, B2 through cov / mu_b^2 terms
    g_mu = upstream * (
        dS_dA1 * 2 * mu_a + dS_dA2 * (-2 * mu_a) + dS_dB1 * 2 * mu_b + dS_dB2 * (-2 * mu_b)
    )
    g_eab = upstream * dS_dA2 * 2
    g_eb2 = upstream * dS_dB2
    return (
        box_filter_adjoint(g_mu, win)
        + box_filter_adjoint(g_eab, win) * a
        + box_filter_adjoint(g_eb2, win) * 2 * b
    )


def photometric_residual(
    I_tgt: Image,
    warps: list[tuple[Image, Mask]],
    cfg: PhotometricConfig | None = None,
) -> tuple[np.ndarray, Mask]:
    """Minimum-over-sources photometric error of Eq.-4 form.

    Per pixel and per valid source: ``(1-alpha) * L1 + (alpha/2) * (1-SSIM)``
    with L1 the channel-mean absolute difference; the residual keeps the
    smallest candidate.  A pixel is valid when at least one source is.
    """
    cfg = cfg or PhotometricConfig()
    if not warps:
        raise ValueError("need at least one warped source")
    f_p, valid, _, _ = photometric_residual_detailed(I_tgt, warps, cfg)
    return f_p, Mask(valid)


def photometric_residual_detailed(
    I_tgt: Image,
    warps: list[tuple[Image, Mask]],
    cfg: PhotometricConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[np.ndarray]]:
    """Residual plus per-source bookkeeping for gradient propagation.

    Returns (f_p, valid, argmin source index (-1 where invalid), per-source
    candidate maps with +inf at invalid pixels).
    """
    if not warps:
        raise ValueError("need at least one warped source")
    same_shape(I_tgt, *[w for w, _ in warps], *[m for _, m in warps])
    candidates = []
    for I_w, mask in warps:
        l1 = np.abs(I_tgt.data.astype(np.float64) - I_w.data.astype(np.float64)).mean(axis=2)
        s = ssim_map(I_tgt, I_w, cfg)
        cand = (1.0 - cfg.alpha) * l1 + 0.5 * cfg.alpha * (1.0 - s)
        cand = np.where(mask.data, cand, np.inf)
        candidates.append(cand)
    stack = np.stack(candidates, axis=0)
    arg = np.argmin(stack, axis=0)
    f_p = np.min(stack, axis=0)
    valid = np.isfinite(f_p)
    f_p = np.where(valid, f_p, 0.0)
    arg = np.where(valid, arg, -1)
    return f_p, valid, arg, candidates


def edge_aware_smoothness(d, I: Image) -> np.ndarray:
    """Edge-weighted first-order smoothness of mean-normalized depth.

    With d* = d / mean(d) and forward differences (zero in the last
    row/column):  |dx d*| exp(-|dx gray|) + |dy d*| exp(-|dy gray|).
    Raises when mean depth is not positive.
    """
    darr = _depth_array(d)
    mu = darr.mean()
    if mu <= 0:
        raise ValueError("mean depth must be positive")
    gray = I.gray()
    if gray.shape != darr.shape:
        raise ValueError("depth and image dimensions disagree")
    dn = darr / mu
    gx = np.zeros_like(dn)
    gy = np.zeros_like(dn)
    gx[:, :-1] = np.abs(np.diff(dn, axis=1))
    gy[:-1, :] = np.abs(np.diff(dn, axis=0))
    wx = np.ones_like(gray)
    wy = np.ones_like(gray)
    wx[:, :-1] = np.exp(-np.abs(np.diff(gray, axis=1)))
    wy[:-1, :] = np.exp(-np.abs(np.diff(gray, axis=0)))
    return gx * wx + gy * wy


def edge_aware_smoothness_grad(d, I: Image) -> np.ndarray:
    """d(mean(edge_aware_smoothness))/d(depth[j]), including the coupling
    through the mean normalization.  Sign of a zero difference is taken
    as zero."""
    darr = _depth_array(d)
    mu = darr.mean()
    if mu <= 0:
        raise ValueError("mean depth must be positive")
    gray = I.gray()
    n = darr.size
    sx = np.zeros_like(darr)
    sy = np.zeros_like(darr)
    sx[:, :-1] = np.sign(np.diff(darr, axis=1))
    sy[:-1, :] = np.sign(np.diff(darr, axis=0))
    wx = np.ones_like(gray)
    wy = np.ones_like(gray)
    wx[:, :-1] = np.exp(-np.abs(np.diff(gray, axis=1)))
    wy[:-1, :] = np.exp(-np.abs(np.diff(gray, axis=0)))
    t_raw = (np.abs(np.diff(darr, axis=1)) * wx[:, :-1]).sum() + (
        np.abs(np.diff(darr, axis=0)) * wy[:-1, :]
    ).sum()
    # dT/dd: the pixel loses its own forward differences, gains its
    # predecessors'
    gterm = -(sx * wx) - (sy * wy)
    gterm[:, 1:] += (sx * wx)[:, :-1]
    gterm[1:, :] += (sy * wy)[:-1, :]
    return gterm / (n * mu) - t_raw / (n * n * mu * mu)

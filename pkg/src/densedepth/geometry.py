"""Rectified-stereo geometry: disparity, horizontal warping, and SSIM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .tensor import (
    Tensor,
    _make,
    add,
    box_mean3x3,
    div,
    mul,
    pad_edge1,
    reciprocal,
    sub,
)

# SSIM stabilizers for images normalized to [0, 1]
SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2


@dataclass(frozen=True)
class StereoRig:
    """Pinhole pair: focal length in pixels, baseline in meters."""

    focal_px: float
    baseline_m: float

    def __post_init__(self):
        if self.focal_px <= 0 or self.baseline_m <= 0:
            raise ValueError(f"StereoRig: focal and baseline must be positive, got {self.focal_px}, {self.baseline_m}")


@dataclass
class DisparityMap:
    """Per-pixel horizontal displacement; the in-bounds mask is filled by the warp."""

    values: Tensor
    oob_mask: Optional[np.ndarray] = None


def disparity_from_depth(d: Tensor, rig: StereoRig) -> DisparityMap:
    """s = F*B / d, differentiable with ds/dd = -F*B / d^2."""
    if np.any(d.data <= 0):
        raise ValueError("disparity_from_depth: depth must be strictly positive everywhere")
    values = mul(reciprocal(d), rig.focal_px * rig.baseline_m)
    return DisparityMap(values=values)


def warp_horizontal(image: Tensor, s: Union[DisparityMap, Tensor], sign: int = 1):
    """Sample ``image`` at x + sign*s(x) along each row with bilinear weights.

    Returns (warped, mask) where mask is 1 on pixels whose source coordinate
    stays inside [0, W-1]; warped is zeroed off-mask. Differentiable in both
    the image and the disparity.
    """
    if sign not in (1, -1):
        raise ValueError(f"warp_horizontal: sign must be +1 or -1, got {sign}")
    disp = s.values if isinstance(s, DisparityMap) else s
    b, c, h, w = image.shape
    if disp.shape != (b, 1, h, w):
        raise ValueError(f"warp_horizontal: disparity shape {disp.shape} does not match image {image.shape}")

    base_u = np.arange(w, dtype=image.dtype)[None, None, None, :]
    coords = base_u + sign * disp.data  # (b, 1, h, w)
    mask = ((coords >= 0.0) & (coords <= w - 1.0)).astype(image.dtype)

    u0 = np.clip(np.floor(coords), 0, w - 2).astype(np.int64)
    frac = coords - u0
    idx0 = np.broadcast_to(u0, (b, c, h, w))
    idx1 = idx0 + 1
    left = np.take_along_axis(image.data, idx0, axis=3)
    right = np.take_along_axis(image.data, idx1, axis=3)
    sampled = (1.0 - frac) * left + frac * right
    out = sampled * mask

    def bwd(g):
        gm = g * mask
        if disp.requires_grad:
            # d(out)/d(coords) is (right - left); channels share one coordinate
            per_px = (g * (right - left)).sum(axis=1, keepdims=True) * mask * sign
            disp._accumulate(per_px)
        if image.requires_grad:
            gi = np.zeros_like(image.data)
            np.add.at(gi.reshape(b * c * h, w),
                      (np.arange(b * c * h)[:, None], idx0.reshape(b * c * h, w)),
                      (gm * (1.0 - frac)).reshape(b * c * h, w))
            np.add.at(gi.reshape(b * c * h, w),
                      (np.arange(b * c * h)[:, None], idx1.reshape(b * c * h, w)),
                      (gm * frac).reshape(b * c * h, w))
            image._accumulate(gi)

    warped = _make(out, (image, disp), bwd)
    if isinstance(s, DisparityMap):
        s.oob_mask = mask
    return warped, mask


def _patch_mean(x: Tensor) -> Tensor:
    # replicate-padded 3x3 average keeps constant images constant at borders
    return box_mean3x3(pad_edge1(x))


def ssim_map(a: Tensor, b: Tensor) -> Tensor:
    """Per-pixel SSIM over 3x3 neighborhoods, per channel, in [-1, 1]."""
    if a.shape != b.shape:
        raise ValueError(f"ssim_map: shape mismatch {a.shape} vs {b.shape}")
    if a.shape[2] < 3 or a.shape[3] < 3:
        raise ValueError(f"ssim_map: images must be at least 3x3, got {a.shape[2]}x{a.shape[3]}")

    mu_a = _patch_mean(a)
    mu_b = _patch_mean(b)
    mu_aa = mul(mu_a, mu_a)
    mu_bb = mul(mu_b, mu_b)
    mu_ab = mul(mu_a, mu_b)
    var_a = sub(_patch_mean(mul(a, a)), mu_aa)
    var_b = sub(_patch_mean(mul(b, b)), mu_bb)
    cov = sub(_patch_mean(mul(a, b)), mu_ab)

    num = mul(add(mul(mu_ab, 2.0), SSIM_C1), add(mul(cov, 2.0), SSIM_C2))
    den = mul(add(add(mu_aa, mu_bb), SSIM_C1), add(add(var_a, var_b), SSIM_C2))
    return div(num, den)


def erode_mask3x3(mask: np.ndarray) -> np.ndarray:
    """Keep a pixel only if its full 3x3 neighborhood is set (edge-replicated)."""
    padded = np.pad(mask, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    out = np.ones_like(mask)
    h, w = mask.shape[2], mask.shape[3]
    for i in range(3):
        for j in range(3):
            out = np.minimum(out, padded[:, :, i : i + h, j : j + w])
    return out

"""Label-preserving augmentation for grayscale digits.

No flips anywhere (they destroy digit labels). The weak view is an exact
integer-pixel translation; the strong view adds rotation, sub-pixel shifts,
random erasing and contrast/brightness jitter on top.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class AugmentationPolicy:
    weak_shift_px: int = 2
    strong_shift_px: float = 4.0
    strong_rotation_deg: float = 25.0
    erase_min_px: int = 4
    erase_max_px: int = 10
    brightness_range: tuple[float, float] = (0.6, 1.4)
    contrast_range: tuple[float, float] = (0.6, 1.4)
    seed: int = 0


def weak_augment(x: torch.Tensor, g: torch.Generator,
                 policy: AugmentationPolicy = AugmentationPolicy()) -> torch.Tensor:
    """Per-image integer shifts up to weak_shift_px, zero-filled borders."""
    b, _, h, w = x.shape
    s = policy.weak_shift_px
    dy = torch.randint(-s, s + 1, (b,), generator=g)
    dx = torch.randint(-s, s + 1, (b,), generator=g)
    padded = F.pad(x, (s, s, s, s))
    out = torch.empty_like(x)
    for sy in range(-s, s + 1):
        for sx in range(-s, s + 1):
            sel = (dy == sy) & (dx == sx)
            if sel.any():
                out[sel] = padded[sel, :, s - sy:s - sy + h, s - sx:s - sx + w]
    return out


def strong_augment(x: torch.Tensor, g: torch.Generator,
                   policy: AugmentationPolicy = AugmentationPolicy()) -> torch.Tensor:
    b, _, h, w = x.shape
    theta_deg = (torch.rand(b, generator=g) * 2 - 1) * policy.strong_rotation_deg
    theta = torch.deg2rad(theta_deg)
    tx = (torch.rand(b, generator=g) * 2 - 1) * policy.strong_shift_px * 2.0 / (w - 1)
    ty = (torch.rand(b, generator=g) * 2 - 1) * policy.strong_shift_px * 2.0 / (h - 1)
    cos, sin = torch.cos(theta), torch.sin(theta)
    mats = torch.zeros(b, 2, 3)
    mats[:, 0, 0], mats[:, 0, 1], mats[:, 0, 2] = cos, -sin, tx
    mats[:, 1, 0], mats[:, 1, 1], mats[:, 1, 2] = sin, cos, ty
    grid = F.affine_grid(mats, list(x.shape), align_corners=False)
    out = F.grid_sample(x, grid, align_corners=False, padding_mode="zeros")

    bf_lo, bf_hi = policy.brightness_range
    cf_lo, cf_hi = policy.contrast_range
    bf = (torch.rand(b, 1, 1, 1, generator=g) * (bf_hi - bf_lo) + bf_lo)
    cf = (torch.rand(b, 1, 1, 1, generator=g) * (cf_hi - cf_lo) + cf_lo)
    mean = out.mean(dim=(1, 2, 3), keepdim=True)
    out = ((out - mean) * cf + mean) * bf

    # Random erasing: one zeroed rectangle per image.
    eh = torch.randint(policy.erase_min_px, policy.erase_max_px + 1, (b,), generator=g)
    ew = torch.randint(policy.erase_min_px, policy.erase_max_px + 1, (b,), generator=g)
    y0 = (torch.rand(b, generator=g) * (h - eh).clamp(min=1)).long()
    x0 = (torch.rand(b, generator=g) * (w - ew).clamp(min=1)).long()
    rows = torch.arange(h).view(1, h, 1)
    cols = torch.arange(w).view(1, 1, w)
    rect = ((rows >= y0.view(b, 1, 1)) & (rows < (y0 + eh).view(b, 1, 1))
            & (cols >= x0.view(b, 1, 1)) & (cols < (x0 + ew).view(b, 1, 1)))
    out = out.masked_fill(rect.unsqueeze(1), 0.0)
    return out.clamp(0.0, 1.0)

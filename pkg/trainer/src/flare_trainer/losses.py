"""Torch training objective, matching the toolkit's loss semantics.

The prediction is replaced by ground truth inside the saturation mask before
the image loss, and masked out of the inferred flare before the flare loss,
so gradients at masked pixels are exactly zero. Each loss is a mean-absolute
pixel term plus a feature-space term through a pluggable extractor.
"""

from __future__ import annotations

import torch
import torch.nn as nn

LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)
SATURATION_THRESHOLD = 0.99


class IdentityFeatures(nn.Module):
    layers = ("identity",)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        return [x]


def masked_prediction(pred, truth, mask):
    return truth * mask + pred * (1.0 - mask)


def flare_residual(inp, pred, mask):
    return inp - pred * (1.0 - mask)


def loss_terms(pred, inp, truth, flare, mask, extractor=None, weights=None) -> dict:
    """All loss components as 0-dim tensors; 'total' drives the optimizer.

    ``mask`` is (B, 1, H, W) with values in {0, 1}.
    """
    extractor = extractor if extractor is not None else IdentityFeatures()
    merged = masked_prediction(pred, truth, mask)
    fhat = flare_residual(inp, pred, mask)

    image_l1 = (merged - truth).abs().mean()
    flare_l1 = (fhat - flare).abs().mean()

    lam = weights or [1.0] * len(extractor.layers)
    image_perc = pred.new_zeros(())
    flare_perc = pred.new_zeros(())
    for w, fm, ft in zip(lam, extractor(merged), extractor(truth)):
        image_perc = image_perc + w * (fm - ft).abs().mean()
    for w, fh, ff in zip(lam, extractor(fhat), extractor(flare)):
        flare_perc = flare_perc + w * (fh - ff).abs().mean()

    total = image_l1 + image_perc + flare_l1 + flare_perc
    return {
        "total": total,
        "image_l1": image_l1,
        "image_perceptual": image_perc,
        "flare_l1": flare_l1,
        "flare_perceptual": flare_perc,
    }


def luminance(img: torch.Tensor) -> torch.Tensor:
    """(B, 3, H, W) linear RGB -> (B, 1, H, W) luminance."""
    w = img.new_tensor(LUMA_WEIGHTS).view(1, 3, 1, 1)
    return (img * w).sum(dim=1, keepdim=True)


def _disk_kernel(diameter: int, device) -> torch.Tensor:
    r = diameter / 2.0
    ri = int(r)
    ax = torch.arange(-ri, ri + 1, dtype=torch.float32, device=device)
    return ((ax[None, :] ** 2 + ax[:, None] ** 2) <= r * r).float()[None, None]


def saturation_mask(img: torch.Tensor, threshold: float = SATURATION_THRESHOLD) -> torch.Tensor:
    """Binary (B, 1, H, W) mask of saturated pixels, cleaned by opening with
    a disk element 0.5% of the smaller image dimension wide."""
    mask = (luminance(img) > threshold).float()
    diameter = max(1, round(0.005 * min(img.shape[-2:])))
    kernel = _disk_kernel(diameter, img.device)
    if kernel.numel() == 1:
        return mask
    pad = kernel.shape[-1] // 2
    hits = torch.nn.functional.conv2d(mask, kernel, padding=pad)
    eroded = (hits >= kernel.sum() - 0.5).float()
    dilated = torch.nn.functional.conv2d(eroded, kernel, padding=pad)
    return (dilated > 0.5).float()

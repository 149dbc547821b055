"""Training objective: masked L1 data terms plus feature-space penalties.

The total loss is an image loss plus a flare loss. The image loss compares
the masked prediction against the clean scene; the flare loss compares the
inferred flare residual against the true flare layer, discouraging the model
from darkening bright scene content that is not flare. Both combine a pixel
L1 term with a perceptual term evaluated through a pluggable feature
extractor; a pretrained-network extractor can be supplied by a trainer, while
the identity and Gaussian-pyramid extractors here exercise the full plumbing
without any learned weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from .maskblend import flare_residual, masked_prediction


class IdentityExtractor:
    """Single layer: the image itself."""

    layers = ("identity",)

    def extract(self, img: np.ndarray) -> list[np.ndarray]:
        return [np.asarray(img, dtype=np.float32)]


class GaussianPyramidExtractor:
    """Gaussian pyramid features: blur-and-decimate, ``levels`` octaves."""

    def __init__(self, levels: int = 5, sigma: float = 1.0):
        if levels < 1:
            raise ValueError(f"levels must be >= 1, got {levels}")
        self.levels = levels
        self.sigma = sigma
        self.layers = tuple(f"pyr{i}" for i in range(levels))

    def extract(self, img: np.ndarray) -> list[np.ndarray]:
        current = np.asarray(img, dtype=np.float32)
        feats = [current]
        for _ in range(self.levels - 1):
            sig = (self.sigma, self.sigma, 0.0)[: current.ndim]
            blurred = scipy.ndimage.gaussian_filter(current, sigma=sig, mode="reflect")
            current = blurred[::2, ::2]
            feats.append(current)
        return feats


def l1(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute difference over all elements (resolution-independent)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.astype(np.float64) - b.astype(np.float64))))


def perceptual(a, b, extractor, weights=None) -> float:
    """Weighted sum of per-layer L1 feature distances."""
    total, _ = _perceptual_terms(a, b, extractor, weights)
    return total


def _perceptual_terms(a, b, extractor, weights=None):
    fa = extractor.extract(a)
    fb = extractor.extract(b)
    if weights is None:
        weights = [1.0] * len(extractor.layers)
    if len(weights) != len(extractor.layers):
        raise ValueError(
            f"{len(weights)} weights for {len(extractor.layers)} layers"
        )
    per_layer = {}
    total = 0.0
    for name, w, xa, xb in zip(extractor.layers, weights, fa, fb):
        term = w * l1(xa, xb)
        per_layer[name] = term
        total += term
    return total, per_layer


@dataclass
class LossReport:
    total: float
    image_l1: float
    image_perceptual: float
    flare_l1: float
    flare_perceptual: float
    per_layer: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "total": self.total,
                "image_l1": self.image_l1,
                "image_perceptual": self.image_perceptual,
                "flare_l1": self.flare_l1,
                "flare_perceptual": self.flare_perceptual,
                "per_layer": self.per_layer,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "LossReport":
        return cls(**json.loads(text))


def total_loss(
    pred: np.ndarray,
    input_img: np.ndarray,
    truth: np.ndarray,
    true_flare: np.ndarray,
    mask: np.ndarray,
    extractor=None,
    weights=None,
) -> LossReport:
    """Image loss plus flare loss on a prediction.

    The masked prediction substitutes ground truth inside the saturation mask
    (so masked pixels contribute nothing and gradients there vanish); the
    flare residual masks the prediction the same way. Each loss is
    l1 + perceptual against its target.
    """
    extractor = extractor or IdentityExtractor()
    for name, arr in (("input", input_img), ("truth", truth), ("flare", true_flare)):
        if np.asarray(arr).shape != np.asarray(pred).shape:
            raise ValueError(f"{name} shape {np.asarray(arr).shape} != pred {np.asarray(pred).shape}")

    pred_masked = masked_prediction(pred, truth, mask)
    fhat = flare_residual(input_img, pred, mask)

    image_l1 = l1(pred_masked, truth)
    image_perc, img_layers = _perceptual_terms(pred_masked, truth, extractor, weights)
    flare_l1 = l1(fhat, true_flare)
    flare_perc, flare_layers = _perceptual_terms(fhat, true_flare, extractor, weights)

    per_layer = {f"image/{k}": v for k, v in img_layers.items()}
    per_layer.update({f"flare/{k}": v for k, v in flare_layers.items()})
    return LossReport(
        total=image_l1 + image_perc + flare_l1 + flare_perc,
        image_l1=image_l1,
        image_perceptual=image_perc,
        flare_l1=flare_l1,
        flare_perceptual=flare_perc,
        per_layer=per_layer,
    )

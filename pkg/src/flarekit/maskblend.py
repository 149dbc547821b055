"""Saturation masks, feathering, masked prediction, and light-source blending.

The binary saturation mask marks near-saturated pixels assumed to belong to
the illuminant; it gates the losses so the network is never asked to inpaint
the light source. The feathered mask blends the input illuminant back into a
prediction with a smooth edge.
"""

from __future__ import annotations

import numpy as np
import scipy.ndimage
import scipy.signal

from .image import luminance

SATURATION_THRESHOLD = 0.99
OPENING_FRACTION = 0.005  # kernel diameter as a fraction of min(w, h)
FEATHER_GAIN = 3.0


def disk_element(diameter: float) -> np.ndarray:
    """Boolean disk structuring element: offsets with |d| <= diameter/2."""
    r = diameter / 2.0
    ri = int(np.floor(r))
    ax = np.arange(-ri, ri + 1, dtype=np.float64)
    return (ax[None, :] ** 2 + ax[:, None] ** 2) <= r * r


def opening_diameter(width: int, height: int) -> int:
    return max(1, int(round(OPENING_FRACTION * min(width, height))))


def saturation_mask(
    img: np.ndarray, threshold: float = SATURATION_THRESHOLD, use_max_channel: bool = False
) -> np.ndarray:
    """Binary mask of saturated pixels, cleaned by morphological opening.

    Thresholds the luminance (or the max channel when ``use_max_channel``),
    then opens with a disk element whose diameter is 0.5% of the smaller image
    dimension, dropping small saturated specks that are scene or flare rather
    than the light source.
    """
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 3:
        level = img.max(axis=2) if use_max_channel else luminance(img)
    else:
        level = img[:, :, 0] if img.ndim == 3 else img
    raw = level > threshold
    h, w = raw.shape
    elem = disk_element(opening_diameter(w, h))
    if elem.shape == (1, 1):
        return raw
    return scipy.ndimage.binary_opening(raw, structure=elem)


def feather_mask(mask: np.ndarray) -> np.ndarray:
    """Feathered float mask for light-source blending.

    Connected components (8-connectivity) of the opened mask pick the largest
    saturated region; its equivalent diameter D = sqrt(4*area/pi) sizes a
    normalized disk kernel that blurs the input mask. The result is scaled by
    3 and clipped, guaranteeing 1.0 across the illuminant with a feathered
    falloff outside. An empty mask feathers to all zeros.

    Opening is idempotent, so passing an already-opened saturation mask is
    fine; a raw threshold mask is opened here before component analysis.
    """
    mask = np.asarray(mask).astype(bool)
    h, w = mask.shape
    elem = disk_element(opening_diameter(w, h))
    opened = scipy.ndimage.binary_opening(mask, structure=elem) if elem.shape != (1, 1) else mask
    labels, n = scipy.ndimage.label(opened, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros((h, w), dtype=np.float32)
    areas = scipy.ndimage.sum_labels(np.ones_like(opened, dtype=np.float64), labels, np.arange(1, n + 1))
    d_eq = float(np.sqrt(4.0 * areas.max() / np.pi))
    kernel = disk_element(d_eq).astype(np.float64)
    kernel /= kernel.sum()
    blurred = scipy.signal.fftconvolve(mask.astype(np.float64), kernel, mode="same")
    return np.clip(FEATHER_GAIN * blurred, 0.0, 1.0).astype(np.float32)


def _mask_plane(mask: np.ndarray, like: np.ndarray) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float32)
    if m.shape != like.shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match image {like.shape}")
    if like.ndim == 3:
        m = m[:, :, None]
    return m


def masked_prediction(pred: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace the masked region of a prediction with ground truth:
    truth*M + pred*(1-M), with M broadcast across channels."""
    pred = np.asarray(pred, dtype=np.float32)
    truth = np.asarray(truth, dtype=np.float32)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, truth {truth.shape}")
    m = _mask_plane(mask, pred)
    return truth * m + pred * (1.0 - m)


def flare_residual(input_img: np.ndarray, pred: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Inferred flare layer: input - pred*(1-M). Not clipped; values may
    leave [0, 1]."""
    input_img = np.asarray(input_img, dtype=np.float32)
    pred = np.asarray(pred, dtype=np.float32)
    if input_img.shape != pred.shape:
        raise ValueError(f"shape mismatch: input {input_img.shape}, pred {pred.shape}")
    m = _mask_plane(mask, pred)
    return input_img - pred * (1.0 - m)


def blend_light_source(input_img: np.ndarray, pred: np.ndarray, feathered: np.ndarray) -> np.ndarray:
    """Convex blend input*Mf + pred*(1-Mf) using the feathered mask.

    Computed as pred + Mf*(input - pred) with an exact branch at Mf >= 1, so
    the blend is a bit-exact no-op when pred equals input and returns the
    input exactly across the illuminant core.
    """
    input_img = np.asarray(input_img, dtype=np.float32)
    pred = np.asarray(pred, dtype=np.float32)
    if input_img.shape != pred.shape:
        raise ValueError(f"shape mismatch: input {input_img.shape}, pred {pred.shape}")
    m = _mask_plane(feathered, pred)
    out = pred + m * (input_img - pred)
    return np.where(m >= 1.0, input_img, out)

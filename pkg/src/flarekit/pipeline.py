"""End-to-end flare removal: predictors, the high-resolution path, metrics.

A predictor maps a flare-corrupted image to a flare-free estimate at a fixed
working resolution. High-resolution inputs are handled by predicting a
low-resolution flare layer, upsampling it, and subtracting: flare is
predominantly low-frequency, so the subtraction loses little. Quality is
scored with PSNR and SSIM after the saturated-region substitution used during
training.
"""

from __future__ import annotations

import math
import shlex
import subprocess
import threading

import numpy as np

from .image import bilinear_resample, luminance
from .maskblend import blend_light_source, feather_mask, masked_prediction, saturation_mask
from .protocol import Frame, KIND_ERROR, KIND_REQUEST, KIND_RESPONSE, read_frame, write_frame

PSNR_CAP_DB = 99.0
PSNR_MSE_FLOOR = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class PredictionError(RuntimeError):
    """Predictor violated the protocol or its output contract."""


class IdentityPredictor:
    """Returns the input unchanged (a no-op remover)."""

    def predict(self, img: np.ndarray) -> np.ndarray:
        return np.asarray(img, dtype=np.float32).copy()


class OraclePredictor:
    """Test-only predictor that already knows the flare-free ground truth."""

    def __init__(self, truth: np.ndarray):
        self.truth = np.asarray(truth, dtype=np.float32)

    def predict(self, img: np.ndarray) -> np.ndarray:
        if img.shape != self.truth.shape:
            raise PredictionError(
                f"oracle holds truth of shape {self.truth.shape}, got {img.shape}"
            )
        return self.truth.copy()


class SubprocessPredictor:
    """Runs an external predictor over the framed stdin/stdout protocol.

    One request is in flight at a time; callers wanting parallel inference
    should pool several processes.
    """

    def __init__(self, command: str | list[str], timeout: float = 120.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None

    def _ensure_started(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        return self._proc

    def _read_reply(self, proc) -> Frame | None:
        result: list = []

        def reader():
            try:
                result.append(read_frame(proc.stdout))
            except BaseException as exc:
                result.append(exc)

        t = threading.Thread(target=reader, daemon=True)
        t.start()
        t.join(self.timeout)
        if t.is_alive():
            proc.kill()
            self._proc = None
            raise PredictionError(f"predictor timed out after {self.timeout} s")
        if isinstance(result[0], BaseException):
            raise result[0]
        return result[0]

    def predict(self, img: np.ndarray) -> np.ndarray:
        proc = self._ensure_started()
        try:
            write_frame(proc.stdin, Frame(kind=KIND_REQUEST, image=np.asarray(img, np.float32)))
            reply = self._read_reply(proc)
        except (BrokenPipeError, ValueError) as exc:
            raise PredictionError(f"predictor process failed: {exc}") from exc
        if reply is None:
            raise PredictionError("predictor closed its output stream")
        if reply.kind == KIND_ERROR:
            raise PredictionError(f"predictor error: {reply.message}")
        if reply.kind != KIND_RESPONSE:
            raise PredictionError(f"unexpected frame kind {reply.kind}")
        out = reply.image
        if img.ndim == 2 and out.shape[2] == 1:
            out = out[:, :, 0]
        return out

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def predict(predictor, img: np.ndarray) -> np.ndarray:
    """Run a predictor and enforce the output contract (shape, finiteness)."""
    img = np.asarray(img, dtype=np.float32)
    out = predictor.predict(img)
    out = np.asarray(out, dtype=np.float32)
    if out.shape != img.shape:
        raise PredictionError(f"predictor returned shape {out.shape} for input {img.shape}")
    if not np.isfinite(out).all():
        raise PredictionError("predictor returned non-finite samples")
    return out


def remove_flare_highres(input_img: np.ndarray, predictor, lowres: int = 512) -> np.ndarray:
    """Remove flare from a high-resolution image with a low-res predictor.

    Downsample the input, predict the flare-free image, form the low-res
    flare as the difference, upsample the flare, and subtract it from the
    original input. The saturated light source is then blended back at full
    resolution through the feathered mask.
    """
    input_img = np.asarray(input_img, dtype=np.float32)
    h, w = input_img.shape[:2]
    if h < lowres or w < lowres:
        raise ValueError(f"input must be at least {lowres} px on both axes, got {w}x{h}")
    low = bilinear_resample(input_img, lowres, lowres)
    pred_low = predict(predictor, low)
    flare_low = low - pred_low
    flare_hi = bilinear_resample(flare_low, w, h)
    subtracted = np.clip(input_img - flare_hi, 0.0, 1.0)
    feathered = feather_mask(saturation_mask(input_img))
    return blend_light_source(input_img, subtracted, feathered)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images, capped at 99."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse < PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(ax**2) / (2.0 * sigma**2))
    k /= k.sum()
    return np.outer(k, k)


def _conv_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    from numpy.lib.stride_tricks import sliding_window_view

    windows = sliding_window_view(img, kernel.shape)
    return np.einsum("ijkl,kl->ij", windows, kernel)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity on luminance.

    Gaussian-weighted 11x11 window with sigma 1.5, K1=0.01, K2=0.03, unit
    dynamic range; local statistics come from valid-mode convolution, so the
    map shrinks by the window radius on each side.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    ya = luminance(a).astype(np.float64) if a.ndim == 3 and a.shape[2] == 3 else np.squeeze(a).astype(np.float64)
    yb = luminance(b).astype(np.float64) if b.ndim == 3 and b.shape[2] == 3 else np.squeeze(b).astype(np.float64)
    if ya.shape[0] < SSIM_WINDOW or ya.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image {ya.shape} smaller than the {SSIM_WINDOW}px SSIM window")

    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_a = _conv_valid(ya, kernel)
    mu_b = _conv_valid(yb, kernel)
    var_a = _conv_valid(ya * ya, kernel) - mu_a**2
    var_b = _conv_valid(yb * yb, kernel) - mu_b**2
    cov = _conv_valid(ya * yb, kernel) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def eval_masked(pred: np.ndarray, truth: np.ndarray, input_img: np.ndarray, threshold: float = 0.99) -> dict:
    """Score a prediction with the saturated region replaced by ground truth,
    the same substitution the training loss uses."""
    mask = saturation_mask(input_img, threshold)
    merged = masked_prediction(pred, truth, mask)
    return {
        "psnr": psnr(merged, truth),
        "ssim": ssim(merged, truth),
        "mask_fraction": float(np.mean(mask)),
    }

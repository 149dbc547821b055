"""Wave-optics PSF rendering for scattering flare.

The pupil function combines an aperture transmission grid with a defocus
phase; its 2D DFT modulus squared is the monochromatic PSF. 73 wavelengths
(380..740 nm, 5 nm apart) are rendered and reduced to RGB through a sampled
3x73 spectral response, the light-source position becomes a cyclic PSF
translation, and a single-coefficient radial distortion finishes the flare.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .aperture import (
    ApertureConfig,
    DESK_APERTURE,
    grid_disk_radius,
    rasterize_aperture,
    sample_aperture_spec,
)
from .image import luminance

LAMBDA_MIN_NM = 380.0
LAMBDA_MAX_NM = 740.0
LAMBDA_STEP_NM = 5.0
N_LAMBDAS = 73
REFERENCE_LAMBDA_NM = 550.0

# Defocus sigma: 5 / k at the 550 nm reference, i.e. 5 * 550 / (2 pi) nm.
WM_SIGMA_NM = 5.0 * REFERENCE_LAMBDA_NM / (2.0 * math.pi)

# Full-scale dataset sizes: a bank of 125 apertures feeding 2000 flare images.
APERTURE_BANK_SIZE = 125
FLARE_IMAGE_COUNT = 2000


def default_wavelengths() -> np.ndarray:
    return np.arange(LAMBDA_MIN_NM, LAMBDA_MAX_NM + LAMBDA_STEP_NM / 2, LAMBDA_STEP_NM)


@dataclass
class SpectralConfig:
    lambdas: np.ndarray = field(default_factory=default_wavelengths)
    reference_lambda: float = REFERENCE_LAMBDA_NM

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.float64)
        if lam.shape != (N_LAMBDAS,):
            raise ValueError(f"expected {N_LAMBDAS} wavelengths, got shape {lam.shape}")
        if not (np.diff(lam) > 0).all():
            raise ValueError("wavelengths must be strictly increasing")
        if lam[0] != LAMBDA_MIN_NM or lam[-1] != LAMBDA_MAX_NM:
            raise ValueError(
                f"wavelengths must span [{LAMBDA_MIN_NM}, {LAMBDA_MAX_NM}] nm"
            )
        self.lambdas = lam


@dataclass
class SRF:
    """Sensor spectral response: rows R, G, B over the 73 wavelength samples."""

    matrix: np.ndarray
    mus: tuple[float, float, float]
    sigmas: tuple[float, float, float]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, N_LAMBDAS):
            raise ValueError(f"SRF matrix must be 3x{N_LAMBDAS}, got {m.shape}")
        if (m < 0).any():
            raise ValueError("SRF entries must be nonnegative")
        self.matrix = m


@dataclass
class LightSource:
    """Point source described by its sensor-pixel center and defocus in nm."""

    x: float = 0.0
    y: float = 0.0
    wm_nm: float = 0.0


SRF_MU_RANGES = ((620.0, 640.0), (540.0, 560.0), (460.0, 480.0))
SRF_SIGMA_RANGE = (50.0, 60.0)


def sample_srf(seed: int, cfg: SpectralConfig | None = None) -> SRF:
    """Sample Gaussian channel responses: means uniform in the R/G/B passband
    windows (620-640, 540-560, 460-480 nm), widths uniform in 50-60 nm."""
    cfg = cfg or SpectralConfig()
    rng = np.random.default_rng(seed)
    mus = tuple(float(rng.uniform(lo, hi)) for lo, hi in SRF_MU_RANGES)
    sigmas = tuple(float(rng.uniform(*SRF_SIGMA_RANGE)) for _ in range(3))
    lam = cfg.lambdas[None, :]
    mu = np.array(mus)[:, None]
    sg = np.array(sigmas)[:, None]
    matrix = np.exp(-((lam - mu) ** 2) / (2.0 * sg**2)) / (sg * math.sqrt(2.0 * math.pi))
    return SRF(matrix=matrix, mus=mus, sigmas=sigmas)


def _radius2_grid(grid_size: int) -> np.ndarray:
    """Squared relative displacement r(u,v)^2 on the pupil grid (r=1 at the
    disk edge), using the same cell-center coordinates as the rasterizer."""
    c = np.arange(grid_size, dtype=np.float64) + 0.5 - grid_size / 2.0
    R = grid_disk_radius(grid_size)
    return (c[None, :] ** 2 + c[:, None] ** 2) / (R * R)


def defocus_phase(grid_size: int, wm_nm: float, wavelength_nm: float) -> np.ndarray:
    """Defocus phase plane in radians: (2 pi / lambda) * r^2 * Wm."""
    if wavelength_nm <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength_nm}")
    if grid_size < 64:
        raise ValueError(f"grid_size must be >= 64, got {grid_size}")
    k = 2.0 * math.pi / wavelength_nm
    return _radius2_grid(grid_size) * (k * wm_nm)


def monochromatic_psf(mask: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """|DFT{A * exp(i phase)}|^2, fftshifted so DC sits at the grid center.

    Uses the unnormalized forward transform, so Parseval reads
    sum(PSF) == G^2 * sum(A^2).
    """
    mask = np.asarray(mask)
    phase = np.asarray(phase)
    if mask.shape != phase.shape:
        raise ValueError(f"mask {mask.shape} and phase {phase.shape} differ")
    pupil = mask.astype(np.complex128) * np.exp(1j * phase.astype(np.float64))
    field_ft = scipy.fft.fft2(pupil, workers=-1)
    psf = field_ft.real**2 + field_ft.imag**2
    return np.fft.fftshift(psf)


def translate_plane(plane: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Cyclic translation by (dx, dy) pixels; fractional parts blend
    bilinearly between the four neighboring integer rolls."""
    ix, iy = math.floor(dx), math.floor(dy)
    fx, fy = dx - ix, dy - iy
    base = np.roll(plane, (iy, ix), axis=(0, 1))
    if fx == 0.0 and fy == 0.0:
        return base
    right = np.roll(plane, (iy, ix + 1), axis=(0, 1))
    down = np.roll(plane, (iy + 1, ix), axis=(0, 1))
    diag = np.roll(plane, (iy + 1, ix + 1), axis=(0, 1))
    return (
        base * ((1 - fx) * (1 - fy))
        + right * (fx * (1 - fy))
        + down * ((1 - fx) * fy)
        + diag * (fx * fy)
    )


def _zoom_about_center(plane: np.ndarray, factor: float) -> np.ndarray:
    """Rescale a plane about its center pixel by ``factor`` (bilinear)."""
    g = plane.shape[0]
    c = g // 2
    coords = (np.arange(g, dtype=np.float64) - c) / factor + c
    lo = np.clip(np.floor(coords).astype(np.intp), 0, g - 1)
    hi = np.clip(lo + 1, 0, g - 1)
    f = coords - np.floor(coords)
    inside = (coords >= 0) & (coords <= g - 1)
    rows = plane[lo] * (1 - f)[:, None] + plane[hi] * f[:, None]
    rows *= inside[:, None]
    out = rows[:, lo] * (1 - f)[None, :] + rows[:, hi] * f[None, :]
    out *= inside[None, :]
    return out


def _center_crop(plane: np.ndarray, w: int, h: int) -> np.ndarray:
    g_h, g_w = plane.shape[:2]
    y0 = g_h // 2 - h // 2
    x0 = g_w // 2 - w // 2
    return plane[y0 : y0 + h, x0 : x0 + w]


def _translated_crop(plane: np.ndarray, dx: float, dy: float, w: int, h: int) -> np.ndarray:
    """Centered (h, w) crop of translate_plane(plane, dx, dy), gathered
    directly so the full grid is never copied."""
    g_h, g_w = plane.shape
    ix, iy = math.floor(dx), math.floor(dy)
    fx, fy = dx - ix, dy - iy
    y0 = g_h // 2 - h // 2
    x0 = g_w // 2 - w // 2
    rows0 = (np.arange(h) + (y0 - iy)) % g_h
    cols0 = (np.arange(w) + (x0 - ix)) % g_w
    p00 = plane[np.ix_(rows0, cols0)]
    if fx == 0.0 and fy == 0.0:
        return p00
    rows1 = (rows0 - 1) % g_h
    cols1 = (cols0 - 1) % g_w
    p01 = plane[np.ix_(rows0, cols1)]
    p10 = plane[np.ix_(rows1, cols0)]
    p11 = plane[np.ix_(rows1, cols1)]
    return (
        p00 * ((1 - fx) * (1 - fy))
        + p01 * (fx * (1 - fy))
        + p10 * ((1 - fx) * fy)
        + p11 * (fx * fy)
    )


def spectral_psf(
    mask: np.ndarray,
    source: LightSource,
    srf: SRF,
    cfg: SpectralConfig | None = None,
    sensor: tuple[int, int] = (800, 800),
    chromatic_scale: bool = False,
) -> np.ndarray:
    """Render the RGB PSF of ``source`` through aperture ``mask``.

    For each wavelength the defocus phase and monochromatic PSF are computed,
    the plane is translated by the source's (x, y) sensor offset (the linear
    phase term, applied post-FFT via the shift theorem), the centered sensor
    window is cropped, and the spectral stack is reduced to RGB by the SRF.
    """
    cfg = cfg or SpectralConfig()
    g = mask.shape[0]
    sw, sh = sensor
    if sw > g or sh > g:
        raise ValueError(f"sensor {sensor} larger than PSF grid {g}")
    r2 = _radius2_grid(g)
    out = np.zeros((sh, sw, 3), dtype=np.float64)
    for j, lam in enumerate(cfg.lambdas):
        k = 2.0 * math.pi / lam
        phase = r2 * (k * source.wm_nm)
        psf = monochromatic_psf(mask, phase)
        if chromatic_scale:
            psf = _zoom_about_center(psf, lam / cfg.reference_lambda)
        crop = _translated_crop(psf, source.x, source.y, sw, sh)
        for c in range(3):
            out[:, :, c] += srf.matrix[c, j] * crop
    return out.astype(np.float32)


def apply_distortion(img: np.ndarray, k1: float) -> np.ndarray:
    """Radial lens distortion: destination radius r samples source radius
    r * (1 + k1 * r^2). Radii are normalized so the nearest edge pixel
    centers sit at r = 1; out-of-bounds source positions produce 0."""
    if abs(k1) > 0.5:
        raise ValueError(f"|k1| must be <= 0.5, got {k1}")
    img = np.asarray(img)
    if k1 == 0.0:
        return img.copy()
    h, w = img.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    norm = (min(w, h) - 1) / 2.0
    xs = (np.arange(w, dtype=np.float64) - cx) / norm
    ys = (np.arange(h, dtype=np.float64) - cy) / norm
    nx = np.broadcast_to(xs[None, :], (h, w))
    ny = np.broadcast_to(ys[:, None], (h, w))
    r2 = nx * nx + ny * ny
    factor = 1.0 + k1 * r2
    sx = nx * factor * norm + cx
    sy = ny * factor * norm + cy

    valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    sxc = np.clip(sx, 0, w - 1)
    syc = np.clip(sy, 0, h - 1)
    x0 = np.floor(sxc).astype(np.intp)
    y0 = np.floor(syc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sxc - x0
    fy = syc - y0
    if img.ndim == 3:
        fx = fx[:, :, None]
        fy = fy[:, :, None]
        vmask = valid[:, :, None]
    else:
        vmask = valid
    out = (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )
    out = np.where(vmask, out, 0.0)
    return out.astype(np.float32 if img.dtype != np.float64 else np.float64)


@dataclass
class FlareRenderConfig:
    """Knobs for the scattering-flare renderer (desk-scale defaults)."""

    grid_size: int = 2048
    sensor: tuple[int, int] = (800, 800)
    aperture_cfg: ApertureConfig = field(default_factory=lambda: DESK_APERTURE)
    aperture_bank: list[np.ndarray] | None = None
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    light_xy_range: float = 500.0
    wm_sigma_nm: float = WM_SIGMA_NM
    k1_range: float = 0.3
    chromatic_scale: bool = False


def sample_light_source(rng: np.random.Generator, cfg: FlareRenderConfig) -> LightSource:
    x, y = rng.uniform(-cfg.light_xy_range, cfg.light_xy_range, size=2)
    wm = rng.normal(0.0, cfg.wm_sigma_nm)
    return LightSource(x=float(x), y=float(y), wm_nm=float(wm))


def render_scattering_flare(seed: int, cfg: FlareRenderConfig | None = None) -> np.ndarray:
    """Render one flare-only image: sample (or pick) an aperture, a light
    source, an SRF, and a distortion coefficient; normalize so the maximum
    luminance is 1. Deterministic per seed."""
    cfg = cfg or FlareRenderConfig()
    rng = np.random.default_rng(seed)
    if cfg.aperture_bank:
        idx = int(rng.integers(len(cfg.aperture_bank)))
        mask = cfg.aperture_bank[idx]
    else:
        ap_seed = int(rng.integers(2**63))
        spec = sample_aperture_spec(ap_seed, cfg.aperture_cfg)
        mask = rasterize_aperture(spec, cfg.grid_size)
    source = sample_light_source(rng, cfg)
    srf = sample_srf(int(rng.integers(2**63)), cfg.spectral)
    k1 = float(rng.uniform(-cfg.k1_range, cfg.k1_range))

    img = spectral_psf(
        mask, source, srf, cfg.spectral, cfg.sensor, chromatic_scale=cfg.chromatic_scale
    )
    img = apply_distortion(img, k1)
    peak = float(luminance(img).max())
    if peak > 0:
        img = (img / peak).astype(np.float32)
    return img

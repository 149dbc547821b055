"""Render the PSF of a dirty aperture, end to end.

Samples a random defective aperture (dust dots + scratch polylines on a
disk), rasterizes it, and renders both a monochromatic PSF and the full
73-wavelength RGB flare image for an off-axis, defocused light source.
Outputs land in demos/out/.
"""

import os

import numpy as np

from flarekit import (
    LightSource,
    monochromatic_psf,
    rasterize_aperture,
    sample_aperture_spec,
    sample_srf,
    spectral_psf,
    write_png,
)
from flarekit.aperture import ApertureConfig
from flarekit.waveoptics import WM_SIGMA_NM, defocus_phase

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

GRID = 512
cfg = ApertureConfig(disk_radius_px=750.0)

spec = sample_aperture_spec(seed=7, cfg=cfg)
print(f"aperture: {len(spec.dots)} dots, {len(spec.polylines)} polylines")
mask = rasterize_aperture(spec, GRID)
write_png(os.path.join(OUT, "aperture.png"), mask, gamma=1.0)

# In-focus single wavelength: almost all energy lands in a few pixels.
psf550 = monochromatic_psf(mask, defocus_phase(GRID, 0.0, 550.0))
preview = (psf550 / psf550.max()) ** 0.25  # compress the huge dynamic range
write_png(os.path.join(OUT, "psf_550nm_infocus.png"), preview.astype(np.float32), gamma=1.0)

# Defocused, off-axis, through a sampled RGB sensor response: a flare.
source = LightSource(x=40.0, y=-25.0, wm_nm=2.0 * WM_SIGMA_NM)
srf = sample_srf(seed=3)
flare = spectral_psf(mask, source, srf, sensor=(360, 360))
flare /= flare.max()
write_png(os.path.join(OUT, "flare_rgb.png"), (flare**0.35).astype(np.float32), gamma=1.0)
print(f"wrote aperture.png, psf_550nm_infocus.png, flare_rgb.png to {OUT}")

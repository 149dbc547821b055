"""Saturation masking, feathering, and light-source blending.

A bright illuminant saturates the sensor; the removal network is never
trained to reconstruct it, so after prediction the illuminant is blended
back from the input through a feathered mask.
"""

import os

import numpy as np

from flarekit import blend_light_source, feather_mask, saturation_mask, write_png

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

size = 256
rng = np.random.default_rng(1)
scene = (0.25 + 0.3 * rng.random((size, size, 3))).astype(np.float32)

# Input: scene + haze + a saturated light source blob.
yy, xx = np.mgrid[0:size, 0:size]
r2 = (xx - 96) ** 2 + (yy - 120) ** 2
inp = np.clip(scene + 0.25 * np.exp(-r2[..., None] / 4000.0), 0, 1).astype(np.float32)
inp[r2 <= 14**2] = 1.0

# Pretend prediction: flare gone, but the light source got erased too.
pred = scene.copy()

mask = saturation_mask(inp)
feathered = feather_mask(mask)
blended = blend_light_source(inp, pred, feathered)

print(f"saturated pixels: {int(mask.sum())}, feathered support: {int((feathered > 0).sum())}")
print(f"illuminant preserved: {bool((blended[r2 <= 14**2] == inp[r2 <= 14**2]).all())}")
for name, img in (("input", inp), ("prediction", pred), ("blended", blended)):
    write_png(os.path.join(OUT, f"blend_{name}.png"), img)
write_png(os.path.join(OUT, "blend_feathered_mask.png"), feathered, gamma=1.0)
print(f"wrote blend_*.png to {OUT}")

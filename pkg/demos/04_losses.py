"""The masked training objective on a synthetic sample.

Shows the image + flare loss split, the per-layer perceptual terms, and the
key property: pixels under the saturation mask contribute nothing, so
corrupting the prediction there leaves the loss untouched.
"""

import numpy as np

from flarekit import GaussianPyramidExtractor, total_loss

rng = np.random.default_rng(5)
size = 64
mask = rng.random((size, size)) < 0.2
truth = (rng.integers(0, 512, (size, size, 3)) / 1024.0).astype(np.float32)
truth[mask] = 0.0  # the illuminant region carries no scene detail
flare = (rng.integers(0, 512, (size, size, 3)) / 1024.0).astype(np.float32)
corrupted = truth + flare

pred = np.clip(truth + 0.05 * rng.standard_normal(truth.shape), 0, 1).astype(np.float32)
report = total_loss(pred, corrupted, truth, flare, mask, GaussianPyramidExtractor(levels=3))
print(report.to_json())

vandalized = pred.copy()
vandalized[mask] = 9.0
report2 = total_loss(vandalized, corrupted, truth, flare, mask, GaussianPyramidExtractor(levels=3))
print(f"loss delta after corrupting every masked pixel: {report2.total - report.total}")

perfect = total_loss(truth, corrupted, truth, flare, mask, GaussianPyramidExtractor(levels=3))
print(f"loss at the perfect prediction: {perfect.total}")

import json

import numpy as np
import pytest

from flarekit.losses import (
    GaussianPyramidExtractor,
    IdentityExtractor,
    LossReport,
    l1,
    perceptual,
    total_loss,
)


def make_case(seed=0, size=8, mask_p=0.3):
    """A consistent (pred, input, truth, flare, mask) tuple.

    Input is the non-clipping sum of truth and flare, and truth is dark
    inside the mask so the flare residual reproduces the flare exactly.
    Values are multiples of 1/1024, making float32 sums exact (10-bit data).
    """
    rng = np.random.default_rng(seed)
    mask = rng.random((size, size)) < mask_p
    truth = (rng.integers(0, 512, (size, size, 3)) / 1024.0).astype(np.float32)
    truth[mask] = 0.0
    flare = (rng.integers(0, 512, (size, size, 3)) / 1024.0).astype(np.float32)
    inp = truth + flare
    pred = rng.random((size, size, 3)).astype(np.float32)
    return pred, inp, truth, flare, mask


class TestL1:
    def test_zero_at_identity(self):
        a = np.random.default_rng(0).random((5, 5, 3))
        assert l1(a, a) == 0.0

    def test_constant_offset(self):
        a = np.zeros((6, 6, 3), np.float32)
        assert l1(a, a + 0.1) == pytest.approx(0.1, abs=1e-7)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        a = rng.random((7, 5, 3))
        b = rng.random((7, 5, 3))
        acc = 0.0
        n = 0
        for va, vb in zip(a.flat, b.flat):
            acc += abs(va - vb)
            n += 1
        assert l1(a, b) == pytest.approx(acc / n, abs=1e-7)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            l1(np.zeros((2, 2)), np.zeros((3, 2)))


class TestPerceptual:
    def test_zero_at_identity(self):
        a = np.random.default_rng(2).random((16, 16, 3)).astype(np.float32)
        for ext in (IdentityExtractor(), GaussianPyramidExtractor()):
            assert perceptual(a, a, ext) == 0.0

    def test_identity_extractor_reduces_to_l1(self):
        rng = np.random.default_rng(3)
        a = rng.random((12, 12, 3)).astype(np.float32)
        b = rng.random((12, 12, 3)).astype(np.float32)
        assert abs(perceptual(a, b, IdentityExtractor(), [1.0]) - l1(a, b)) < 1e-7

    def test_two_layer_pyramid_hand_computed(self):
        # Oracle: run the extractor manually and sum the weighted L1 terms.
        rng = np.random.default_rng(4)
        a = rng.random((16, 16, 3)).astype(np.float32)
        b = rng.random((16, 16, 3)).astype(np.float32)
        ext = GaussianPyramidExtractor(levels=2)
        fa = ext.extract(a)
        fb = ext.extract(b)
        want = 0.7 * l1(fa[0], fb[0]) + 1.3 * l1(fa[1], fb[1])
        assert perceptual(a, b, ext, [0.7, 1.3]) == pytest.approx(want, abs=1e-9)

    def test_weight_count_mismatch(self):
        with pytest.raises(ValueError):
            perceptual(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)), GaussianPyramidExtractor(3), [1.0])

    def test_pyramid_shapes(self):
        ext = GaussianPyramidExtractor(levels=5)
        feats = ext.extract(np.zeros((64, 64, 3), np.float32))
        assert [f.shape[0] for f in feats] == [64, 32, 16, 8, 4]
        assert len(ext.layers) == 5


class TestTotalLoss:
    def test_zero_at_perfect_prediction(self):
        _, inp, truth, flare, mask = make_case(5)
        report = total_loss(truth, inp, truth, flare, mask, GaussianPyramidExtractor())
        assert report.total == 0.0
        assert report.image_l1 == 0.0 and report.flare_l1 == 0.0

    def test_masked_pixels_do_not_contribute(self):
        pred, inp, truth, flare, mask = make_case(6, mask_p=0.4)
        assert mask.any()
        base = total_loss(pred, inp, truth, flare, mask)
        perturbed = pred.copy()
        perturbed[mask] += 123.0
        after = total_loss(perturbed, inp, truth, flare, mask)
        assert after.total == base.total  # exactly: masked pixels multiply by 0

    def test_masked_invariance_with_pyramid(self):
        pred, inp, truth, flare, mask = make_case(7, size=16, mask_p=0.3)
        ext = GaussianPyramidExtractor(3)
        base = total_loss(pred, inp, truth, flare, mask, ext)
        perturbed = pred.copy()
        perturbed[mask] = 7.5
        after = total_loss(perturbed, inp, truth, flare, mask, ext)
        assert after.total == base.total

    def test_hand_rolled_oracle_8x8(self):
        # Oracle: explicit per-pixel evaluation of the masked prediction, the
        # flare residual, and the two mean-absolute terms.
        pred, inp, truth, flare, mask = make_case(8)
        report = total_loss(pred, inp, truth, flare, mask, IdentityExtractor())
        ihat = np.where(mask[:, :, None], truth, pred)
        fhat = inp - pred * (1.0 - mask[:, :, None].astype(np.float32))
        want_image = float(np.mean(np.abs(ihat - truth)))
        want_flare = float(np.mean(np.abs(fhat - flare)))
        assert report.image_l1 == pytest.approx(want_image, abs=1e-6)
        assert report.flare_l1 == pytest.approx(want_flare, abs=1e-6)
        assert report.image_perceptual == pytest.approx(want_image, abs=1e-6)
        assert report.total == pytest.approx(2 * want_image + 2 * want_flare, abs=1e-6)

    def test_components_sum_to_total(self):
        pred, inp, truth, flare, mask = make_case(9)
        r = total_loss(pred, inp, truth, flare, mask, GaussianPyramidExtractor(4))
        parts = r.image_l1 + r.image_perceptual + r.flare_l1 + r.flare_perceptual
        assert r.total == pytest.approx(parts, abs=1e-6)
        assert all(v >= 0 for v in (r.image_l1, r.image_perceptual, r.flare_l1, r.flare_perceptual))

    def test_not_symmetric(self):
        pred, inp, truth, flare, mask = make_case(10)
        a = total_loss(pred, inp, truth, flare, mask)
        b = total_loss(truth, inp, pred, flare, mask)
        assert a.total != b.total

    def test_json_round_trip(self):
        pred, inp, truth, flare, mask = make_case(11)
        r = total_loss(pred, inp, truth, flare, mask, GaussianPyramidExtractor(2))
        parsed = LossReport.from_json(r.to_json())
        assert parsed == r
        blob = json.loads(r.to_json())
        assert set(blob["per_layer"]) == {"image/pyr0", "image/pyr1", "flare/pyr0", "flare/pyr1"}

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flarekit.image import (
    TensorFormatError,
    as_image,
    bilinear_resample,
    delinearize,
    linearize,
    luminance,
    read_png,
    read_tensor,
    tensor_bytes,
    tensor_from_bytes,
    write_png,
    write_tensor,
)


def rand_img(rng, h=16, w=16, c=3):
    return rng.random((h, w, c)).astype(np.float32)


class TestGamma:
    def test_gamma_one_is_identity(self):
        img = rand_img(np.random.default_rng(0))
        np.testing.assert_array_equal(linearize(img, 1.0), img)

    def test_power_law(self):
        assert linearize(np.float32(0.5), 2.0) == pytest.approx(0.25, abs=1e-7)
        assert delinearize(np.float32(0.25), 2.0) == pytest.approx(0.5, abs=1e-7)

    def test_delinearize_clips(self):
        out = delinearize(np.array([-0.5, 1.5], dtype=np.float32), 1.0)
        np.testing.assert_array_equal(out, [0.0, 1.0])

    def test_bad_gamma_rejected(self):
        with pytest.raises(ValueError):
            linearize(np.zeros((2, 2, 3), np.float32), 0.0)
        with pytest.raises(ValueError):
            delinearize(np.zeros((2, 2, 3), np.float32), -1.0)

    @given(st.floats(0.5, 4.0), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_round_trip(self, gamma, seed):
        img = rand_img(np.random.default_rng(seed), 8, 8)
        back = delinearize(linearize(img, gamma), gamma)
        assert np.max(np.abs(back - img)) < 1e-6


class TestResample:
    def test_same_size_bit_exact(self):
        img = rand_img(np.random.default_rng(1), 20, 13)
        out = bilinear_resample(img, 13, 20)
        np.testing.assert_array_equal(out, img)

    def test_constant_stays_constant(self):
        img = np.full((17, 9, 3), 0.3, dtype=np.float32)
        out = bilinear_resample(img, 31, 5)
        assert out.shape == (5, 31, 3)
        np.testing.assert_allclose(out, 0.3, atol=1e-7)

    def test_low_frequency_round_trip(self):
        # Oracle: the analytic sinusoid itself. A DC + single low-frequency
        # sine survives 2048 -> 512 -> 2048 within 0.01.
        n = 2048
        x = (np.arange(n) + 0.5) / n
        field = 0.5 + 0.25 * np.sin(2 * np.pi * 2 * x)[None, :] * np.sin(2 * np.pi * 3 * x)[:, None]
        img = field.astype(np.float32)
        down = bilinear_resample(img, 512, 512)
        up = bilinear_resample(down, n, n)
        assert np.max(np.abs(up.astype(np.float64) - field)) < 0.01

    def test_range_preserved(self):
        rng = np.random.default_rng(2)
        img = rand_img(rng, 33, 21)
        out = bilinear_resample(img, 64, 7)
        assert out.min() >= img.min() - 1e-6
        assert out.max() <= img.max() + 1e-6

    def test_bad_size_rejected(self):
        with pytest.raises(ValueError):
            bilinear_resample(np.zeros((4, 4, 3), np.float32), 0, 4)


class TestLuminance:
    def test_white_is_one(self):
        img = np.ones((2, 2, 3), dtype=np.float32)
        np.testing.assert_allclose(luminance(img), 1.0, atol=1e-7)

    def test_green_weight(self):
        img = np.zeros((1, 1, 3), dtype=np.float32)
        img[..., 1] = 1.0
        assert luminance(img)[0, 0] == pytest.approx(0.7152, abs=1e-7)

    def test_gray(self):
        img = np.full((3, 3, 3), 0.5, dtype=np.float32)
        np.testing.assert_allclose(luminance(img), 0.5, atol=1e-7)

    @given(st.floats(0.0, 4.0), st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, a, seed):
        img = rand_img(np.random.default_rng(seed), 6, 6)
        lhs = luminance((a * img).astype(np.float32))
        rhs = a * luminance(img)
        np.testing.assert_allclose(lhs, rhs, atol=1e-5)

    def test_wrong_channels_rejected(self):
        with pytest.raises(ValueError):
            luminance(np.zeros((4, 4, 1), np.float32))


class TestTensorFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        arr = rng.standard_normal((512, 512, 3)).astype(np.float32)
        path = tmp_path / "t.flt"
        write_tensor(path, arr)
        back = read_tensor(path)
        assert back.dtype == np.float32
        np.testing.assert_array_equal(back, arr)

    def test_header_payload_size(self):
        # 4 bytes/sample * 512*512*3 samples
        arr = np.zeros((512, 512, 3), dtype=np.float32)
        blob = tensor_bytes(arr)
        header = 4 + 4 + 4 * 3
        assert len(blob) - header == 3_145_728

    def test_bad_magic(self):
        blob = b"XXXX" + tensor_bytes(np.zeros((2, 2), np.float32))[4:]
        with pytest.raises(TensorFormatError) as err:
            tensor_from_bytes(blob)
        assert err.value.offset == 0

    def test_truncated_payload(self):
        blob = tensor_bytes(np.zeros((4, 4), np.float32))[:-3]
        with pytest.raises(TensorFormatError):
            tensor_from_bytes(blob)

    def test_dim_overflow(self):
        import struct

        blob = b"FLT1" + struct.pack("<I", 2) + struct.pack("<II", 2**30, 2**30)
        with pytest.raises(TensorFormatError):
            tensor_from_bytes(blob)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_round_trip_property(self, seed):
        rng = np.random.default_rng(seed)
        shape = tuple(int(rng.integers(1, 6)) for _ in range(int(rng.integers(1, 4))))
        arr = rng.standard_normal(shape).astype(np.float32)
        np.testing.assert_array_equal(tensor_from_bytes(tensor_bytes(arr)), arr)


class TestPng:
    def test_8bit_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        img = (rng.integers(0, 256, (12, 10, 3)) / 255.0).astype(np.float32)
        p = tmp_path / "a.png"
        write_png(p, linearize(img, 2.2), gamma=2.2, bits=8)
        back = read_png(p, gamma=2.2)
        # quantization to 8 bits bounds the error
        assert np.max(np.abs(delinearize(back, 2.2) - img)) <= (0.5 / 255) + 1e-6

    def test_16bit_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        img = rng.random((9, 9, 3)).astype(np.float32)
        p = tmp_path / "b.png"
        write_png(p, img, gamma=1.0, bits=16)
        back = read_png(p, gamma=1.0)
        assert np.max(np.abs(back - img)) <= (0.5 / 65535) + 1e-6


class TestValidation:
    def test_as_image_rejects_nan(self):
        bad = np.full((2, 2, 3), np.nan, dtype=np.float32)
        with pytest.raises(ValueError):
            as_image(bad)

    def test_as_image_promotes_2d(self):
        out = as_image(np.zeros((3, 4), np.float32))
        assert out.shape == (3, 4, 1)

import hashlib
import json
import math
import os

import numpy as np
import pytest

from flarekit.image import write_png, write_tensor, read_tensor
from flarekit.synthesis import (
    AffineAug,
    DatasetConfig,
    SceneAug,
    apply_flare_aug,
    apply_scene_aug,
    augment_flare,
    augment_scene,
    composite,
    generate_dataset,
    sample_flare_aug,
    sample_noise_sigma,
    sample_scene_aug,
)


def smooth_flare(size=64):
    """A smooth synthetic flare blob for warp-tolerance tests."""
    x = np.linspace(-1, 1, size)
    r2 = x[None, :] ** 2 + x[:, None] ** 2
    blob = np.exp(-r2 * 6.0).astype(np.float32)
    return np.stack([blob, 0.7 * blob, 0.4 * blob], axis=2)


class TestSceneAug:
    def test_identity_params(self):
        rng = np.random.default_rng(0)
        img = rng.random((16, 16, 3)).astype(np.float32)
        out = apply_scene_aug(img, SceneAug(False, False, 1.0, 1.0))
        np.testing.assert_array_equal(out, img)

    def test_gamma_range(self):
        gammas = [sample_scene_aug(np.random.default_rng(s)).gamma for s in range(10_000)]
        assert min(gammas) >= 1.8 and max(gammas) <= 2.2
        gains = [sample_scene_aug(np.random.default_rng(s)).gain for s in range(1000)]
        assert min(gains) >= 0.8 and max(gains) <= 1.2

    def test_double_flip_is_identity(self):
        rng = np.random.default_rng(1)
        img = rng.random((12, 10, 3)).astype(np.float32)
        once = apply_scene_aug(img, SceneAug(flip_h=True))
        twice = apply_scene_aug(once, SceneAug(flip_h=True))
        np.testing.assert_array_equal(twice, img)

    def test_deterministic(self):
        img = np.random.default_rng(2).random((8, 8, 3)).astype(np.float32)
        np.testing.assert_array_equal(augment_scene(img, 7), augment_scene(img, 7))

    def test_output_clipped(self):
        img = np.full((8, 8, 3), 0.95, dtype=np.float32)
        out = apply_scene_aug(img, SceneAug(False, False, 1.2, 2.0))
        assert out.max() <= 1.0


class TestFlareAug:
    def test_identity(self):
        flare = smooth_flare()
        out = apply_flare_aug(flare, AffineAug())
        np.testing.assert_array_equal(out, flare)

    def test_gain_ranges(self):
        for s in range(2000):
            aug = sample_flare_aug(np.random.default_rng(s))
            assert all(0.0 <= g <= 10.0 for g in aug.channel_gains)
            assert 0.0 <= aug.rotation <= 2 * math.pi
            assert all(-10.0 <= t <= 10.0 for t in aug.translation)
            assert -math.pi / 9 <= aug.shear <= math.pi / 9
            assert all(0.9 <= v <= 1.2 for v in aug.scale)

    def test_rotation_pi_twice_recovers(self):
        flare = smooth_flare()
        rot = AffineAug(rotation=math.pi)
        back = apply_flare_aug(apply_flare_aug(flare, rot), rot)
        assert np.max(np.abs(back - flare)) < 0.02

    def test_zero_gain_zeroes_flare(self):
        flare = smooth_flare()
        out = apply_flare_aug(flare, AffineAug(channel_gains=(0.0, 0.0, 0.0)))
        np.testing.assert_array_equal(out, np.zeros_like(flare))

    def test_translation_moves_content(self):
        flare = smooth_flare()
        out = apply_flare_aug(flare, AffineAug(translation=(5.0, 0.0)))
        peak = np.unravel_index(np.argmax(out[:, :, 0]), out.shape[:2])
        base = np.unravel_index(np.argmax(flare[:, :, 0]), flare.shape[:2])
        assert peak[1] - base[1] == 5

    def test_no_clipping(self):
        flare = smooth_flare()
        out = apply_flare_aug(flare, AffineAug(channel_gains=(10.0, 10.0, 10.0)))
        assert out.max() > 1.0

    def test_deterministic(self):
        flare = smooth_flare()
        np.testing.assert_array_equal(augment_flare(flare, 3), augment_flare(flare, 3))


class TestNoiseSigma:
    def test_nonnegative_and_deterministic(self):
        sigmas = [sample_noise_sigma(s) for s in range(1000)]
        assert min(sigmas) >= 0.0
        assert sample_noise_sigma(42) == sample_noise_sigma(42)

    def test_variance_mean(self):
        # Oracle: E[0.01 * chi2(1)] = 0.01.
        rng = np.random.default_rng(0)
        seeds = rng.integers(0, 2**62, size=100_000)
        mean_var = np.mean([sample_noise_sigma(int(s)) ** 2 for s in seeds])
        assert abs(mean_var - 0.01) < 0.0005


class TestComposite:
    def test_all_zero(self):
        z = np.zeros((4, 4, 3), np.float32)
        s = composite(z, z, 0.0, 0)
        np.testing.assert_array_equal(s.corrupted, z)

    def test_clipping(self):
        scene = np.full((4, 4, 3), 0.8, np.float32)
        flare = np.full((4, 4, 3), 0.5, np.float32)
        s = composite(scene, flare, 0.0, 0)
        np.testing.assert_array_equal(s.corrupted, np.ones_like(scene))

    def test_round_trip_bit_exact(self):
        # 10-bit-quantized inputs make the float32 sum exact, so subtracting
        # the flare recovers the scene bit for bit.
        rng = np.random.default_rng(1)
        scene = (rng.integers(0, 512, (16, 16, 3)) / 1024.0).astype(np.float32)
        flare = (rng.integers(0, 512, (16, 16, 3)) / 1024.0).astype(np.float32)
        s = composite(scene, flare, 0.0, 0)
        np.testing.assert_array_equal(s.corrupted - s.flare, s.scene)

    def test_noise_deterministic(self):
        rng = np.random.default_rng(2)
        scene = rng.random((8, 8, 3)).astype(np.float32)
        a = composite(scene, scene, 0.05, 99)
        b = composite(scene, scene, 0.05, 99)
        np.testing.assert_array_equal(a.corrupted, b.corrupted)
        c = composite(scene, scene, 0.05, 100)
        assert not np.array_equal(a.corrupted, c.corrupted)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            composite(np.zeros((4, 4, 3), np.float32), np.zeros((5, 4, 3), np.float32), 0.0, 0)


def tree_digest(root):
    digest = hashlib.sha256()
    for name in sorted(os.listdir(root)):
        digest.update(name.encode())
        with open(os.path.join(root, name), "rb") as f:
            digest.update(f.read())
    return digest.hexdigest()


@pytest.fixture(scope="module")
def source_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("sources")
    scene_dir = root / "scenes"
    sim_dir = root / "sim"
    cap_dir = root / "cap"
    for d in (scene_dir, sim_dir, cap_dir):
        d.mkdir()
    rng = np.random.default_rng(0)
    for i in range(3):
        write_png(scene_dir / f"scene_{i}.png", rng.random((80, 96, 3)).astype(np.float32), gamma=1.0)
    for i in range(2):
        write_tensor(sim_dir / f"sim_{i}.flt", (rng.random((64, 64, 3)) * 0.8).astype(np.float32))
    for i in range(2):
        write_tensor(cap_dir / f"cap_{i}.flt", (rng.random((64, 64, 3)) * 0.8).astype(np.float32))
    return scene_dir, sim_dir, cap_dir


class TestGenerateDataset:
    def make_cfg(self, source_dirs, out, **kw):
        scene_dir, sim_dir, cap_dir = source_dirs
        base = dict(
            scene_dir=str(scene_dir),
            out_dir=str(out),
            count=6,
            seed=11,
            flares_sim_dir=str(sim_dir),
            flares_captured_dir=str(cap_dir),
            size=32,
        )
        base.update(kw)
        return DatasetConfig(**base)

    def test_deterministic_trees(self, source_dirs, tmp_path):
        cfg_a = self.make_cfg(source_dirs, tmp_path / "a")
        cfg_b = self.make_cfg(source_dirs, tmp_path / "b")
        generate_dataset(cfg_a)
        generate_dataset(cfg_b)
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")

    def test_jobs_do_not_change_output(self, source_dirs, tmp_path):
        cfg_a = self.make_cfg(source_dirs, tmp_path / "j1", jobs=1)
        cfg_b = self.make_cfg(source_dirs, tmp_path / "j4", jobs=4)
        generate_dataset(cfg_a)
        generate_dataset(cfg_b)
        assert tree_digest(tmp_path / "j1") == tree_digest(tmp_path / "j4")

    def test_ratio_one_never_reads_captured(self, source_dirs, tmp_path, monkeypatch):
        scene_dir, sim_dir, cap_dir = source_dirs
        opened = []
        import flarekit.synthesis as syn

        original = syn._load_any

        def spy(path):
            opened.append(os.fspath(path))
            return original(path)

        monkeypatch.setattr(syn, "_load_any", spy)
        cfg = self.make_cfg(source_dirs, tmp_path / "simonly", sim_ratio=1.0)
        records = generate_dataset(cfg)
        assert all(r["source"] == "simulated" for r in records)
        assert not any(str(cap_dir) in p for p in opened)

    def test_manifest_regenerates_sample(self, source_dirs, tmp_path):
        scene_dir, sim_dir, cap_dir = source_dirs
        cfg = self.make_cfg(source_dirs, tmp_path / "m")
        generate_dataset(cfg)
        with open(tmp_path / "m" / "manifest.jsonl") as f:
            records = [json.loads(line) for line in f]
        assert len(records) == cfg.count
        rec = records[0]
        assert rec["error"] is None

        # Rebuild the sample purely from manifest parameters.
        from flarekit.image import bilinear_resample
        from flarekit.synthesis import _load_any, composite as comp

        enc = _load_any(os.path.join(cfg.scene_dir, rec["scene_file"]))
        h, w = enc.shape[:2]
        fw, fh = rec["crop"]["fitted_size"]
        if (w, h) != (fw, fh):
            enc = bilinear_resample(enc, fw, fh)
        x0, y0 = rec["crop"]["origin"]
        crop = enc[y0 : y0 + cfg.size, x0 : x0 + cfg.size]
        scene = apply_scene_aug(crop, SceneAug(**rec["scene_aug"]))

        root = cfg.flares_sim_dir if rec["source"] == "simulated" else cfg.flares_captured_dir
        flare = _load_any(os.path.join(root, rec["flare_file"]))
        if rec["captured_rotation"] is not None:
            flare = apply_flare_aug(flare, AffineAug(rotation=rec["captured_rotation"]))
        flare = bilinear_resample(flare, cfg.size, cfg.size)
        fa = rec["flare_aug"]
        flare = apply_flare_aug(
            flare,
            AffineAug(
                rotation=fa["rotation"],
                translation=tuple(fa["translation"]),
                shear=fa["shear"],
                scale=tuple(fa["scale"]),
                channel_gains=tuple(fa["channel_gains"]),
            ),
        )
        sample = comp(scene, flare, rec["sigma"], rec["noise_seed"])

        stored = read_tensor(tmp_path / "m" / rec["files"]["corrupted"])
        np.testing.assert_array_equal(stored, sample.corrupted)

    def test_failures_recorded_not_fatal(self, source_dirs, tmp_path):
        scene_dir, sim_dir, cap_dir = source_dirs
        bad_dir = tmp_path / "badscenes"
        bad_dir.mkdir()
        (bad_dir / "broken.png").write_bytes(b"not a png")
        import shutil

        shutil.copy(scene_dir / "scene_0.png", bad_dir / "scene_0.png")
        cfg = DatasetConfig(
            scene_dir=str(bad_dir),
            out_dir=str(tmp_path / "partial"),
            count=8,
            seed=5,
            flares_sim_dir=str(sim_dir),
            size=32,
        )
        records = generate_dataset(cfg)
        errors = [r for r in records if r["error"] is not None]
        successes = [r for r in records if r["error"] is None]
        assert errors and successes

    def test_all_failures_raise(self, source_dirs, tmp_path):
        scene_dir, sim_dir, cap_dir = source_dirs
        bad_dir = tmp_path / "allbad"
        bad_dir.mkdir()
        (bad_dir / "broken.png").write_bytes(b"nope")
        cfg = DatasetConfig(
            scene_dir=str(bad_dir),
            out_dir=str(tmp_path / "fail"),
            count=3,
            seed=5,
            flares_sim_dir=str(sim_dir),
            size=32,
        )
        with pytest.raises(RuntimeError):
            generate_dataset(cfg)

    def test_empty_scene_dir_raises(self, source_dirs, tmp_path):
        _, sim_dir, _ = source_dirs
        empty = tmp_path / "empty"
        empty.mkdir()
        cfg = DatasetConfig(
            scene_dir=str(empty),
            out_dir=str(tmp_path / "x"),
            count=1,
            seed=0,
            flares_sim_dir=str(sim_dir),
        )
        with pytest.raises(FileNotFoundError):
            generate_dataset(cfg)

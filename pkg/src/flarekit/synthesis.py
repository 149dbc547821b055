"""Semi-synthetic training pairs: augment scenes and flares, add and corrupt.

A training sample is corrupted = clip(scene + flare + noise, 0, 1) in linear
space. Scenes are gamma-encoded photos that get flipped, gain-adjusted, and
linearized with a randomized gamma; flare layers (simulated or captured) get
a random affine warp and per-channel gains. Every random choice derives from
a per-sample seed, so datasets regenerate byte-identically regardless of
worker count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np
import scipy.ndimage

from .image import (
    as_image,
    atomic_write_bytes,
    bilinear_resample,
    linearize,
    read_png,
    read_tensor,
    write_tensor,
)

NOISE_VARIANCE_SCALE = 0.01
DEFAULT_SAMPLE_SIZE = 512


@dataclass
class FlareSample:
    """One training tuple: clean scene, flare layer, corrupted composite."""

    scene: np.ndarray
    flare: np.ndarray
    corrupted: np.ndarray
    sigma: float
    seed: int


@dataclass
class SceneAug:
    flip_h: bool = False
    flip_v: bool = False
    gain: float = 1.0
    gamma: float = 1.0


@dataclass
class AffineAug:
    rotation: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)
    shear: float = 0.0
    scale: tuple[float, float] = (1.0, 1.0)
    channel_gains: tuple[float, float, float] = (1.0, 1.0, 1.0)


def sample_scene_aug(rng: np.random.Generator) -> SceneAug:
    return SceneAug(
        flip_h=bool(rng.random() < 0.5),
        flip_v=bool(rng.random() < 0.5),
        gain=float(rng.uniform(0.8, 1.2)),
        gamma=float(rng.uniform(1.8, 2.2)),
    )


def apply_scene_aug(encoded: np.ndarray, aug: SceneAug) -> np.ndarray:
    """Flip, brightness-adjust, and linearize a gamma-encoded scene."""
    out = np.asarray(encoded, dtype=np.float32)
    if aug.flip_h:
        out = out[:, ::-1]
    if aug.flip_v:
        out = out[::-1, :]
    out = np.clip(out * np.float32(aug.gain), 0.0, 1.0)
    return linearize(out, aug.gamma)


def augment_scene(encoded: np.ndarray, seed: int) -> np.ndarray:
    return apply_scene_aug(encoded, sample_scene_aug(np.random.default_rng(seed)))


def sample_flare_aug(rng: np.random.Generator) -> AffineAug:
    rotation = float(rng.uniform(0.0, 2.0 * math.pi))
    translation = tuple(float(t) for t in rng.uniform(-10.0, 10.0, size=2))
    shear = float(rng.uniform(-math.pi / 9.0, math.pi / 9.0))
    scale = tuple(float(s) for s in rng.uniform(0.9, 1.2, size=2))
    gains = tuple(float(g) for g in rng.uniform(0.0, 10.0, size=3))
    return AffineAug(rotation, translation, shear, scale, gains)


def _is_identity_warp(aug: AffineAug) -> bool:
    return (
        aug.rotation == 0.0
        and aug.translation == (0.0, 0.0)
        and aug.shear == 0.0
        and aug.scale == (1.0, 1.0)
    )


def apply_flare_aug(flare: np.ndarray, aug: AffineAug) -> np.ndarray:
    """Affine-warp a flare about its center, then apply channel gains.

    The forward map is dest = R(rot) @ Shear @ Scale @ (src - c) + c + t;
    sampling is bilinear with zeros outside. Output is not clipped (clipping
    happens after compositing).
    """
    flare = np.asarray(flare, dtype=np.float32)
    if not _is_identity_warp(aug):
        ca, sa = math.cos(aug.rotation), math.sin(aug.rotation)
        rot = np.array([[ca, -sa], [sa, ca]])
        shear = np.array([[1.0, math.tan(aug.shear)], [0.0, 1.0]])
        scale = np.diag(aug.scale)
        fwd_xy = rot @ shear @ scale
        inv_xy = np.linalg.inv(fwd_xy)
        h, w = flare.shape[:2]
        c_xy = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
        t_xy = np.array(aug.translation, dtype=np.float64)
        off_xy = -inv_xy @ (c_xy + t_xy) + c_xy
        swap = np.array([[0.0, 1.0], [1.0, 0.0]])
        m_yx = swap @ inv_xy @ swap
        off_yx = off_xy[::-1]
        warped = np.empty_like(flare)
        planes = flare[:, :, None] if flare.ndim == 2 else flare
        out_planes = warped[:, :, None] if flare.ndim == 2 else warped
        for ch in range(planes.shape[2]):
            out_planes[:, :, ch] = scipy.ndimage.affine_transform(
                planes[:, :, ch],
                matrix=m_yx,
                offset=off_yx,
                order=1,
                mode="constant",
                cval=0.0,
                prefilter=False,
            )
        flare = warped
    gains = np.asarray(aug.channel_gains, dtype=np.float32)
    if flare.ndim == 3:
        return flare * gains[None, None, :]
    return flare * gains[0]


def augment_flare(flare: np.ndarray, seed: int) -> np.ndarray:
    return apply_flare_aug(flare, sample_flare_aug(np.random.default_rng(seed)))


def sample_noise_sigma(seed: int, df: int = 1, scale: float = NOISE_VARIANCE_SCALE) -> float:
    """Per-image noise level: sigma^2 drawn from a scaled chi-square."""
    rng = np.random.default_rng(seed)
    return float(math.sqrt(scale * rng.chisquare(df)))


def composite(scene: np.ndarray, flare: np.ndarray, sigma: float, seed: int) -> FlareSample:
    """Sum scene and flare, add per-pixel Gaussian noise, clip to [0, 1]."""
    scene = np.asarray(scene, dtype=np.float32)
    flare = np.asarray(flare, dtype=np.float32)
    if scene.shape != flare.shape:
        raise ValueError(f"scene {scene.shape} and flare {flare.shape} differ")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    total = scene + flare
    if sigma > 0:
        rng = np.random.default_rng(seed)
        total = total + rng.normal(0.0, sigma, size=scene.shape).astype(np.float32)
    corrupted = np.clip(total, 0.0, 1.0)
    return FlareSample(scene=scene, flare=flare, corrupted=corrupted, sigma=float(sigma), seed=seed)


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

IMAGE_EXTENSIONS = (".png", ".flt")


@dataclass
class DatasetConfig:
    scene_dir: str
    out_dir: str
    count: int
    seed: int
    flares_sim_dir: str | None = None
    flares_captured_dir: str | None = None
    sim_ratio: float = 0.5
    size: int = DEFAULT_SAMPLE_SIZE
    chi2_df: int = 1
    jobs: int = 1


def _list_images(directory) -> list[str]:
    names = [n for n in sorted(os.listdir(directory)) if n.lower().endswith(IMAGE_EXTENSIONS)]
    if not names:
        raise FileNotFoundError(f"no .png/.flt images in {directory}")
    return names


def _load_any(path) -> np.ndarray:
    if os.fspath(path).lower().endswith(".flt"):
        return as_image(read_tensor(path))
    # Flare/scene PNG pools are read without a transfer curve here; the scene
    # gamma is part of the sampled augmentation.
    return read_png(path, gamma=1.0)


def _fit_and_crop(img: np.ndarray, size: int, rng: np.random.Generator):
    """Scale so the short side is >= size, then take a random size^2 crop."""
    h, w = img.shape[:2]
    if min(h, w) < size:
        s = size / min(h, w)
        img = bilinear_resample(img, max(size, int(round(w * s))), max(size, int(round(h * s))))
        h, w = img.shape[:2]
    x0 = int(rng.integers(0, w - size + 1))
    y0 = int(rng.integers(0, h - size + 1))
    return img[y0 : y0 + size, x0 : x0 + size], (x0, y0), (w, h)


def _render_sample(cfg: DatasetConfig, index: int, scenes, sims, caps) -> dict:
    ss = np.random.SeedSequence((cfg.seed, index))
    rng = np.random.default_rng(ss)
    record: dict = {"index": index}

    scene_name = scenes[int(rng.integers(len(scenes)))]
    record["scene_file"] = scene_name
    encoded = _load_any(os.path.join(cfg.scene_dir, scene_name))
    if encoded.shape[2] == 1:
        encoded = np.repeat(encoded, 3, axis=2)
    crop, origin, fitted = _fit_and_crop(encoded, cfg.size, rng)
    record["crop"] = {"origin": list(origin), "fitted_size": list(fitted)}
    scene_aug = sample_scene_aug(rng)
    record["scene_aug"] = asdict(scene_aug)
    scene = apply_scene_aug(crop, scene_aug)

    use_sim = cfg.sim_ratio >= 1.0 or (cfg.sim_ratio > 0.0 and rng.random() < cfg.sim_ratio)
    if use_sim and not sims:
        use_sim = False
    if not use_sim and not caps:
        use_sim = True
    pool, root = (sims, cfg.flares_sim_dir) if use_sim else (caps, cfg.flares_captured_dir)
    record["source"] = "simulated" if use_sim else "captured"
    flare_name = pool[int(rng.integers(len(pool)))]
    record["flare_file"] = flare_name
    flare = _load_any(os.path.join(root, flare_name))
    if flare.shape[2] == 1:
        flare = np.repeat(flare, 3, axis=2)
    if not use_sim:
        # Captured reflective flare is rotationally symmetric about the
        # optical axis; randomize its orientation at load time.
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        record["captured_rotation"] = angle
        flare = apply_flare_aug(flare, AffineAug(rotation=angle))
    else:
        record["captured_rotation"] = None
    flare = bilinear_resample(flare, cfg.size, cfg.size)
    flare_aug = sample_flare_aug(rng)
    record["flare_aug"] = asdict(flare_aug)
    flare = apply_flare_aug(flare, flare_aug)

    sigma = float(math.sqrt(NOISE_VARIANCE_SCALE * rng.chisquare(cfg.chi2_df)))
    noise_seed = int(rng.integers(2**63))
    record["sigma"] = sigma
    record["noise_seed"] = noise_seed
    sample = composite(scene, flare, sigma, noise_seed)

    files = {}
    for kind, arr in (("scene", sample.scene), ("flare", sample.flare), ("corrupted", sample.corrupted)):
        name = f"sample_{index:05d}_{kind}.flt"
        write_tensor(os.path.join(cfg.out_dir, name), arr)
        files[kind] = name
    record["files"] = files
    record["error"] = None
    return record


def generate_dataset(cfg: DatasetConfig) -> list[dict]:
    """Emit ``cfg.count`` flare samples plus a JSON-lines manifest.

    Each sample's randomness derives from (seed, index), so regeneration is
    byte-identical and independent of ``jobs``. Per-sample failures are
    recorded in the manifest; only a fully failed run raises.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    scenes = _list_images(cfg.scene_dir)
    sims = _list_images(cfg.flares_sim_dir) if cfg.flares_sim_dir else []
    caps = _list_images(cfg.flares_captured_dir) if cfg.flares_captured_dir else []
    if not sims and not caps:
        raise FileNotFoundError("need at least one flare source directory")
    if cfg.sim_ratio >= 1.0 and not sims:
        raise FileNotFoundError("sim_ratio=1.0 but no simulated flares available")
    if cfg.sim_ratio <= 0.0 and not caps:
        raise FileNotFoundError("sim_ratio=0.0 but no captured flares available")

    def run(i: int) -> dict:
        try:
            return _render_sample(cfg, i, scenes, sims, caps)
        except Exception as exc:  # per-item failure: record, keep going
            return {"index": i, "error": f"{type(exc).__name__}: {exc}", "files": {}}

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            records = list(pool.map(run, range(cfg.count)))
    else:
        records = [run(i) for i in range(cfg.count)]
    records.sort(key=lambda r: r["index"])

    if cfg.count > 0 and all(r["error"] is not None for r in records):
        raise RuntimeError(f"all {cfg.count} samples failed; first: {records[0]['error']}")

    manifest = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    atomic_write_bytes(os.path.join(cfg.out_dir, "manifest.jsonl"), manifest.encode())
    return records

"""Command-line interface: one executable for all toolkit workflows.

Every subcommand takes an explicit seed, logs its fully-resolved
configuration as a JSON line on stderr (and as config.json next to directory
outputs), and writes files atomically, so any artifact can be regenerated
bit-exactly from its logged config. Exit codes: 0 success, 1 usage error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import aperture as ap
from .image import atomic_write_bytes, read_png, write_png, write_tensor, read_tensor
from .maskblend import blend_light_source, feather_mask, saturation_mask
from .pipeline import (
    IdentityPredictor,
    SubprocessPredictor,
    eval_masked,
    remove_flare_highres,
)
from .synthesis import DatasetConfig, generate_dataset
from .waveoptics import (
    APERTURE_BANK_SIZE,
    FlareRenderConfig,
    SpectralConfig,
    render_scattering_flare,
)

PRESETS = {
    "desk": {"grid": ap.DESK_GRID, "disk_radius_px": ap.DESK_APERTURE.disk_radius_px},
    "paper": {"grid": ap.PAPER_GRID, "disk_radius_px": ap.PAPER_APERTURE.disk_radius_px},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def log(event: str, **fields) -> None:
    record = {"ts": round(time.time(), 3), "event": event}
    record.update(fields)
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def _write_config(out_dir: str, config: dict) -> None:
    # The on-disk copy omits the destination path and the worker count:
    # neither affects the artifact bytes, so regenerated trees must match.
    subset = {k: v for k, v in config.items() if k not in ("out", "jobs")}
    atomic_write_bytes(
        os.path.join(out_dir, "config.json"),
        json.dumps(subset, indent=2, sort_keys=True).encode(),
    )


def _load_config_file(path) -> dict:
    with open(path) as f:
        return json.load(f)


def _merged(args, keys) -> dict:
    """File config as the base, explicit flags on top."""
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(_load_config_file(args.config))
    for k in keys:
        v = getattr(args, k.replace("-", "_"), None)
        if v is not None:
            cfg[k] = v
    return cfg


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_apertures(args) -> int:
    cfg = _merged(args, ["count", "seed", "out", "grid", "preset", "jobs"])
    cfg.setdefault("count", APERTURE_BANK_SIZE)
    cfg.setdefault("seed", 0)
    cfg.setdefault("preset", "desk")
    cfg.setdefault("grid", PRESETS[cfg["preset"]]["grid"])
    cfg.setdefault("jobs", 1)
    if "out" not in cfg:
        raise UsageError("--out is required")
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    acfg = replace(ap.ApertureConfig(), disk_radius_px=PRESETS[cfg["preset"]]["disk_radius_px"])
    log("gen-apertures", config=cfg)
    _write_config(out, cfg)

    seeds = np.random.SeedSequence(cfg["seed"]).generate_state(cfg["count"], dtype=np.uint64)

    def render(i: int) -> None:
        spec = ap.sample_aperture_spec(int(seeds[i]), acfg)
        mask = ap.rasterize_aperture(spec, cfg["grid"])
        atomic_write_bytes(os.path.join(out, f"aperture_{i:03d}.json"), spec.to_json().encode())
        write_tensor(os.path.join(out, f"aperture_{i:03d}.flt"), mask)

    _run_parallel(render, cfg["count"], cfg["jobs"])
    log("done", count=cfg["count"])
    return 0


def cmd_render_flare(args) -> int:
    keys = ["count", "seed", "out", "grid", "sensor", "preset", "apertures", "chromatic-scale", "jobs"]
    cfg = _merged(args, keys)
    cfg.setdefault("count", 1)
    cfg.setdefault("seed", 0)
    cfg.setdefault("preset", "desk")
    cfg.setdefault("grid", PRESETS[cfg["preset"]]["grid"])
    cfg.setdefault("sensor", 800)
    cfg.setdefault("chromatic-scale", False)
    cfg.setdefault("jobs", 1)
    if "out" not in cfg:
        raise UsageError("--out is required")
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    log("render-flare", config=cfg)
    _write_config(out, cfg)

    bank = None
    if cfg.get("apertures"):
        names = sorted(n for n in os.listdir(cfg["apertures"]) if n.endswith(".flt"))
        if not names:
            raise FileNotFoundError(f"no aperture .flt files in {cfg['apertures']}")
        bank = [read_tensor(os.path.join(cfg["apertures"], n)) for n in names]
        grid = bank[0].shape[0]
    else:
        grid = cfg["grid"]

    rcfg = FlareRenderConfig(
        grid_size=grid,
        sensor=(cfg["sensor"], cfg["sensor"]),
        aperture_cfg=replace(ap.ApertureConfig(), disk_radius_px=PRESETS[cfg["preset"]]["disk_radius_px"]),
        aperture_bank=bank,
        spectral=SpectralConfig(),
        chromatic_scale=bool(cfg["chromatic-scale"]),
    )
    seeds = np.random.SeedSequence(cfg["seed"]).generate_state(cfg["count"], dtype=np.uint64)

    def render(i: int) -> None:
        img = render_scattering_flare(int(seeds[i]), rcfg)
        write_tensor(os.path.join(out, f"flare_{i:04d}.flt"), img)
        write_png(os.path.join(out, f"flare_{i:04d}.png"), img, gamma=2.2)
        log("flare-rendered", index=i)

    _run_parallel(render, cfg["count"], cfg["jobs"])
    log("done", count=cfg["count"])
    return 0


def cmd_gen_dataset(args) -> int:
    keys = ["scenes", "flares-sim", "flares-captured", "count", "seed", "out", "ratio", "size", "jobs"]
    cfg = _merged(args, keys)
    cfg.setdefault("count", 1)
    cfg.setdefault("seed", 0)
    cfg.setdefault("ratio", 0.5)
    cfg.setdefault("size", 512)
    cfg.setdefault("jobs", 1)
    for required in ("scenes", "out"):
        if required not in cfg:
            raise UsageError(f"--{required} is required")
    if not cfg.get("flares-sim") and not cfg.get("flares-captured"):
        raise UsageError("at least one of --flares-sim/--flares-captured is required")
    os.makedirs(cfg["out"], exist_ok=True)
    log("gen-dataset", config=cfg)
    _write_config(cfg["out"], cfg)
    dcfg = DatasetConfig(
        scene_dir=cfg["scenes"],
        out_dir=cfg["out"],
        count=cfg["count"],
        seed=cfg["seed"],
        flares_sim_dir=cfg.get("flares-sim"),
        flares_captured_dir=cfg.get("flares-captured"),
        sim_ratio=cfg["ratio"],
        size=cfg["size"],
        jobs=cfg["jobs"],
    )
    records = generate_dataset(dcfg)
    failures = sum(1 for r in records if r.get("error"))
    log("done", count=len(records), failures=failures)
    return 0


def cmd_blend(args) -> int:
    cfg = _merged(args, ["input", "pred", "out", "threshold", "export-masks", "max-channel"])
    cfg.setdefault("threshold", 0.99)
    for required in ("input", "pred", "out"):
        if required not in cfg:
            raise UsageError(f"--{required} is required")
    log("blend", config=cfg)
    inp = read_png(cfg["input"])
    pred = read_png(cfg["pred"])
    mask = saturation_mask(inp, cfg["threshold"], use_max_channel=bool(cfg.get("max-channel")))
    feathered = feather_mask(mask)
    out = blend_light_source(inp, pred, feathered)
    write_png(cfg["out"], out)
    if cfg.get("export-masks"):
        stem, ext = os.path.splitext(cfg["out"])
        write_png(stem + "_mask" + ext, mask.astype(np.float32), gamma=1.0)
        write_png(stem + "_feathered" + ext, feathered, gamma=1.0)
    log("done", out=cfg["out"])
    return 0


def cmd_remove(args) -> int:
    cfg = _merged(args, ["input", "predictor", "out", "lowres"])
    cfg.setdefault("lowres", 512)
    cfg.setdefault("predictor", "identity")
    for required in ("input", "out"):
        if required not in cfg:
            raise UsageError(f"--{required} is required")
    log("remove", config=cfg)
    inp = read_png(cfg["input"])
    if cfg["predictor"] == "identity":
        out = remove_flare_highres(inp, IdentityPredictor(), lowres=cfg["lowres"])
    else:
        with SubprocessPredictor(cfg["predictor"]) as predictor:
            out = remove_flare_highres(inp, predictor, lowres=cfg["lowres"])
    write_png(cfg["out"], out)
    log("done", out=cfg["out"])
    return 0


def cmd_eval(args) -> int:
    cfg = _merged(args, ["pred", "truth", "input", "report", "threshold"])
    cfg.setdefault("threshold", 0.99)
    for required in ("pred", "truth", "input", "report"):
        if required not in cfg:
            raise UsageError(f"--{required} is required")
    log("eval", config=cfg)

    def load(directory, name):
        path = os.path.join(directory, name)
        return read_tensor(path) if name.endswith(".flt") else read_png(path)

    names = sorted(
        n for n in os.listdir(cfg["pred"]) if n.endswith((".png", ".flt"))
    )
    if not names:
        raise FileNotFoundError(f"no images in {cfg['pred']}")
    rows = []
    for name in names:
        metrics = eval_masked(
            load(cfg["pred"], name),
            load(cfg["truth"], name),
            load(cfg["input"], name),
            threshold=cfg["threshold"],
        )
        metrics["name"] = name
        rows.append(metrics)
        log("evaluated", name=name, psnr=round(metrics["psnr"], 4), ssim=round(metrics["ssim"], 6))
    report = {
        "config": cfg,
        "mean_psnr": float(np.mean([r["psnr"] for r in rows])),
        "mean_ssim": float(np.mean([r["ssim"] for r in rows])),
        "images": rows,
    }
    atomic_write_bytes(cfg["report"], json.dumps(report, indent=2, sort_keys=True).encode())
    log("done", mean_psnr=report["mean_psnr"], mean_ssim=report["mean_ssim"])
    return 0


def cmd_bench_psf(args) -> int:
    cfg = _merged(args, ["grids", "wavelengths", "seed"])
    cfg.setdefault("grids", "1024,2048,4096")
    cfg.setdefault("wavelengths", 4)
    cfg.setdefault("seed", 0)
    log("bench-psf", config=cfg)
    from .waveoptics import defocus_phase, monochromatic_psf

    results = []
    for grid in (int(g) for g in str(cfg["grids"]).split(",")):
        # FFT timing is aperture-content-independent; a clean disk keeps the
        # benchmark setup cheap even at grid 4096.
        mask = ap.rasterize_aperture(ap.ApertureSpec(disk_radius_px=750.0), grid)
        lams = np.linspace(380.0, 740.0, cfg["wavelengths"])
        t0 = time.perf_counter()
        for lam in lams:
            monochromatic_psf(mask, defocus_phase(grid, 300.0, float(lam)))
        elapsed = time.perf_counter() - t0
        results.append(
            {
                "grid": grid,
                "wavelengths": int(cfg["wavelengths"]),
                "fft_wall_s": round(elapsed, 4),
                "wavelengths_per_s": round(cfg["wavelengths"] / elapsed, 3),
            }
        )
        log("bench", **results[-1])
    print(json.dumps(results, indent=2))
    return 0


def _run_parallel(fn, count: int, jobs: int) -> None:
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(fn, range(count)))
    else:
        for i in range(count):
            fn(i)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="flarekit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, configure):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.set_defaults(func=func)
        configure(p)
        return p

    def p_int(p, *names, **kw):
        for n in names:
            p.add_argument(n, type=int, **kw)

    def gen_apertures(p):
        p_int(p, "--count", "--seed", "--grid", "--jobs")
        p.add_argument("--out")
        p.add_argument("--preset", choices=sorted(PRESETS))

    def render_flare(p):
        p_int(p, "--count", "--seed", "--grid", "--sensor", "--jobs")
        p.add_argument("--out")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--apertures", help="directory of pre-rasterized aperture .flt files")
        p.add_argument("--chromatic-scale", action="store_const", const=True, default=None)

    def gen_dataset(p):
        p_int(p, "--count", "--seed", "--size", "--jobs")
        p.add_argument("--scenes")
        p.add_argument("--flares-sim")
        p.add_argument("--flares-captured")
        p.add_argument("--out")
        p.add_argument("--ratio", type=float)

    def blend(p):
        p.add_argument("--input")
        p.add_argument("--pred")
        p.add_argument("--out")
        p.add_argument("--threshold", type=float)
        p.add_argument("--max-channel", action="store_const", const=True, default=None)
        p.add_argument("--export-masks", action="store_const", const=True, default=None)

    def remove(p):
        p.add_argument("--input")
        p.add_argument("--predictor", help='predictor command line, or "identity"')
        p.add_argument("--out")
        p.add_argument("--lowres", type=int)

    def eval_(p):
        p.add_argument("--pred")
        p.add_argument("--truth")
        p.add_argument("--input")
        p.add_argument("--report")
        p.add_argument("--threshold", type=float)

    def bench(p):
        p.add_argument("--grids")
        p_int(p, "--wavelengths", "--seed")

    add("gen-apertures", cmd_gen_apertures, gen_apertures)
    add("render-flare", cmd_render_flare, render_flare)
    add("gen-dataset", cmd_gen_dataset, gen_dataset)
    add("blend", cmd_blend, blend)
    add("remove", cmd_remove, remove)
    add("eval", cmd_eval, eval_)
    add("bench-psf", cmd_bench_psf, bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:
        log("error", type=type(exc).__name__, message=str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Training loop: Adam, batch 2, fixed 1e-4 learning rate, masked losses.

Checkpoints are periodic snapshots of {arch config, weights, iteration};
the loss curve streams to train_log.jsonl in the checkpoint directory.
Run directly: python -m flare_trainer.train --manifest ... --out ...
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import torch
from torch.utils.data import DataLoader

from .data import FlareDataset
from .losses import IdentityFeatures, loss_terms, saturation_mask
from .models import ModelConfig, build_model
from .vgg import VggFeatures


@dataclass
class TrainConfig:
    manifest: str
    checkpoint_dir: str
    iterations: int = 2000
    lr: float = 1e-4
    batch: int = 2
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    extractor: str = "vgg"  # "vgg" or "identity"
    vgg_weights: str | None = None
    allow_random_vgg: bool = False
    checkpoint_every: int = 1000
    log_every: int = 10

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")


def build_extractor(cfg: TrainConfig) -> torch.nn.Module:
    if cfg.extractor == "identity":
        return IdentityFeatures()
    if cfg.extractor == "vgg":
        return VggFeatures(cfg.vgg_weights, allow_random=cfg.allow_random_vgg).eval()
    raise ValueError(f"unknown extractor {cfg.extractor!r}")


def save_checkpoint(path, model, cfg: TrainConfig, iteration: int) -> None:
    torch.save(
        {
            "arch": cfg.model.arch,
            "model_config": cfg.model.to_dict(),
            "iteration": iteration,
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> torch.nn.Module:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    mc = blob["model_config"]
    cfg = ModelConfig(
        arch=blob["arch"],
        base_channels=mc["base_channels"],
        scales=mc["scales"],
        can_channels=mc["can_channels"],
        allow_random_vgg=True,  # weights come from the checkpoint
    )
    model = build_model(cfg)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model


def train(cfg: TrainConfig) -> str:
    """Run the loop; returns the final checkpoint path."""
    torch.manual_seed(cfg.seed)
    os.makedirs(cfg.checkpoint_dir, exist_ok=True)
    dataset = FlareDataset(cfg.manifest)
    loader = DataLoader(
        dataset,
        batch_size=cfg.batch,
        shuffle=True,
        drop_last=False,
        generator=torch.Generator().manual_seed(cfg.seed),
    )
    model = build_model(cfg.model)
    model.train()
    extractor = build_extractor(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    log_path = os.path.join(cfg.checkpoint_dir, "train_log.jsonl")
    iteration = 0
    t0 = time.time()
    with open(log_path, "w") as log:
        while iteration < cfg.iterations:
            for corrupted, scene, flare in loader:
                if iteration >= cfg.iterations:
                    break
                mask = saturation_mask(corrupted)
                pred = model(corrupted)
                terms = loss_terms(pred, corrupted, scene, flare, mask, extractor)
                loss = terms["total"]
                if not math.isfinite(loss.item()):
                    raise RuntimeError(
                        f"non-finite loss {loss.item()} at iteration {iteration}; aborting"
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                iteration += 1
                if iteration % cfg.log_every == 0 or iteration == 1:
                    record = {
                        "iteration": iteration,
                        "elapsed_s": round(time.time() - t0, 2),
                        **{k: float(v.item()) for k, v in terms.items()},
                    }
                    log.write(json.dumps(record) + "\n")
                    log.flush()
                if iteration % cfg.checkpoint_every == 0:
                    save_checkpoint(
                        os.path.join(cfg.checkpoint_dir, f"ckpt_{iteration:07d}.pt"),
                        model,
                        cfg,
                        iteration,
                    )
    final = os.path.join(cfg.checkpoint_dir, "ckpt_final.pt")
    save_checkpoint(final, model, cfg, iteration)
    return final


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Train a flare removal network")
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--out", required=True, help="checkpoint directory")
    parser.add_argument("--arch", choices=["unet", "can"], default="unet")
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--batch", type=int, default=2)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--base-channels", type=int, default=32)
    parser.add_argument("--scales", type=int, default=5)
    parser.add_argument("--extractor", choices=["vgg", "identity"], default="vgg")
    parser.add_argument("--vgg-weights")
    parser.add_argument("--allow-random-vgg", action="store_true")
    args = parser.parse_args(argv)
    cfg = TrainConfig(
        manifest=args.manifest,
        checkpoint_dir=args.out,
        iterations=args.iterations,
        lr=args.lr,
        batch=args.batch,
        seed=args.seed,
        model=ModelConfig(
            arch=args.arch,
            base_channels=args.base_channels,
            scales=args.scales,
            vgg_weights=args.vgg_weights,
            allow_random_vgg=args.allow_random_vgg,
        ),
        extractor=args.extractor,
        vgg_weights=args.vgg_weights,
        allow_random_vgg=args.allow_random_vgg,
    )
    path = train(cfg)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

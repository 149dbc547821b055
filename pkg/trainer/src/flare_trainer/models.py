"""Flare removal network architectures: U-Net and the context aggregation net.

Both map a (B, 3, 512, 512) flare-corrupted image to a same-shape flare-free
estimate. The U-Net is an encoder-decoder with skip concatenation, max-pool
downsampling, resize-convolution upsampling, and a final sigmoid. The CAN
concatenates upsampled VGG-19 features with the input (1475 channels),
compresses to 64 channels, and aggregates context through dilated 3x3
convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .vgg import TAP_CHANNELS, VggFeatures

CAN_INPUT_CHANNELS = 3 + sum(TAP_CHANNELS)  # 1475
CAN_DILATIONS = (1, 2, 4, 8, 16, 32, 64, 1)


@dataclass
class ModelConfig:
    arch: str = "unet"
    base_channels: int = 32
    scales: int = 5
    can_channels: int = 64
    vgg_weights: str | None = None
    allow_random_vgg: bool = False

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "base_channels": self.base_channels,
            "scales": self.scales,
            "can_channels": self.can_channels,
        }


def _conv_block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(out_ch, out_ch, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class ResizeConv(nn.Module):
    """Upsampling without checkerboard artifacts: resize, then convolve."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class UNet(nn.Module):
    def __init__(self, base_channels: int = 32, scales: int = 5):
        super().__init__()
        widths = [base_channels * 2**i for i in range(scales)]
        self.encoders = nn.ModuleList()
        in_ch = 3
        for w in widths:
            self.encoders.append(_conv_block(in_ch, w))
            in_ch = w
        self.pool = nn.MaxPool2d(2)
        self.upsamples = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for deep, skip in zip(widths[::-1][:-1], widths[::-1][1:]):
            self.upsamples.append(ResizeConv(deep, skip))
            self.decoders.append(_conv_block(skip * 2, skip))
        self.head = nn.Conv2d(widths[0], 3, 1)

    def forward(self, x):
        skips = []
        h = x
        for i, enc in enumerate(self.encoders):
            h = enc(self.pool(h) if i > 0 else h)
            skips.append(h)
        h = skips.pop()
        for up, dec in zip(self.upsamples, self.decoders):
            h = up(h)
            h = dec(torch.cat([skips.pop(), h], dim=1))
        return torch.sigmoid(self.head(h))


class CAN(nn.Module):
    def __init__(self, vgg: VggFeatures, channels: int = 64):
        super().__init__()
        self.vgg = vgg
        self.compress = nn.Conv2d(CAN_INPUT_CHANNELS, channels, 1)
        self.dilations = CAN_DILATIONS
        self.body = nn.ModuleList(
            nn.Conv2d(channels, channels, 3, padding=d, dilation=d) for d in self.dilations
        )
        self.head = nn.Conv2d(channels, 3, 1)

    def assemble_features(self, x: torch.Tensor) -> torch.Tensor:
        size = x.shape[-2:]
        feats = [x]
        with torch.no_grad():
            taps = self.vgg(x)
        for f in taps:
            if f.shape[-2:] != size:
                f = F.interpolate(f, size=size, mode="bilinear", align_corners=False)
            feats.append(f)
        return torch.cat(feats, dim=1)

    def forward(self, x):
        h = self.compress(self.assemble_features(x))
        h = F.leaky_relu(h, 0.2)
        for conv in self.body:
            h = F.leaky_relu(conv(h), 0.2)
        return torch.sigmoid(self.head(h))


def build_unet(cfg: ModelConfig | None = None) -> UNet:
    cfg = cfg or ModelConfig()
    return UNet(base_channels=cfg.base_channels, scales=cfg.scales)


def build_can(cfg: ModelConfig) -> CAN:
    if not cfg.vgg_weights and not cfg.allow_random_vgg:
        raise RuntimeError("CAN needs pretrained VGG-19 weights (cfg.vgg_weights)")
    vgg = VggFeatures(cfg.vgg_weights, allow_random=cfg.allow_random_vgg)
    return CAN(vgg, channels=cfg.can_channels)


def build_model(cfg: ModelConfig) -> nn.Module:
    if cfg.arch == "unet":
        return build_unet(cfg)
    if cfg.arch == "can":
        return build_can(cfg)
    raise ValueError(f"unknown arch {cfg.arch!r}")

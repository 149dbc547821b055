"""VGG-19 feature extractor for the perceptual loss and the CAN backbone.

Builds the 16-conv VGG-19 feature stack and returns the activations after
relu1_2, relu2_2, relu3_2, relu4_2, and relu5_2 (channel widths 64, 128,
256, 512, 512). Weights load from a torchvision-layout state dict
("features.N.weight"); without one the extractor is either random-initialized
(must be requested explicitly) or a configuration error.
"""

from __future__ import annotations

import torch
import torch.nn as nn

# (out_channels per conv, pool after?) following the VGG-19 configuration.
_VGG19_PLAN = [
    (64, False), (64, True),
    (128, False), (128, True),
    (256, False), (256, False), (256, False), (256, True),
    (512, False), (512, False), (512, False), (512, True),
    (512, False), (512, False), (512, False), (512, True),
]

# Indices (into the built Sequential) of the relu*_2 activations.
TAP_NAMES = ("conv1_2", "conv2_2", "conv3_2", "conv4_2", "conv5_2")
TAP_CHANNELS = (64, 128, 256, 512, 512)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def build_features() -> nn.Sequential:
    layers: list[nn.Module] = []
    in_ch = 3
    for out_ch, pool in _VGG19_PLAN:
        layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1))
        layers.append(nn.ReLU(inplace=False))
        if pool:
            layers.append(nn.MaxPool2d(kernel_size=2, stride=2))
        in_ch = out_ch
    return nn.Sequential(*layers)


def _tap_indices(features: nn.Sequential) -> list[int]:
    # relu after the second conv of each block
    taps, conv_in_block = [], 0
    for i, layer in enumerate(features):
        if isinstance(layer, nn.Conv2d):
            conv_in_block += 1
        elif isinstance(layer, nn.MaxPool2d):
            conv_in_block = 0
        elif isinstance(layer, nn.ReLU) and conv_in_block == 2:
            taps.append(i)
            conv_in_block = -1  # only the first relu after conv *_2
    return taps[: len(TAP_NAMES)]


class VggFeatures(nn.Module):
    """Frozen VGG-19 feature taps, ImageNet-normalized input in [0, 1]."""

    layers = TAP_NAMES

    def __init__(self, weights_path: str | None = None, allow_random: bool = False):
        super().__init__()
        self.features = build_features()
        if weights_path:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            own = {k.removeprefix("features."): v for k, v in state.items() if k.startswith("features.")}
            self.features.load_state_dict(own or state)
        elif not allow_random:
            raise RuntimeError(
                "pretrained VGG-19 weights are required; pass weights_path or allow_random=True"
            )
        self.taps = _tap_indices(self.features)
        for p in self.features.parameters():
            p.requires_grad_(False)
        mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
        self.register_buffer("mean", mean)
        self.register_buffer("std", std)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        out = []
        h = (x - self.mean) / self.std
        for i, layer in enumerate(self.features):
            h = layer(h)
            if i in self.taps:
                out.append(h)
                if len(out) == len(self.taps):
                    break
        return out

"""Dataset access: the generator's manifest plus tensor files.

Each manifest line names the scene/flare/corrupted tensors of one sample;
images arrive as float32 (H, W, 3) and are served as (3, H, W) torch tensors.
"""

from __future__ import annotations

import json
import os

import numpy as np
import torch
from torch.utils.data import Dataset

from .tensorfile import read_tensor


def _to_chw(arr: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))


class FlareDataset(Dataset):
    """(corrupted, scene, flare) triples from a generator manifest."""

    def __init__(self, manifest_path: str):
        self.root = os.path.dirname(os.path.abspath(manifest_path))
        with open(manifest_path) as f:
            records = [json.loads(line) for line in f if line.strip()]
        self.records = [r for r in records if not r.get("error")]
        if not self.records:
            raise RuntimeError(f"no usable samples in {manifest_path}")

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, idx: int):
        files = self.records[idx]["files"]
        corrupted = _to_chw(read_tensor(os.path.join(self.root, files["corrupted"])))
        scene = _to_chw(read_tensor(os.path.join(self.root, files["scene"])))
        flare = _to_chw(read_tensor(os.path.join(self.root, files["flare"])))
        return corrupted, scene, flare

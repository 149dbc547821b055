"""Predictor server: binds a trained checkpoint to the wire protocol.

Reads request frames from stdin, runs the model, writes response frames to
stdout with outputs clipped to [0, 1]. One request is in flight at a time.
A malformed frame produces an error frame and the server keeps running.
``--echo`` bypasses the model entirely (smoke testing the framing).

Run: python -m flare_trainer.serve --checkpoint ckpt.pt
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
import torch

from .protocol import Frame, KIND_ERROR, KIND_REQUEST, KIND_RESPONSE, ProtocolError, read_frame, write_frame
from .train import load_checkpoint


def serve(model, stdin, stdout) -> int:
    errors = 0
    while True:
        try:
            frame = read_frame(stdin)
        except ProtocolError as exc:
            errors += 1
            write_frame(stdout, Frame(KIND_ERROR, message=str(exc)))
            continue
        if frame is None:
            print(f"served with {errors} protocol errors", file=sys.stderr)
            return 0
        if frame.kind != KIND_REQUEST:
            errors += 1
            write_frame(stdout, Frame(KIND_ERROR, message=f"expected request, got kind {frame.kind}"))
            continue
        try:
            out = _predict(model, frame.image)
        except Exception as exc:
            errors += 1
            write_frame(stdout, Frame(KIND_ERROR, message=f"{type(exc).__name__}: {exc}"))
            continue
        write_frame(stdout, Frame(KIND_RESPONSE, image=out))


def _predict(model, image: np.ndarray) -> np.ndarray:
    if model is None:  # echo mode
        return image
    if image.shape[2] != 3:
        raise ValueError(f"expected 3 channels, got {image.shape[2]}")
    x = torch.from_numpy(image.transpose(2, 0, 1))[None]
    with torch.no_grad():
        y = model(x)
    return np.clip(y[0].numpy().transpose(1, 2, 0), 0.0, 1.0).astype(np.float32)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Serve a flare removal predictor")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--checkpoint")
    group.add_argument("--echo", action="store_true")
    args = parser.parse_args(argv)
    model = None if args.echo else load_checkpoint(args.checkpoint)
    return serve(model, sys.stdin.buffer, sys.stdout.buffer)


if __name__ == "__main__":
    sys.exit(main())

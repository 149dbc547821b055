"""Framed binary protocol for out-of-process predictors.

One frame: magic b"FLR1" | kind u8 (0 request, 1 response, 2 error) |
width u32 | height u32 | channels u32 | payload. Image payloads are float32
little-endian, row-major in (height, width, channels) order, 4*w*h*c bytes.
Error frames carry a UTF-8 message instead: width holds the message byte
length, height and channels are 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FRAME_MAGIC = b"FLR1"
KIND_REQUEST = 0
KIND_RESPONSE = 1
KIND_ERROR = 2

_HEADER = struct.Struct("<4sBIII")
MAX_FRAME_DIM = 1 << 20


class FrameError(ValueError):
    """Malformed frame on the wire."""


@dataclass
class Frame:
    kind: int
    image: np.ndarray | None = None
    message: str | None = None


def encode_frame(frame: Frame) -> bytes:
    if frame.kind == KIND_ERROR:
        msg = (frame.message or "").encode("utf-8")
        return _HEADER.pack(FRAME_MAGIC, KIND_ERROR, len(msg), 0, 0) + msg
    img = np.ascontiguousarray(frame.image, dtype="<f4")
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise ValueError(f"frame image must be 2D or 3D, got shape {img.shape}")
    h, w, c = img.shape
    return _HEADER.pack(FRAME_MAGIC, frame.kind, w, h, c) + img.tobytes()


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            raise FrameError(f"stream ended after {got} of {n} expected bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(stream) -> Frame | None:
    """Read one frame; returns None on clean EOF at a frame boundary."""
    first = stream.read(1)
    if not first:
        return None
    header = first + _read_exact(stream, _HEADER.size - 1)
    magic, kind, w, h, c = _HEADER.unpack(header)
    if magic != FRAME_MAGIC:
        raise FrameError(f"bad frame magic {magic!r}")
    if kind not in (KIND_REQUEST, KIND_RESPONSE, KIND_ERROR):
        raise FrameError(f"unknown frame kind {kind}")
    if kind == KIND_ERROR:
        if w > (1 << 24):
            raise FrameError(f"error message length {w} out of range")
        msg = _read_exact(stream, w)
        return Frame(kind=KIND_ERROR, message=msg.decode("utf-8", errors="replace"))
    if not (1 <= w <= MAX_FRAME_DIM and 1 <= h <= MAX_FRAME_DIM and 1 <= c <= 16):
        raise FrameError(f"frame dims out of range: {w}x{h}x{c}")
    payload = _read_exact(stream, 4 * w * h * c)
    image = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).copy()
    return Frame(kind=kind, image=image)


def write_frame(stream, frame: Frame) -> None:
    stream.write(encode_frame(frame))
    stream.flush()

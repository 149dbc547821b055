"""Predictor wire protocol, server side.

Frame: magic b"FLR1" | kind u8 (0 request, 1 response, 2 error) | width u32 |
height u32 | channels u32 | payload. Image payloads are float32 LE in
(height, width, channels) row-major order; error frames carry a UTF-8
message whose byte length rides in the width field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"FLR1"
KIND_REQUEST = 0
KIND_RESPONSE = 1
KIND_ERROR = 2

_HEADER = struct.Struct("<4sBIII")
MAX_DIM = 1 << 20


class ProtocolError(ValueError):
    pass


@dataclass
class Frame:
    kind: int
    image: np.ndarray | None = None
    message: str | None = None


def _read_exact(stream, n: int) -> bytes:
    parts = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            raise ProtocolError(f"stream ended {n - got} bytes early")
        parts.append(chunk)
        got += len(chunk)
    return b"".join(parts)


def read_frame(stream) -> Frame | None:
    first = stream.read(1)
    if not first:
        return None
    magic, kind, w, h, c = _HEADER.unpack(first + _read_exact(stream, _HEADER.size - 1))
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if kind not in (KIND_REQUEST, KIND_RESPONSE, KIND_ERROR):
        raise ProtocolError(f"unknown kind {kind}")
    if kind == KIND_ERROR:
        if w > (1 << 24):
            raise ProtocolError(f"error message length {w} out of range")
        return Frame(KIND_ERROR, message=_read_exact(stream, w).decode("utf-8", "replace"))
    if not (1 <= w <= MAX_DIM and 1 <= h <= MAX_DIM and 1 <= c <= 16):
        raise ProtocolError(f"dims out of range: {w}x{h}x{c}")
    payload = _read_exact(stream, 4 * w * h * c)
    return Frame(kind, image=np.frombuffer(payload, dtype="<f4").reshape(h, w, c).copy())


def write_frame(stream, frame: Frame) -> None:
    if frame.kind == KIND_ERROR:
        msg = (frame.message or "").encode("utf-8")
        stream.write(_HEADER.pack(MAGIC, KIND_ERROR, len(msg), 0, 0) + msg)
    else:
        img = np.ascontiguousarray(frame.image, dtype="<f4")
        if img.ndim == 2:
            img = img[:, :, None]
        h, w, c = img.shape
        stream.write(_HEADER.pack(MAGIC, frame.kind, w, h, c) + img.tobytes())
    stream.flush()

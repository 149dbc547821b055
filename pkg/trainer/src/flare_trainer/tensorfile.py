"""Reader/writer for the toolkit's tensor interchange format.

Layout: magic b"FLT1" | ndim u32 LE | dims u32 LE each | float32 LE payload,
row-major. Round trips are bit-exact; this implementation is independent of
the generator's so the format itself is the contract.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FLT1"


class TensorFileError(ValueError):
    pass


def write_tensor(path, arr: np.ndarray) -> None:
    a = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", a.ndim))
        f.write(struct.pack(f"<{a.ndim}I", *a.shape))
        f.write(a.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise TensorFileError(f"not a tensor file: {path}")
    (ndim,) = struct.unpack("<I", buf[4:8])
    if not 1 <= ndim <= 32:
        raise TensorFileError(f"bad ndim {ndim} in {path}")
    end = 8 + 4 * ndim
    dims = struct.unpack(f"<{ndim}I", buf[8:end])
    expected = 4 * int(np.prod(dims))
    if len(buf) - end != expected:
        raise TensorFileError(f"payload size mismatch in {path}")
    return np.frombuffer(buf, dtype="<f4", offset=end).reshape(dims).copy()

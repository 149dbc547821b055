"""Linear-space image handling: gamma curves, resampling, luminance, file I/O.

Images are float32 numpy arrays in linear radiance. Color images have shape
(height, width, 3); single-channel data may be (height, width) or
(height, width, 1). Values are nominally in [0, 1] after clipping stages and
unbounded above before them.
"""

from __future__ import annotations

import os
import struct
import tempfile

import cv2
import numpy as np

MAGIC = b"FLT1"

# Rec. 709 luma weights, applied to linear RGB.
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722], dtype=np.float64)

DEFAULT_GAMMA = 2.2


class TensorFormatError(ValueError):
    """Malformed tensor file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def as_image(arr, channels=None) -> np.ndarray:
    """Validate and coerce ``arr`` to a float32 linear image.

    Raises ValueError for empty dims, non-finite samples, or an unexpected
    channel count.
    """
    img = np.asarray(arr, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (h, w) or (h, w, 1|3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image dimensions must be >= 1, got {img.shape}")
    if channels is not None and img.shape[2] != channels:
        raise ValueError(f"expected {channels} channels, got {img.shape[2]}")
    if not np.isfinite(img).all():
        raise ValueError("image contains NaN or Inf samples")
    return img


def linearize(img: np.ndarray, gamma: float) -> np.ndarray:
    """Decode a gamma-encoded image to linear radiance: x -> x**gamma.

    Input samples must lie in [0, 1]; gamma must be positive.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    out = np.asarray(img, dtype=np.float32)
    if gamma == 1.0:
        return out.copy()
    return np.power(out, np.float32(gamma))


def delinearize(img: np.ndarray, gamma: float) -> np.ndarray:
    """Encode a linear image for display: clip to [0, 1], then x**(1/gamma)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    out = np.clip(np.asarray(img, dtype=np.float32), 0.0, 1.0)
    if gamma == 1.0:
        return out
    return np.power(out, np.float32(1.0 / gamma))


def bilinear_resample(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resample with half-pixel-centered bilinear interpolation.

    Destination pixel centers map to source coordinates
    ``(i + 0.5) * in/out - 0.5``, clamped at the edges. A same-size call
    returns a bit-exact copy; constant images stay constant; output values
    never leave the input value range (convex weights).
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be >= 1, got {out_w}x{out_h}")
    img = np.asarray(img)
    h, w = img.shape[:2]
    if out_w == w and out_h == h:
        return img.copy()

    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)

    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[None, :]
    fy = (ys - y0)[:, None]
    if img.ndim == 3:
        fx = fx[:, :, None]
        fy = fy[:, :, None]

    r0 = img[y0]
    r1 = img[y1]
    top = r0[:, x0] * (1.0 - fx) + r0[:, x1] * fx
    bot = r1[:, x0] * (1.0 - fx) + r1[:, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out.astype(img.dtype if img.dtype == np.float64 else np.float32)


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 709 luminance of a linear RGB image, as an (h, w) float32 plane."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"luminance expects an (h, w, 3) image, got {img.shape}")
    return (img.astype(np.float64) @ LUMA_WEIGHTS).astype(np.float32)


# ---------------------------------------------------------------------------
# Tensor file format: b"FLT1" | ndim u32 | dims u32 each | float32 LE payload.
# The cross-component interchange format; round trips are bit-exact.
# ---------------------------------------------------------------------------

MAX_DIM = 2**31  # guards against nonsense headers allocating terabytes


def tensor_bytes(arr: np.ndarray) -> bytes:
    a = np.ascontiguousarray(arr, dtype=np.float32)
    header = MAGIC + struct.pack("<I", a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    return header + a.astype("<f4", copy=False).tobytes()


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise TensorFormatError("file shorter than the 8-byte header", len(buf))
    if buf[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", 0)
    (ndim,) = struct.unpack("<I", buf[4:8])
    if ndim == 0 or ndim > 32:
        raise TensorFormatError(f"unreasonable ndim {ndim}", 4)
    dims_end = 8 + 4 * ndim
    if len(buf) < dims_end:
        raise TensorFormatError("truncated dims block", len(buf))
    dims = struct.unpack(f"<{ndim}I", buf[8:dims_end])
    count = 1
    for i, d in enumerate(dims):
        if d == 0 or d > MAX_DIM:
            raise TensorFormatError(f"dim {i} out of range: {d}", 8 + 4 * i)
        count *= d
        if count > 2**40:
            raise TensorFormatError("dim product overflow", 8 + 4 * i)
    expected = 4 * count
    if len(buf) - dims_end != expected:
        raise TensorFormatError(
            f"payload is {len(buf) - dims_end} bytes, expected {expected}",
            dims_end,
        )
    flat = np.frombuffer(buf, dtype="<f4", offset=dims_end)
    return flat.reshape(dims).astype(np.float32, copy=True)


def write_tensor(path, arr: np.ndarray) -> None:
    """Write ``arr`` as a tensor file (atomic: temp file + rename)."""
    atomic_write_bytes(path, tensor_bytes(arr))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return tensor_from_bytes(f.read())


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# PNG import/export (8- and 16-bit). Encoded files are linearized on read with
# a fixed gamma of 2.2 unless the caller supplies one.
# ---------------------------------------------------------------------------


def read_png(path, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Read a PNG and return a linear float32 image.

    8-bit and 16-bit, gray or RGB. ``gamma`` is the decoding exponent;
    pass 1.0 for files already storing linear data.
    """
    raw = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"cannot read image: {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise IOError(f"unsupported PNG sample type {raw.dtype} in {path}")
    encoded = raw.astype(np.float32) / np.float32(scale)
    if encoded.ndim == 3:
        if encoded.shape[2] == 4:
            encoded = encoded[:, :, :3]
        encoded = encoded[:, :, ::-1]  # BGR -> RGB
    return as_image(linearize(encoded, gamma))


def write_png(path, img: np.ndarray, gamma: float = DEFAULT_GAMMA, bits: int = 8) -> None:
    """Encode a linear image with ``gamma`` and write an 8- or 16-bit PNG."""
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    img = as_image(img)
    encoded = delinearize(img, gamma)
    scale = 255.0 if bits == 8 else 65535.0
    dtype = np.uint8 if bits == 8 else np.uint16
    q = np.round(encoded.astype(np.float64) * scale).astype(dtype)
    if q.shape[2] == 3:
        q = q[:, :, ::-1]  # RGB -> BGR
    else:
        q = q[:, :, 0]
    ok, data = cv2.imencode(".png", q)
    if not ok:
        raise IOError(f"PNG encoding failed for {path}")
    atomic_write_bytes(path, data.tobytes())

"""The SSPM1 array file format and 8-bit PGM export.

An SSPM1 file is a single ASCII header line followed by raw data::

    SSPM1 {"dtype":"f64","shape":[2,3],"order":"col-major"}\\n
    <prod(shape) little-endian IEEE-754 doubles in column-major order>
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["ArrayFormatError", "write_array", "read_array", "encode_array",
           "decode_array", "write_pgm", "MAGIC"]

MAGIC = b"SSPM1 "
_DTYPE = np.dtype("<f8")


class ArrayFormatError(ValueError):
    """Raised for malformed SSPM1 content."""


def encode_array(array) -> bytes:
    array = np.asarray(array, dtype=float)
    if not np.all(np.isfinite(array)):
        raise ValueError("only finite arrays can be written")
    header = json.dumps({"dtype": "f64", "shape": list(array.shape), "order": "col-major"},
                        separators=(",", ":"))
    payload = np.asfortranarray(array).astype(_DTYPE, copy=False).tobytes(order="F")
    return MAGIC + header.encode("ascii") + b"\n" + payload


def decode_array(blob: bytes) -> np.ndarray:
    if not blob.startswith(MAGIC):
        raise ArrayFormatError("bad magic: not an SSPM1 file")
    end = blob.find(b"\n")
    if end < 0:
        raise ArrayFormatError("unterminated SSPM1 header")
    try:
        header = json.loads(blob[len(MAGIC):end].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArrayFormatError(f"unreadable SSPM1 header: {exc}") from None
    if header.get("dtype") != "f64" or header.get("order") != "col-major":
        raise ArrayFormatError(f"unsupported dtype/order in header {header}")
    shape = header.get("shape")
    if not isinstance(shape, list) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise ArrayFormatError(f"invalid shape {shape!r}")
    payload = blob[end + 1:]
    expected = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
    if len(payload) != expected:
        raise ArrayFormatError(f"payload holds {len(payload)} bytes but shape {shape} "
                               f"needs {expected}")
    flat = np.frombuffer(payload, dtype=_DTYPE)
    return np.array(flat.reshape(shape, order="F"), dtype=float)


def write_array(path, array) -> None:
    Path(path).write_bytes(encode_array(array))


def read_array(path) -> np.ndarray:
    return decode_array(Path(path).read_bytes())


def write_pgm(path, image) -> None:
    """Write a 2-D nonnegative map as a binary (P5) 8-bit PGM, max-normalized."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("PGM export needs a 2-D image")
    peak = image.max(initial=0.0)
    scaled = np.clip(image, 0, None) / peak if peak > 0 else np.zeros_like(image)
    pixels = np.round(scaled * 255).astype(np.uint8)
    rows, cols = pixels.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes())

"""Raw binary tensor container.

One tensor per file: an 8-byte magic "THERMFM1", a 4-byte little-endian
unsigned dim count, one 8-byte little-endian unsigned size per dimension,
then the payload as little-endian 32-bit floats in row-major order
(outermost dimension first). Readable from any language without a
serialization library.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"THERMFM1"
MAX_NDIM = 8


def write_tensor(path: str | Path, data: np.ndarray) -> None:
    """Write a tensor atomically (temp file + rename); stored as float32."""
    path = Path(path)
    arr = np.ascontiguousarray(data, dtype="<f4")
    header = MAGIC + struct.pack("<I", arr.ndim)
    header += b"".join(struct.pack("<Q", s) for s in arr.shape)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(arr.tobytes())
    os.replace(tmp, path)


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor, rejecting wrong magic, foreign byte order, truncation."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read tensor file {path}: {exc}") from exc

    if len(blob) < len(MAGIC) + 4:
        raise FormatError(f"{path}: truncated header")
    if blob[:len(MAGIC)] != MAGIC:
        raise FormatError(
            f"{path}: bad magic {blob[:len(MAGIC)]!r}, not a {MAGIC.decode()} "
            "tensor file"
        )
    (ndim,) = struct.unpack("<I", blob[len(MAGIC):len(MAGIC) + 4])
    if not 1 <= ndim <= MAX_NDIM:
        raise FormatError(
            f"{path}: implausible dim count {ndim}; header corrupt or written "
            "with foreign byte order"
        )
    dims_end = len(MAGIC) + 4 + 8 * ndim
    if len(blob) < dims_end:
        raise FormatError(f"{path}: truncated dimension list")
    shape = struct.unpack(f"<{ndim}Q", blob[len(MAGIC) + 4:dims_end])
    count = 1
    for s in shape:
        if s == 0 or s > 2 ** 32:
            raise FormatError(
                f"{path}: implausible dimension {s}; header corrupt or "
                "written with foreign byte order"
            )
        count *= s
    expected = dims_end + 4 * count
    if len(blob) < expected:
        raise FormatError(
            f"{path}: truncated payload ({len(blob)} bytes, expected "
            f"{expected} for shape {shape})"
        )
    if len(blob) > expected:
        raise FormatError(
            f"{path}: {len(blob) - expected} trailing bytes after payload"
        )
    arr = np.frombuffer(blob[dims_end:], dtype="<f4").reshape(shape)
    return arr.astype(np.float32, copy=True)

"""The TNSR binary tensor format.

Layout: ``b"TNSR"``, u32 rank, ``rank`` u64 dimensions, then the row-major
payload as little-endian float64. All integers are little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"TNSR"


def dumps(array) -> bytes:
    arr = np.ascontiguousarray(getattr(array, "data", array), dtype="<f8")
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + arr.tobytes(order="C")


def loads(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise FormatError("not a TNSR file (bad magic)")
    if len(buf) < 8:
        raise FormatError("truncated TNSR header")
    (rank,) = struct.unpack_from("<I", buf, 4)
    start = 8 + 8 * rank
    if len(buf) < start:
        raise FormatError("truncated TNSR header")
    shape = struct.unpack_from(f"<{rank}Q", buf, 8)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    if len(buf) != start + 8 * count:
        raise FormatError(f"payload has {len(buf) - start} bytes, expected {8 * count} for shape {shape}")
    return np.frombuffer(buf, dtype="<f8", offset=start).astype(np.float64).reshape(shape)


def save(path, array) -> None:
    Path(path).write_bytes(dumps(array))


def load(path) -> np.ndarray:
    return loads(Path(path).read_bytes())

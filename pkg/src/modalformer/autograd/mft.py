"""MFT1 tensor files.

Layout: magic ``MFT1``, u32 LE rank, rank x u32 LE dims, u8 dtype tag
(0 = f32, 1 = f64), then the raw little-endian values in row-major order.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Union

import numpy as np

MAGIC = b"MFT1"
_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}

PathLike = Union[str, os.PathLike]


class MFTFormatError(ValueError):
    pass


def encode(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _TAGS:
        raise MFTFormatError(f"unsupported dtype {arr.dtype}")
    tag = _TAGS[arr.dtype]
    head = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape) + struct.pack("<B", tag)
    return head + np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()


def decode(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise MFTFormatError("bad magic, not an MFT1 file")
    (rank,) = struct.unpack_from("<I", buf, 4)
    dims = struct.unpack_from(f"<{rank}I", buf, 8)
    off = 8 + 4 * rank
    (tag,) = struct.unpack_from("<B", buf, off)
    if tag not in _DTYPES:
        raise MFTFormatError(f"unknown dtype tag {tag}")
    dt = _DTYPES[tag]
    count = int(np.prod(dims, dtype=np.int64))
    body = buf[off + 1:]
    if len(body) != count * dt.itemsize:
        raise MFTFormatError(f"payload has {len(body)} bytes, expected {count * dt.itemsize}")
    return np.frombuffer(body, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))


def save(path: PathLike, arr: np.ndarray) -> None:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(arr))
    os.replace(tmp, path)


def load(path: PathLike) -> np.ndarray:
    return decode(Path(path).read_bytes())

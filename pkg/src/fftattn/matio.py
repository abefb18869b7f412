"""Binary matrix interchange format for cross-implementation checks.

Layout (little-endian throughout):

    bytes 0..3    magic "TATT"
    byte  4       format version, currently 1
    byte  5       dtype tag, 1 = float64
    bytes 6..7    zero padding
    bytes 8..15   row count  (uint64)
    bytes 16..23  column count (uint64)
    bytes 24..    rows*cols float64 payload, row-major
"""

from __future__ import annotations

import struct
from os import PathLike
from typing import BinaryIO, Union

import numpy as np

from .errors import ShapeError

MAGIC = b"TATT"
VERSION = 1
DTYPE_FLOAT64 = 1

_HEADER = struct.Struct("<4sBB2xQQ")

PathOrFile = Union[str, PathLike, BinaryIO]


def write_matrix(dest: PathOrFile, m: np.ndarray) -> None:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"interchange format stores 2-D matrices, got ndim={m.ndim}")
    header = _HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT64, m.shape[0], m.shape[1])
    payload = np.ascontiguousarray(m, dtype="<f8").tobytes()
    if hasattr(dest, "write"):
        dest.write(header)
        dest.write(payload)
    else:
        with open(dest, "wb") as fh:
            fh.write(header)
            fh.write(payload)


def read_matrix(src: PathOrFile) -> np.ndarray:
    if hasattr(src, "read"):
        raw = src.read()
    else:
        with open(src, "rb") as fh:
            raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated matrix file: header incomplete")
    magic, version, dtype, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ValueError(f"unsupported format version {version}")
    if dtype != DTYPE_FLOAT64:
        raise ValueError(f"unsupported dtype tag {dtype}")
    expected = _HEADER.size + rows * cols * 8
    if len(raw) != expected:
        raise ValueError(f"payload size mismatch: have {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return data.reshape(rows, cols).astype(np.float64)

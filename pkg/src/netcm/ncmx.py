"""NCMX binary matrix files.

Layout: magic bytes ``NCMX``, version u32 = 1, rows u64, cols u64, then
rows*cols complex entries as little-endian IEEE-754 f64 (real, imaginary)
pairs in row-major order.  All integers are little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NCMX"
VERSION = 1

_HEADER = struct.Struct("<4sIQQ")


class NcmxError(ValueError):
    """Malformed or truncated NCMX data."""


def write_matrix(path, matrix) -> None:
    """Write a complex matrix to ``path`` in NCMX format (atomically)."""
    m = np.ascontiguousarray(np.asarray(matrix, dtype=complex))
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, m.shape[0], m.shape[1]))
        fh.write(m.astype("<c16").tobytes())
    tmp.replace(path)


def read_matrix(path) -> np.ndarray:
    """Read a complex matrix from an NCMX file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise NcmxError(f"{path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise NcmxError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise NcmxError(f"{path}: unsupported version {version}")
    need = _HEADER.size + 16 * rows * cols
    if len(data) != need:
        raise NcmxError(f"{path}: expected {need} bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    return flat.astype(complex).reshape(rows, cols)

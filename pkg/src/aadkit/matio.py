"""Binary matrix interchange format.

Layout: magic b"AADM", format version u32 LE, rows u64 LE, cols u64 LE,
then rows*cols float32 LE in row-major order. 24-byte header, bit-exact
across platforms and languages.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

MAGIC = b"AADM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
HEADER_BYTES = _HEADER.size  # 24

# Guard against absurd headers before allocating (1 G entries ~ 4 GB).
_MAX_ENTRIES = 1 << 30


def _as_f32(m: np.ndarray, allow_nan: bool) -> np.ndarray:
    arr = np.asarray(m)
    if arr.ndim != 2:
        raise ValidationError(f"matrix must be 2-D, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if not allow_nan and not np.isfinite(arr).all():
        raise ValidationError("matrix contains non-finite values")
    if allow_nan and np.isinf(arr).any():
        raise ValidationError("matrix contains infinities (only NaN is maskable)")
    return arr


def write_matrix(m: np.ndarray, destination: BinaryIO | str | Path,
                 allow_nan: bool = False) -> int:
    """Write a matrix; returns total bytes written (24 + 4*rows*cols)."""
    arr = _as_f32(m, allow_nan)
    rows, cols = arr.shape
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as fh:
            return write_matrix(arr, fh, allow_nan=allow_nan)
    written = 0
    try:
        destination.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        written = HEADER_BYTES
        destination.write(arr.tobytes(order="C"))
        written += 4 * rows * cols
    except OSError as exc:
        raise OSError(f"write failed at byte offset {written}: {exc}") from exc
    return written


def write_matrix_atomic(m: np.ndarray, path: str | Path, allow_nan: bool = False) -> int:
    """Write via a temp file + rename so readers never see partial output."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    n = write_matrix(m, tmp, allow_nan=allow_nan)
    os.replace(tmp, path)
    return n


def read_matrix(source: BinaryIO | str | Path, allow_nan: bool = False) -> np.ndarray:
    """Read back a matrix as float32; exact inverse of write_matrix."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        with open(path, "rb") as fh:
            arr = _read_stream(fh, allow_nan, total_size=path.stat().st_size)
        return arr
    return _read_stream(source, allow_nan, total_size=None)


def _read_stream(fh: BinaryIO, allow_nan: bool, total_size: int | None) -> np.ndarray:
    header = fh.read(HEADER_BYTES)
    if len(header) < HEADER_BYTES:
        raise CorruptionError(
            f"truncated header: expected {HEADER_BYTES} bytes, got {len(header)}")
    magic, version, rows, cols = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    if rows * cols > _MAX_ENTRIES:
        raise CorruptionError(f"header claims {rows}x{cols} entries, refusing to allocate")
    expected = 4 * rows * cols
    if total_size is not None and total_size != HEADER_BYTES + expected:
        raise CorruptionError(
            f"payload size mismatch: expected {expected} data bytes, "
            f"got {total_size - HEADER_BYTES}")
    payload = fh.read(expected)
    if len(payload) != expected:
        raise CorruptionError(
            f"truncated payload: expected {expected} data bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    if not allow_nan and not np.isfinite(arr).all():
        raise ValidationError("matrix contains non-finite values (pass allow_nan to permit NaN)")
    if allow_nan and np.isinf(arr).any():
        raise ValidationError("matrix contains infinities (only NaN is maskable)")
    return arr

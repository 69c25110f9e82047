"""Minimal writer for the AADM matrix interchange format.

Deliberately standalone (the format is the contract between this exporter
and the decoding pipeline): magic "AADM", version u32=1, rows u64, cols
u64, float32 row-major, all little-endian.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIQQ")


def write_matrix(m: np.ndarray, path: str | Path) -> int:
    arr = np.ascontiguousarray(m, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("matrix contains non-finite values")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(b"AADM", 1, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))
    os.replace(tmp, path)
    return _HEADER.size + 4 * arr.size

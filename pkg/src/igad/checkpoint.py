"""Binary named-tensor archives for checkpoints.

Layout (all little-endian):
    magic   4 bytes  b"IGT1"
    version 1 byte   (currently 1)
    count   uint32
    per tensor:
        name_len uint16, name utf-8 bytes,
        rows uint32, cols uint32,
        rows*cols float64 values, row-major.

Values are always stored as float64 regardless of runtime precision, so a
checkpoint round-trips bit-exactly in the default (float64) configuration.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"IGT1"
VERSION = 1


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.ndim != 2:
            raise ValueError(f"tensor {name!r} must be 1-D or 2-D, got {arr.ndim}-D")
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise ValueError("tensor name too long")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<II", a.shape[0], a.shape[1]))
        chunks.append(a.tobytes(order="C"))
    path.write_bytes(b"".join(chunks))


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise DataError(f"truncated checkpoint {path} at byte {off}")
        out = raw[off:off + n]
        off += n
        return out

    if take(4) != MAGIC:
        raise DataError(f"{path} is not a tensor archive (bad magic)")
    (version,) = struct.unpack("<B", take(1))
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    (count,) = struct.unpack("<I", take(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        rows, cols = struct.unpack("<II", take(8))
        data = np.frombuffer(take(rows * cols * 8), dtype="<f8")
        if name in out:
            raise DataError(f"duplicate tensor name {name!r} in {path}")
        out[name] = data.reshape(rows, cols).astype(np.float64)
    if off != len(raw):
        raise DataError(f"trailing bytes in checkpoint {path}")
    return out

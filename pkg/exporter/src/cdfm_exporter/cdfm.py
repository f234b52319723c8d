"""CDFM v1 writer (and a reader for verification).

Byte layout, everything little-endian::

    magic b"CDFM" | version u16=1 | patch_size u16 | rows u32 | cols u32
    | channels u32 | image_height u32 | image_width u32 | effective_height u32
    | effective_width u32 | resolution_level u16 | reserved u16=0
    | rows*cols*channels float32, index ((row*cols)+col)*channels + channel

``effective_height``/``effective_width`` record the pixel extent covered by
the stored grid: ceil(image dim / patch_size) * patch_size.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CDFM"
VERSION = 1
HEADER = struct.Struct("<4sHHIIIIIIIHH")


@dataclass(frozen=True)
class GridRecord:
    """One exported feature grid plus its geometry header."""

    data: np.ndarray  # (rows, cols, channels) float32
    patch_size: int
    image_height: int
    image_width: int
    resolution_level: int

    @property
    def effective_height(self) -> int:
        return math.ceil(self.image_height / self.patch_size) * self.patch_size

    @property
    def effective_width(self) -> int:
        return math.ceil(self.image_width / self.patch_size) * self.patch_size


def encode(record: GridRecord) -> bytes:
    data = np.ascontiguousarray(record.data, dtype="<f4")
    if data.ndim != 3 or min(data.shape) < 1:
        raise ValueError(f"grid must be rows x cols x channels, got {data.shape}")
    if not np.isfinite(data).all():
        raise ValueError("grid contains non-finite values")
    rows, cols, channels = data.shape
    expect = (
        math.ceil(record.effective_height / record.patch_size),
        math.ceil(record.effective_width / record.patch_size),
    )
    if expect != (rows, cols):
        raise ValueError(f"grid {rows}x{cols} inconsistent with header {expect}")
    header = HEADER.pack(
        MAGIC, VERSION, record.patch_size, rows, cols, channels,
        record.image_height, record.image_width,
        record.effective_height, record.effective_width,
        record.resolution_level, 0,
    )
    return header + data.tobytes()


def write_atomic(record: GridRecord, path) -> Path:
    """Serialize to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(record))
    os.replace(tmp, path)
    return path


def read(path) -> GridRecord:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    (_m, version, patch_size, rows, cols, channels,
     image_h, image_w, eff_h, eff_w, level, _r) = HEADER.unpack_from(blob)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    payload = blob[HEADER.size:]
    expected = rows * cols * channels * 4
    if len(payload) != expected:
        raise ValueError(f"{path}: payload {len(payload)} != expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols, channels).copy()
    record = GridRecord(
        data=data, patch_size=patch_size, image_height=image_h,
        image_width=image_w, resolution_level=level,
    )
    if (record.effective_height, record.effective_width) != (eff_h, eff_w):
        raise ValueError(f"{path}: effective dims {eff_h}x{eff_w} inconsistent")
    return record

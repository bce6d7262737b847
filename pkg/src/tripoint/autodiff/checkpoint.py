"""GFCK checkpoint files.

Layout (little-endian): magic ``GFCK``, uint32 version (1), uint32 tensor
count, then per tensor: uint16 name length, UTF-8 name, uint8 ndim,
ndim x uint32 dims, float32 data.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"GFCK"
VERSION = 1


def encode(tensors) -> bytes:
    items = list(tensors.items())
    buf = bytearray(MAGIC)
    buf += struct.pack("<II", VERSION, len(items))
    for name, arr in items:
        arr = np.asarray(arr)
        raw_name = name.encode("utf-8")
        buf += struct.pack("<H", len(raw_name)) + raw_name
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(buf)


def decode(raw: bytes) -> "OrderedDict[str, np.ndarray]":
    if raw[:4] != MAGIC:
        raise FormatError("not a GFCK checkpoint")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off = 12
    out = OrderedDict()
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off : off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", raw, off)
            off += 1
            dims = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            size = int(np.prod(dims)) if ndim else 1
            arr = np.frombuffer(raw, dtype="<f4", count=size, offset=off).reshape(dims)
            off += 4 * size
            out[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from None
    if off != len(raw):
        raise FormatError(f"{len(raw) - off} trailing bytes in checkpoint")
    return out


def save(path, tensors) -> None:
    Path(path).write_bytes(encode(tensors))


def load(path) -> "OrderedDict[str, np.ndarray]":
    return decode(Path(path).read_bytes())

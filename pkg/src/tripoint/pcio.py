"""Point cloud file formats.

``.xyz``  one point per line, three floats separated by single spaces, LF endings.
``.pcb``  magic ``PCB1``, little-endian uint32 count, then count*3 float32.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, UnreadableFile
from .geometry import as_cloud

PCB_MAGIC = b"PCB1"
CLOUD_SUFFIXES = (".xyz", ".pcb")


def write_xyz(path, points) -> None:
    pts = as_cloud(points)
    lines = [" ".join(repr(float(v)) for v in row) for row in pts]
    Path(path).write_bytes(("\n".join(lines) + ("\n" if lines else "")).encode("ascii"))


def read_xyz(path) -> np.ndarray:
    text = Path(path).read_text(encoding="ascii")
    rows = []
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        parts = line.split(" ")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return as_cloud(np.array(rows, dtype=np.float64).reshape(-1, 3))


def write_pcb(path, points) -> None:
    pts = as_cloud(points).astype("<f4")
    Path(path).write_bytes(PCB_MAGIC + struct.pack("<I", len(pts)) + pts.tobytes())


def read_pcb(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != PCB_MAGIC or len(raw) < 8:
        raise FormatError(f"{path}: not a PCB1 file")
    (count,) = struct.unpack_from("<I", raw, 4)
    body = raw[8:]
    if len(body) != count * 12:
        raise FormatError(f"{path}: expected {count * 12} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(count, 3).astype(np.float64)


def read_cloud(path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix == ".xyz":
            return read_xyz(path)
        if path.suffix == ".pcb":
            return read_pcb(path)
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    raise FormatError(f"{path}: unsupported suffix {path.suffix!r}")


def write_cloud(path, points) -> None:
    path = Path(path)
    if path.suffix == ".pcb":
        write_pcb(path, points)
    else:
        write_xyz(path, points)

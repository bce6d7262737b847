"""Canonical coordinate maps (CCMs) rendered under three orthographic views.

A CCM is an image whose pixel color is the canonical ``(x, y, z)`` of the
nearest point projecting onto that pixel. Rendering the same normalized
cloud from three axis-aligned views gives a tri-plane set in which any point
visible in several views carries the very same color in each of them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, NotNormalized
from .geometry import as_cloud

BACKGROUND = 0.0
NORMALIZED_TOL = 1e-6
CCM_MAGIC = b"CCM1"


@dataclass(frozen=True)
class CameraPose:
    """Rotation whose rows are the camera right, up and forward axes."""

    name: str
    rotation: np.ndarray

    def project(self, points: np.ndarray) -> np.ndarray:
        """Camera-space coordinates (u, v, depth), rotated about the cube center.

        Written as ``p R^T + t`` so that for axis-aligned views each output is
        a coordinate or one minus a coordinate, with no extra rounding.
        """
        shift = 0.5 - 0.5 * self.rotation.sum(axis=1)
        return points @ self.rotation.T + shift

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[2]


_VIEWS = (
    # u = x, v = y, depth = z
    ("front", ((1, 0, 0), (0, 1, 0), (0, 0, 1))),
    # u = 1 - z, v = y, depth = x
    ("right", ((0, 0, -1), (0, 1, 0), (1, 0, 0))),
    # u = x, v = 1 - z, depth = y
    ("top", ((1, 0, 0), (0, 0, -1), (0, 1, 0))),
)


def canonical_views() -> list[CameraPose]:
    """The three fixed orthographic views: front, right and top."""
    return [CameraPose(name, np.array(rot, dtype=np.float64)) for name, rot in _VIEWS]


@dataclass
class Ccm:
    pixels: np.ndarray  # (H, W, 3) float32
    mask: np.ndarray  # (H, W) bool
    pose: CameraPose

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _check_normalized(pts: np.ndarray) -> None:
    if len(pts) and (pts.min() < -NORMALIZED_TOL or pts.max() > 1.0 + NORMALIZED_TOL):
        raise NotNormalized(
            f"coordinates span [{pts.min():.6g}, {pts.max():.6g}], expected [0, 1]"
        )


def pixel_coords(points, pose: CameraPose, h: int, w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row, column and depth of each point; image +y points up."""
    cam = pose.project(np.asarray(points, dtype=np.float64))
    col = np.clip(np.floor(cam[:, 0] * w), 0, w - 1).astype(np.int64)
    row = np.clip(np.floor((1.0 - cam[:, 1]) * h), 0, h - 1).astype(np.int64)
    return row, col, cam[:, 2]


def zbuffer_winners(points, pose: CameraPose, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat pixel ids and the index of the point that owns each covered pixel.

    Nearest depth wins; equal depths go to the lowest point index.
    """
    row, col, depth = pixel_coords(points, pose, h, w)
    flat = row * w + col
    order = np.lexsort((np.arange(len(flat)), depth, flat))
    flat_sorted = flat[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    return flat_sorted[first], order[first]


def render_ccm(points, pose: CameraPose, h: int, w: int) -> Ccm:
    """Render one CCM of a cloud already normalized to the unit cube."""
    if h < 1 or w < 1:
        raise ValueError("image size must be positive")
    pts = as_cloud(points)
    _check_normalized(pts)
    pixels = np.full((h * w, 3), BACKGROUND, dtype=np.float32)
    mask = np.zeros(h * w, dtype=bool)
    if len(pts):
        pix, owner = zbuffer_winners(pts, pose, h, w)
        pixels[pix] = np.clip(pts[owner], 0.0, 1.0).astype(np.float32)
        mask[pix] = True
    return Ccm(pixels.reshape(h, w, 3), mask.reshape(h, w), pose)


def render_triplane(points, h: int, w: int) -> list[Ccm]:
    return [render_ccm(points, pose, h, w) for pose in canonical_views()]


def triplane_array(maps: list[Ccm]) -> np.ndarray:
    """Stack a tri-plane set into a ``(3, H, W, 3)`` float32 array."""
    return np.stack([m.pixels for m in maps])


def write_ccm(path, ccm: Ccm) -> None:
    h, w = ccm.height, ccm.width
    buf = bytearray(CCM_MAGIC)
    buf += struct.pack("<II", h, w)
    buf += ccm.pose.rotation.astype("<f4").tobytes()
    buf += ccm.pixels.astype("<f4").tobytes()
    buf += ccm.mask.astype(np.uint8).tobytes()
    Path(path).write_bytes(bytes(buf))


def read_ccm(path, name: str = "") -> Ccm:
    raw = Path(path).read_bytes()
    if raw[:4] != CCM_MAGIC:
        raise FormatError(f"{path}: not a CCM1 file")
    h, w = struct.unpack_from("<II", raw, 4)
    expected = 12 + 36 + h * w * 12 + h * w
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    off = 12
    rot = np.frombuffer(raw, "<f4", 9, off).reshape(3, 3).astype(np.float64)
    off += 36
    pixels = np.frombuffer(raw, "<f4", h * w * 3, off).reshape(h, w, 3).copy()
    off += h * w * 12
    mask = np.frombuffer(raw, np.uint8, h * w, off).reshape(h, w).astype(bool)
    return Ccm(pixels, mask, CameraPose(name or Path(path).stem, rot))


def write_ppm(path, ccm: Ccm) -> None:
    """8-bit binary PPM preview; background pixels are black."""
    img = np.round(255.0 * np.clip(ccm.pixels, 0.0, 1.0)).astype(np.uint8)
    img[~ccm.mask] = 0
    header = f"P6\n{ccm.width} {ccm.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())

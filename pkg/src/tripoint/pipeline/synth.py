"""Parametric shapes, uniform surface sampling and half-space occlusion.

Ground truth is sampled uniformly by area on a closed surface and mapped into
the unit cube (largest side 1, bbox min at the origin). The partial cloud is
the part of the ground truth on one side of a random plane, thinned by FPS to
the requested input count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateOcclusion
from ..geometry import fps_indices, normalize_canonical
from .rng import derive_rng

FAMILIES = ("sphere", "box", "cylinder", "torus", "union")


@dataclass(frozen=True)
class SynthSpec:
    """One synthetic sample: a shape family and how to occlude it.

    ``union`` joins ``parts`` (two primitive families) side by side with
    overlap; only the outer boundary of the union is sampled.
    ``plane_normal`` fixes the occluding plane's normal instead of drawing it.
    """

    family: str = "union"
    gt_points: int = 2048
    partial_points: int = 512
    occlusion: float = 0.5
    jitter: float = 0.0
    parts: tuple = ("sphere", "box")
    plane_normal: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown shape family {self.family!r}; choose from {FAMILIES}")
        if self.family == "union":
            if len(self.parts) != 2 or any(p not in FAMILIES[:4] for p in self.parts):
                raise ValueError(f"union needs two primitive parts, got {self.parts}")
        if self.gt_points < 1 or self.partial_points < 1:
            raise ValueError("point counts must be positive")
        if not 0.0 < self.occlusion < 1.0:
            raise ValueError(f"occlusion fraction must lie in (0, 1), got {self.occlusion}")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")


# ----------------------------------------------------------------- primitives
# Each primitive knows its surface area, how to sample its surface and how to
# test whether points lie strictly inside its solid.


class Sphere:
    def __init__(self, center=(0.0, 0.0, 0.0), radius=0.5):
        self.center, self.radius = np.asarray(center, dtype=float), float(radius)

    def area(self) -> float:
        return 4 * math.pi * self.radius**2

    def sample(self, rng, n: int) -> np.ndarray:
        v = rng.standard_normal((n, 3))
        return self.center + self.radius * v / np.linalg.norm(v, axis=1, keepdims=True)

    def inside(self, p: np.ndarray) -> np.ndarray:
        return np.linalg.norm(p - self.center, axis=1) < self.radius


class Box:
    def __init__(self, center=(0.0, 0.0, 0.0), half=(0.4, 0.3, 0.25)):
        self.center, self.half = np.asarray(center, dtype=float), np.asarray(half, dtype=float)

    def _faces(self):
        hx, hy, hz = self.half
        # (axis fixed, area); each axis has two faces
        return [(0, 4 * hy * hz), (1, 4 * hx * hz), (2, 4 * hx * hy)]

    def area(self) -> float:
        return 2 * sum(a for _, a in self._faces())

    def sample(self, rng, n: int) -> np.ndarray:
        faces = self._faces()
        w = np.array([a for _, a in faces])
        axis = rng.choice(3, size=n, p=w / w.sum())
        pts = rng.uniform(-1.0, 1.0, size=(n, 3))
        side = rng.choice([-1.0, 1.0], size=n)
        pts[np.arange(n), axis] = side
        return self.center + pts * self.half

    def inside(self, p: np.ndarray) -> np.ndarray:
        return np.all(np.abs(p - self.center) < self.half, axis=1)


class Cylinder:
    """Closed cylinder along z."""

    def __init__(self, center=(0.0, 0.0, 0.0), radius=0.3, height=0.8):
        self.center, self.radius, self.height = np.asarray(center, dtype=float), float(radius), float(height)

    def area(self) -> float:
        return 2 * math.pi * self.radius * self.height + 2 * math.pi * self.radius**2

    def sample(self, rng, n: int) -> np.ndarray:
        r, h = self.radius, self.height
        lateral = 2 * math.pi * r * h
        on_side = rng.random(n) < lateral / self.area()
        theta = rng.uniform(0, 2 * math.pi, n)
        # caps: radius ~ sqrt(U) for uniform density on a disc
        rad = np.where(on_side, r, r * np.sqrt(rng.random(n)))
        z = np.where(on_side, rng.uniform(-h / 2, h / 2, n), rng.choice([-h / 2, h / 2], size=n))
        return self.center + np.stack([rad * np.cos(theta), rad * np.sin(theta), z], axis=1)

    def inside(self, p: np.ndarray) -> np.ndarray:
        q = p - self.center
        return (np.hypot(q[:, 0], q[:, 1]) < self.radius) & (np.abs(q[:, 2]) < self.height / 2)


class Torus:
    """Torus around the z axis with tube radius ``minor``."""

    def __init__(self, center=(0.0, 0.0, 0.0), major=0.35, minor=0.12):
        self.center, self.major, self.minor = np.asarray(center, dtype=float), float(major), float(minor)

    def area(self) -> float:
        return 4 * math.pi**2 * self.major * self.minor

    def sample(self, rng, n: int) -> np.ndarray:
        R, r = self.major, self.minor
        out = []
        need = n
        while need > 0:
            # density of (u, v) is proportional to R + r cos v; rejection keeps it uniform on the surface
            u = rng.uniform(0, 2 * math.pi, 2 * need)
            v = rng.uniform(0, 2 * math.pi, 2 * need)
            keep = rng.random(2 * need) < (R + r * np.cos(v)) / (R + r)
            u, v = u[keep][:need], v[keep][:need]
            ring = R + r * np.cos(v)
            out.append(np.stack([ring * np.cos(u), ring * np.sin(u), r * np.sin(v)], axis=1))
            need -= len(u)
        return self.center + np.concatenate(out)

    def inside(self, p: np.ndarray) -> np.ndarray:
        q = p - self.center
        ring = np.hypot(q[:, 0], q[:, 1]) - self.major
        return np.hypot(ring, q[:, 2]) < self.minor


def primitive(family: str, center=(0.0, 0.0, 0.0)):
    return {"sphere": Sphere, "box": Box, "cylinder": Cylinder, "torus": Torus}[family](center=center)


def build_shape(spec: SynthSpec) -> list:
    if spec.family != "union":
        return [primitive(spec.family)]
    a, b = spec.parts
    return [primitive(a, (-0.25, 0.0, 0.0)), primitive(b, (0.25, 0.05, 0.0))]


def sample_surface(parts: list, n: int, rng) -> np.ndarray:
    """``n`` points uniform by area on the boundary of the union of ``parts``.

    Points of one part that fall inside another part's solid are interior to
    the union and are rejected; sampling repeats until ``n`` survive.
    """
    areas = np.array([p.area() for p in parts])
    chunks, have = [], 0
    while have < n:
        counts = rng.multinomial(2 * (n - have) + 16, areas / areas.sum())
        for i, (part, c) in enumerate(zip(parts, counts)):
            pts = part.sample(rng, int(c))
            for j, other in enumerate(parts):
                if j != i:
                    pts = pts[~other.inside(pts)]
            chunks.append(pts)
            have += len(pts)
    pts = np.concatenate(chunks)
    return pts[rng.permutation(len(pts))[:n]]


def occlude(gt: np.ndarray, keep: float, normal: np.ndarray) -> np.ndarray:
    """Points whose projection on ``normal`` is within the lowest ``keep`` fraction."""
    if len(gt) == 0:
        raise DegenerateOcclusion("nothing to occlude")
    proj = gt @ normal
    cut = np.quantile(proj, keep)
    mask = proj <= cut
    if not mask.any():
        raise DegenerateOcclusion("occluding plane removed every point")
    return gt[mask]


def synth_generate(spec: SynthSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``(partial, gt)`` in canonical unit-cube coordinates."""
    gt = sample_surface(build_shape(spec), spec.gt_points, derive_rng(seed, "synth.surface"))
    gt, _, _ = normalize_canonical(gt)
    if spec.plane_normal is not None:
        normal = np.asarray(spec.plane_normal, dtype=float)
    else:
        normal = derive_rng(seed, "synth.plane").standard_normal(3)
    norm = np.linalg.norm(normal)
    if norm == 0:
        raise DegenerateOcclusion("occluding plane normal is zero")
    visible = occlude(gt, spec.occlusion, normal / norm)
    n = spec.partial_points
    if len(visible) >= n:
        # the FPS start is seeded, so different seeds thin the same region differently
        partial = visible[fps_indices(visible, n, seed=derive_rng(seed, "synth.fps").integers(2**31))]
    else:
        extra = derive_rng(seed, "synth.pad").choice(len(visible), n - len(visible))
        partial = np.concatenate([visible, visible[extra]])
    if spec.jitter > 0:
        partial = partial + derive_rng(seed, "synth.jitter").normal(0.0, spec.jitter, partial.shape)
    return partial, gt

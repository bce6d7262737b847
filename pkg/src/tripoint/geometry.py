"""Point-set primitives: canonical normalization, FPS, kNN, merge-and-resample.

A point cloud is an ``(N, 3)`` float array. Every routine here is a pure
function; ties are broken by lowest index so results are fully determined by
the input and the seed.
"""

from __future__ import annotations

from collections import OrderedDict
from functools import wraps

import numpy as np

from .errors import BadCount, DegenerateExtent, EmptyCloud, TooFewPoints


def as_cloud(points, dtype=np.float64) -> np.ndarray:
    """Validate and return ``points`` as an ``(N, 3)`` array."""
    arr = np.asarray(points, dtype=dtype)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point cloud contains non-finite coordinates")
    return arr


def bounding_box(points) -> tuple[np.ndarray, np.ndarray]:
    pts = as_cloud(points)
    if len(pts) == 0:
        raise EmptyCloud("bounding box of an empty cloud")
    return pts.min(axis=0), pts.max(axis=0)


def normalize_canonical(points) -> tuple[np.ndarray, float, np.ndarray]:
    """Map a cloud into the unit cube anchored at the origin.

    The largest bounding-box side becomes exactly 1. Returns the normalized
    cloud, the scale ``s`` and the offset (bbox min) such that
    ``normalized = (points - offset) * s``.
    """
    pts = as_cloud(points)
    if len(pts) == 0:
        raise EmptyCloud("cannot normalize an empty cloud")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateExtent("all points coincide; extent is zero")
    # divide rather than multiply by 1/extent so the longest side is exactly 1
    out = (pts - lo) / extent
    return out, 1.0 / extent, lo


def denormalize(points, scale: float, offset) -> np.ndarray:
    return as_cloud(points) / scale + np.asarray(offset, dtype=np.float64)


def anchor_index(points) -> int:
    """Order-independent starting point for FPS: farthest from the centroid.

    Equal distances fall back to the lexicographically largest coordinate,
    so the choice does not depend on storage order.
    """
    pts = np.asarray(points, dtype=np.float64)
    d = ((pts - pts.mean(axis=0)) ** 2).sum(axis=1)
    cand = np.flatnonzero(d == d.max())
    if len(cand) == 1:
        return int(cand[0])
    sub = pts[cand]
    order = np.lexsort((sub[:, 2], sub[:, 1], sub[:, 0]))
    return int(cand[order[-1]])


def fps_indices(points, m: int, seed: int | None = None, start: int | None = None) -> np.ndarray:
    """Indices chosen by farthest point sampling.

    The first index is ``start`` when given, otherwise drawn uniformly from a
    generator seeded with ``seed``. Each later pick maximizes the distance to
    the already-chosen set (``np.argmax`` keeps the lowest index on ties).
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if m < 1 or m > n:
        raise BadCount(f"cannot sample {m} points from {n}")
    if start is None:
        start = int(np.random.default_rng(seed).integers(n))
    idx = np.empty(m, dtype=np.int64)
    idx[0] = start
    mind = ((pts - pts[start]) ** 2).sum(axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(mind))
        idx[i] = nxt
        np.minimum(mind, ((pts - pts[nxt]) ** 2).sum(axis=1), out=mind)
    return idx


def farthest_point_sample(points, m: int, seed: int | None = 0) -> np.ndarray:
    pts = as_cloud(points)
    return pts[fps_indices(pts, m, seed=seed)]


def sq_dist_matrix(a, b) -> np.ndarray:
    """Squared Euclidean distances, accumulated per axis in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = (a[:, None, 0] - b[None, :, 0]) ** 2
    for ax in range(1, a.shape[1]):
        d += (a[:, None, ax] - b[None, :, ax]) ** 2
    return d


def knn_indices(features, k: int) -> np.ndarray:
    """kNN rows for arbitrary-dimension features, self excluded.

    Rows are ordered by distance with index as tie-break (stable sort).
    """
    x = np.asarray(features, dtype=np.float64)
    n = len(x)
    if k < 1 or n <= k:
        raise TooFewPoints(f"need more than k={k} points, got {n}")
    d = sq_dist_matrix(x, x)
    np.fill_diagonal(d, np.inf)
    return smallest_k(d, k)


def smallest_k(d: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the ``k`` smallest entries per row, ordered by (value, index).

    Equivalent to a stable full argsort truncated to ``k``; rows whose
    k-th and (k+1)-th values tie fall back to exactly that.
    """
    n = d.shape[1]
    if k + 1 >= n:
        return np.argsort(d, axis=1, kind="stable")[:, :k]
    part = np.argpartition(d, k, axis=1)[:, : k + 1]
    vals = np.take_along_axis(d, part, axis=1)
    order = np.lexsort((part, vals))
    part = np.take_along_axis(part, order, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)
    out = part[:, :k].copy()
    tied = np.flatnonzero(vals[:, k - 1] == vals[:, k])
    if len(tied):
        out[tied] = np.argsort(d[tied], axis=1, kind="stable")[:, :k]
    return out


def knn_graph(points, k: int) -> np.ndarray:
    """``(N, k)`` neighbor index matrix of a point cloud."""
    return knn_indices(as_cloud(points), k)


def merge_resample(a, b, m: int, seed: int | None = 0, start: int | None = None) -> np.ndarray:
    """Concatenate two clouds and keep ``m`` points chosen by FPS."""
    merged = np.concatenate([as_cloud(a), as_cloud(b)], axis=0)
    if m < 1 or m > len(merged):
        raise BadCount(f"cannot resample {m} points from {len(merged)}")
    return merged[fps_indices(merged, m, seed=seed, start=start)]


def memoize_cloud(fn=None, *, size: int = 8):
    """Cache ``fn(cloud, *args)`` keyed on the cloud's bytes.

    Neighborhood structure of a fixed input is recomputed on every training
    step otherwise. Results are returned as-is, so callers must not mutate them.
    """

    def deco(f):
        cache: OrderedDict = OrderedDict()

        @wraps(f)
        def wrapper(cloud, *args):
            arr = np.ascontiguousarray(cloud)
            key = (arr.shape, arr.dtype.str, arr.tobytes(), args)
            if key in cache:
                cache.move_to_end(key)
                return cache[key]
            out = f(arr, *args)
            cache[key] = out
            if len(cache) > size:
                cache.popitem(last=False)
            return out

        wrapper.cache_clear = cache.clear
        return wrapper

    return deco(fn) if fn is not None else deco

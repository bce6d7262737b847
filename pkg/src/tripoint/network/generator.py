"""Coarse point generator: point and CCM encoders, feature alignment, decoder."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Module, Tensor, parameter
from ..ccm import canonical_views, render_triplane, triplane_array
from ..errors import ConfigMismatch, ShapeMismatch
from ..geometry import anchor_index, fps_indices, memoize_cloud, normalize_canonical, smallest_k, sq_dist_matrix
from .config import ModelConfig
from .layers import MLP, AttentionBlock, Conv2d, Linear, broadcast_rows


@memoize_cloud
def group_neighbors(points: np.ndarray, n_centers: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """FPS centers (order-independent start) and the k nearest points of each center."""
    centers = fps_indices(points, n_centers, start=anchor_index(points))
    d = sq_dist_matrix(points[centers], points)
    return centers, smallest_k(d, k)


class SetAbstraction(Module):
    """Sample centers, group neighbors, shared MLP on (relative xyz, features), max-pool."""

    def __init__(self, n_centers: int, k: int, feat_dim: int, dims, rng):
        self.n_centers = n_centers
        self.k = k
        self.mlp = MLP([3 + feat_dim] + list(dims), rng, final_act=True)

    def __call__(self, xyz: np.ndarray, feats: Tensor | None, dtype):
        centers, nbr = group_neighbors(xyz, self.n_centers, self.k)
        # neighbor-major (k, centers, ...) layout keeps the pooling contiguous
        nbr = nbr.T
        rel = Tensor((xyz[nbr] - xyz[centers][None, :, :]).astype(dtype))
        x = rel if feats is None else ad.concat([rel, ad.gather_rows(feats, nbr)], axis=2)
        return xyz[centers], ad.max_reduce(self.mlp(x), axis=0)


class PointEncoder(Module):
    """Hierarchical set-abstraction encoder producing a ``(1, 2C)`` global vector."""

    def __init__(self, cfg: ModelConfig, rng):
        c = cfg.c
        (n1, k1), (n2, k2) = cfg.sa_levels
        self.n_in = cfg.n_in
        self.sa1 = SetAbstraction(n1, k1, 0, [max(4, c // 2), c], rng)
        self.sa2 = SetAbstraction(n2, k2, c, [c, 2 * c], rng)
        self.glob = MLP([3 + 2 * c, 2 * c, 2 * c], rng, final_act=True)

    def __call__(self, cloud: np.ndarray, dtype) -> Tensor:
        if len(cloud) != self.n_in:
            raise ConfigMismatch(f"point encoder expects {self.n_in} points, got {len(cloud)}")
        xyz1, f1 = self.sa1(cloud, None, dtype)
        xyz2, f2 = self.sa2(xyz1, f1, dtype)
        rel = Tensor((xyz2 - xyz2.mean(axis=0)).astype(dtype))
        g = self.glob(ad.concat([rel, f2], axis=1))
        return ad.max_reduce(g, axis=0, keepdims=True)


class CcmEncoder(Module):
    """Four strided residual stages shared across views, then global average pooling."""

    def __init__(self, c: int, rng):
        widths = [max(4, c // 4), max(4, c // 2), c, c]
        down, res_a, res_b = [], [], []
        c_in = 3
        for w in widths:
            down.append(Conv2d(c_in, w, 3, rng, stride=2))
            res_a.append(Conv2d(w, w, 3, rng))
            res_b.append(Conv2d(w, w, 3, rng))
            c_in = w
        self.down, self.res_a, self.res_b = down, res_a, res_b

    def __call__(self, images: Tensor) -> Tensor:
        if images.ndim != 4 or images.shape[-1] != 3:
            raise ShapeMismatch(f"expected (views, H, W, 3) images, got {images.shape}")
        x = images
        for down, ra, rb in zip(self.down, self.res_a, self.res_b):
            x = ad.relu(down(x))
            x = ad.relu(x + rb(ad.relu(ra(x))))
        return x.mean(axis=(1, 2))


class FeatureAlignment(Module):
    """Fuse the point vector with per-view CCM vectors by pose-aware self-attention.

    Tokens: the point feature projected to width 2C (plus a learned embedding)
    and one token per view, its CCM feature projected C -> 2C plus a linear
    embedding of the flattened 3x3 pose. After attention a per-token MLP and
    a mean over tokens give the fused ``(1, 2C)`` feature; the output is
    ``concat(point_feature, fused)`` of width 4C.
    """

    def __init__(self, cfg: ModelConfig, rng):
        c, d = cfg.c, cfg.width
        self.use_ccm = cfg.use_ccm
        self.use_alignment = cfg.use_alignment
        self.point_proj = Linear(2 * c, d, rng)
        self.point_embed = parameter(rng.normal(0.0, 0.02, (1, d)))
        if cfg.use_ccm:
            self.view_proj = Linear(c, d, rng)
            self.pose_embed = Linear(9, d, rng)
        self.block = AttentionBlock(d, cfg.heads, rng) if cfg.use_alignment else None
        self.mlp = MLP([d, d, d], rng)

    def tokens(self, fp: Tensor, fc: Tensor | None, poses) -> Tensor:
        tok = self.point_proj(fp) + self.point_embed
        if not self.use_ccm or fc is None:
            return tok
        if fc.shape[0] != len(poses):
            raise ShapeMismatch(f"{fc.shape[0]} view features for {len(poses)} poses")
        pose_flat = Tensor(np.stack([p.rotation.reshape(9) for p in poses]).astype(fc.dtype))
        views = self.view_proj(fc) + self.pose_embed(pose_flat)
        return ad.concat([tok, views], axis=0)

    def __call__(self, fp: Tensor, fc: Tensor | None, poses) -> Tensor:
        if fp.ndim != 2 or fp.shape[0] != 1:
            raise ShapeMismatch(f"point feature must be (1, 2C), got {fp.shape}")
        x = self.tokens(fp, fc, poses)
        if self.use_alignment:
            x = self.block(x)
        fused = self.mlp(x).mean(axis=0, keepdims=True)
        return ad.concat([fp, fused], axis=1)


class CoordinateDecoder(Module):
    """Learned queries conditioned on a global vector, self-attention, shared MLP to xyz."""

    def __init__(self, cond_dim: int, width: int, n_out: int, depth: int, heads: int, rng):
        self.n_out = n_out
        self.cond = Linear(cond_dim, width, rng)
        self.queries = parameter(rng.normal(0.0, 1.0, (n_out, width)))
        self.blocks = [AttentionBlock(width, heads, rng) for _ in range(depth)]
        self.head = MLP([width, width, 3], rng)

    def __call__(self, f: Tensor, n_out: int | None = None) -> Tensor:
        n_out = self.n_out if n_out is None else n_out
        if not 1 <= n_out <= self.n_out:
            raise ShapeMismatch(f"decoder holds {self.n_out} queries, asked for {n_out}")
        queries = self.queries if n_out == self.n_out else self.queries[:n_out]
        x = queries + broadcast_rows(self.cond(f), n_out)
        for blk in self.blocks:
            x = blk(x)
        return self.head(x)


class PointGenerator(Module):
    """Partial cloud -> coarse complete cloud ``P0`` and global feature ``F`` (1 x 4C)."""

    def __init__(self, cfg: ModelConfig, rng):
        self.cfg = cfg
        self.point_encoder = PointEncoder(cfg, rng)
        self.ccm_encoder = CcmEncoder(cfg.c, rng) if cfg.use_ccm else None
        self.align = FeatureAlignment(cfg, rng)
        self.decoder = CoordinateDecoder(4 * cfg.c, cfg.width, cfg.n_coarse, cfg.decoder_depth, cfg.heads, rng)
        self.poses = canonical_views()

    def triplane(self, cloud: np.ndarray, dtype) -> Tensor:
        canon, _, _ = normalize_canonical(cloud)
        h, w = self.cfg.ccm_hw
        return Tensor(triplane_array(render_triplane(canon, h, w)).astype(dtype))

    def encode(self, cloud: np.ndarray, dtype) -> dict:
        """Intermediate features keyed by their role; used by tests and ablations."""
        fp = self.point_encoder(cloud, dtype)
        fc = self.ccm_encoder(self.triplane(cloud, dtype)) if self.cfg.use_ccm else None
        f = self.align(fp, fc, self.poses)
        return {"fp": fp, "fc": fc, "f": f}

    def __call__(self, cloud: np.ndarray) -> tuple[Tensor, Tensor]:
        dtype = self.dtype
        feats = self.encode(np.asarray(cloud, dtype=np.float64), dtype)
        return self.decoder(feats["f"]), feats["f"]

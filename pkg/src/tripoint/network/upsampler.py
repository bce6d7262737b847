"""Multi-scale geometry-aware upsampler."""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import Module, Tensor, parameter
from ..errors import ShapeMismatch, TooFewPoints
from ..geometry import knn_indices, memoize_cloud
from .config import ModelConfig
from .layers import MLP, AttentionBlock, Conv1d, Linear, broadcast_rows, chamfer_l2


class EdgeConv(Module):
    """Edge features ``relu(W [x_i, x_j - x_i] + b)`` max-pooled over the kNN set.

    The linear map is split as ``x_i (W_s - W_n) + x_j W_n`` so it runs once
    per point rather than once per edge.
    """

    def __init__(self, c_in: int, c_out: int, k: int, rng):
        self.k = k
        self.self_lin = Linear(c_in, c_out, rng)
        self.nbr_lin = Linear(c_in, c_out, rng, bias=False)

    def __call__(self, x: Tensor, nbr: np.ndarray) -> Tensor:
        p = self.nbr_lin(x)
        center = self.self_lin(x) - p
        edges = ad.gather_rows(p, nbr[:, : self.k].T) + center.reshape(1, center.shape[0], -1)
        # relu is monotone, so pooling first gives the same value and gradient
        return ad.relu(ad.max_reduce(edges, axis=0))


class Inception(Module):
    """Parallel 1-D convolutions over each point's distance-ordered neighbor sequence.

    The sequence for point i is ``[i, nn_1(i), ..., nn_k(i)]``. Each branch
    convolves it with its own kernel size, applies ReLU and max-pools over the
    sequence; branch outputs are concatenated. Because the sequence order is
    defined by distance, the result is equivariant to point permutations.
    """

    def __init__(self, c_in: int, branches, rng):
        self.branches = [Conv1d(c_in, o, k, p, rng) for k, o, p in branches]

    def __call__(self, x: Tensor, seq: np.ndarray) -> Tensor:
        outs = [ad.relu(ad.max_reduce(conv.over_sequences(x, seq), axis=0)) for conv in self.branches]
        return ad.concat(outs, axis=1)


class Pointwise(Module):
    """Inception replacement for ablations: one shared linear layer + ReLU."""

    def __init__(self, c_in: int, c_out: int, rng):
        self.lin = Linear(c_in, c_out, rng)

    def __call__(self, x: Tensor, seq: np.ndarray) -> Tensor:
        return ad.relu(self.lin(x))


class MultiScaleExtractor(Module):
    """Two EdgeConv stages, two inception stacks (96 wide each), concat, MLP."""

    def __init__(self, cfg: ModelConfig, rng):
        (i1, o1, k1), (i2, o2, k2) = cfg.edgeconv_specs
        self.k = max(k1, k2)
        self.edge1 = EdgeConv(i1, o1, k1, rng)
        self.edge2 = EdgeConv(i2, o2, k2, rng)
        bw = cfg.branch_width
        if cfg.use_inception:
            self.convs1 = Inception(o1, cfg.conv1d_specs[0], rng)
            self.convs2 = Inception(o2, cfg.conv1d_specs[1], rng)
        else:
            self.convs1 = Pointwise(o1, bw, rng)
            self.convs2 = Pointwise(o2, bw, rng)
        self.fuse = MLP([2 * bw, cfg.width, cfg.width], rng)

    def features(self, cloud: np.ndarray, dtype) -> dict:
        if len(cloud) <= self.k:
            raise TooFewPoints(f"multi-scale extractor needs more than {self.k} points, got {len(cloud)}")
        nbr, seq = neighbor_sequences(cloud, self.k)
        x = Tensor(np.asarray(cloud, dtype=dtype))
        fe1 = self.edge1(x, nbr)
        fe2 = self.edge2(fe1, nbr)
        fe1p = self.convs1(fe1, seq)
        fe2p = self.convs2(fe2, seq)
        out = self.fuse(ad.concat([fe1p, fe2p], axis=1))
        return {"fe1": fe1, "fe2": fe2, "fe1p": fe1p, "fe2p": fe2p, "fpp": out}

    def __call__(self, cloud: np.ndarray, dtype) -> Tensor:
        return self.features(cloud, dtype)["fpp"]


@memoize_cloud
def neighbor_sequences(cloud: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """kNN rows and the sequences ``[i, nn_1(i), ..., nn_k(i)]``."""
    nbr = knn_indices(cloud, k)
    return nbr, np.concatenate([np.arange(len(cloud))[:, None], nbr], axis=1)


def sinusoidal(x: Tensor, dim: int) -> Tensor:
    """Embed a ``(1, 1)`` scalar as ``[sin(w x), cos(w x)]`` with log-spaced ``w`` in [1, 100]."""
    freqs = np.logspace(0.0, 2.0, dim // 2).reshape(1, -1).astype(x.dtype)
    arg = x * Tensor(freqs)
    return ad.concat([ad.sin(arg), ad.cos(arg)], axis=1)


class Upsampler(Module):
    """Refine ``P_i`` into ``P_{i+1} = repeat(P_i, r) + offsets``.

    Token features are ``concat(MLP(F), MLP(P_i))`` plus an embedding of the
    chamfer distance between the partial input and ``P_i``; they go through
    self-attention, then cross-attention against the partial cloud's
    multi-scale features, then the offset decoder, which splits every token
    into ``ratio`` children tagged by a learned child-index embedding.
    """

    def __init__(self, cfg: ModelConfig, ratio: int, rng):
        c, d = cfg.c, cfg.width
        self.ratio = int(ratio)
        self.cfg = cfg
        self.extractor = MultiScaleExtractor(cfg, rng)
        self.feat_mlp = MLP([4 * c, d, c], rng)
        self.point_mlp = MLP([3, c, c], rng)
        self.cd_proj = Linear(cfg.cd_embed_dim, d, rng)
        self.self_attn = AttentionBlock(d, cfg.heads, rng)
        self.cross_attn = AttentionBlock(d, cfg.heads, rng, kv_dim=d)
        self.dec_in = Linear(2 * d, d, rng)
        self.dec_blocks = [AttentionBlock(d, cfg.heads, rng) for _ in range(cfg.decoder_depth)]
        self.child_embed = parameter(rng.normal(0.0, 1.0, (self.ratio, d)))
        self.offset_head = MLP([d, d, 3], rng)

    def forward_features(self, prev: Tensor, partial: np.ndarray, feat_cloud: np.ndarray, f: Tensor) -> dict:
        if prev.ndim != 2 or prev.shape[1] != 3 or prev.shape[0] < 1:
            raise ShapeMismatch(f"previous cloud must be (n, 3), got {prev.shape}")
        dtype = prev.dtype
        n = prev.shape[0]
        fpp = self.extractor(feat_cloud, dtype)
        fa_in = ad.concat([broadcast_rows(self.feat_mlp(f), n), self.point_mlp(prev)], axis=1)
        cd = chamfer_l2(Tensor(np.asarray(partial, dtype=dtype)), prev).reshape(1, 1)
        fa_in = fa_in + self.cd_proj(sinusoidal(cd, self.cfg.cd_embed_dim))
        fa = self.self_attn(fa_in)
        fpi = self.cross_attn(fa, fpp)
        h = self.dec_in(ad.concat([fpi, fa], axis=1))
        for blk in self.dec_blocks:
            h = blk(h)
        child = ad.repeat_rows(h, self.ratio) + ad.gather_rows(
            self.child_embed, np.tile(np.arange(self.ratio), n)
        )
        delta = self.offset_head(child) * self.cfg.offset_scale
        out = ad.repeat_rows(prev, self.ratio) + delta
        return {"fpp": fpp, "fa_in": fa_in, "fa": fa, "fpi": fpi, "delta": delta, "out": out, "cd": cd}

    def __call__(self, prev: Tensor, partial: np.ndarray, feat_cloud: np.ndarray, f: Tensor) -> Tensor:
        return self.forward_features(prev, partial, feat_cloud, f)["out"]

    def zero_offsets(self) -> None:
        """Zero the final offset layer so the stage reduces to ``repeat(P_i)``."""
        self.offset_head.head.zero_()

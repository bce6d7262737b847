"""Finite-difference checks of every network block at toy width.

Blocks are rebuilt in float64 from the same seeds as the float32 model, so
the replay exercises exactly the graph that training differentiates.
"""

from __future__ import annotations

import numpy as np

from ..autodiff.gradcheck import PROBES, GradCheck, check_gradients, leaf, run_ops
from ..ccm import canonical_views
from ..pipeline.rng import derive_rng
from .config import ModelConfig
from .generator import CoordinateDecoder, FeatureAlignment
from .model import CompletionNet
from .upsampler import MultiScaleExtractor, Upsampler


def _sphere(rng, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return 0.5 + 0.4 * v / np.linalg.norm(v, axis=1, keepdims=True)


def block_cases(cfg: ModelConfig, seed: int = 0):
    """``(name, fn, leaves)`` for align_features, decode_coords, extract_multiscale, upsample, complete."""
    rng = derive_rng(seed, "gradcheck.inputs")
    c = cfg.c

    align = FeatureAlignment(cfg, derive_rng(seed, "gradcheck.align")).astype(np.float64)
    fp, fc = leaf(rng.normal(size=(1, 2 * c))), leaf(rng.normal(size=(3, c)))
    poses = canonical_views()
    yield "align_features", lambda: align(fp, fc, poses), align.parameters() + [fp, fc]

    dec = CoordinateDecoder(4 * c, cfg.width, cfg.n_coarse, cfg.decoder_depth, cfg.heads,
                            derive_rng(seed, "gradcheck.decode")).astype(np.float64)
    f = leaf(rng.normal(size=(1, 4 * c)))
    yield "decode_coords", lambda: dec(f), dec.parameters() + [f]

    partial = _sphere(rng, cfg.n_in)
    partial = partial[partial[:, 2] < np.median(partial[:, 2]) + 0.2][: cfg.n_feat]
    partial = np.concatenate([partial, _sphere(rng, cfg.n_feat - len(partial))]) if len(partial) < cfg.n_feat else partial
    ext = MultiScaleExtractor(cfg, derive_rng(seed, "gradcheck.extract")).astype(np.float64)
    yield "extract_multiscale", lambda: ext(partial, np.float64), ext.parameters()

    up = Upsampler(cfg, cfg.up_ratios[0], derive_rng(seed, "gradcheck.upsample")).astype(np.float64)
    prev = leaf(_sphere(rng, cfg.merge_target))
    f2 = leaf(rng.normal(size=(1, 4 * c)))
    yield "upsample", lambda: up(prev, partial, partial, f2), up.parameters() + [prev, f2]

    net = CompletionNet(cfg, seed).astype(np.float64)
    full_in = _sphere(rng, cfg.n_in)
    gt = _sphere(rng, 4 * cfg.n_in)

    def total():
        return net.loss(net(full_in), gt)[0]

    yield "complete", total, net.parameters()


def run_blocks(cfg: ModelConfig | None = None, seed: int = 0, probes: int = PROBES) -> list[GradCheck]:
    cfg = cfg or ModelConfig.toy(c=8, n_in=64)
    return [check_gradients(n, fn, lv, probes=probes, seed=seed + i) for i, (n, fn, lv) in enumerate(block_cases(cfg, seed))]


def run_suite(seed: int = 0, probes: int = PROBES) -> list[GradCheck]:
    """Every op, then every block at C=8, N=64."""
    return run_ops(seed, probes) + run_blocks(seed=seed, probes=probes)

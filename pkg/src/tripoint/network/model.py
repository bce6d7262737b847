"""End-to-end completion network: generator, merge/resample, two upsamplers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Module, Tensor, checkpoint
from ..errors import ConfigMismatch
from ..geometry import anchor_index, as_cloud, fps_indices
from ..pipeline.rng import derive_rng
from .config import ModelConfig
from .generator import PointGenerator
from .layers import arc_chamfer
from .upsampler import Upsampler


@dataclass
class Completion:
    p0: Tensor
    p1: Tensor
    p2: Tensor
    f: Tensor

    def clouds(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.asarray(t.data, dtype=np.float64) for t in (self.p0, self.p1, self.p2))


class CompletionNet(Module):
    """Weights for ``generator.*``, ``upsampler1.*`` and ``upsampler2.*``.

    Each stage draws its initial weights from its own labelled random stream,
    so changing one stage's architecture leaves the others' weights intact.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.generator = PointGenerator(cfg, derive_rng(seed, "init.generator"))
        self.upsampler1 = Upsampler(cfg, cfg.up_ratios[0], derive_rng(seed, "init.upsampler1"))
        self.upsampler2 = Upsampler(cfg, cfg.up_ratios[1], derive_rng(seed, "init.upsampler2"))

    def merge(self, partial: np.ndarray, p0: Tensor) -> Tensor:
        """Concatenate the partial input with ``P0`` and keep ``merge_target`` points by FPS."""
        merged = ad.concat([Tensor(partial.astype(p0.dtype)), p0], axis=0)
        pts = merged.data.astype(np.float64)
        idx = ad.decision(lambda: fps_indices(pts, self.cfg.merge_target, start=anchor_index(pts)))
        return ad.gather_rows(merged, idx)

    def feature_cloud(self, partial: np.ndarray) -> np.ndarray:
        n = self.cfg.n_feat
        if n == len(partial):
            return partial
        return partial[fps_indices(partial, n, start=anchor_index(partial))]

    def __call__(self, partial) -> Completion:
        partial = as_cloud(partial)
        if len(partial) != self.cfg.n_in:
            raise ConfigMismatch(f"model expects {self.cfg.n_in} input points, got {len(partial)}")
        p0, f = self.generator(partial)
        seeds = self.merge(partial, p0)
        feat_cloud = self.feature_cloud(partial)
        p1 = self.upsampler1(seeds, partial, feat_cloud, f)
        p2 = self.upsampler2(p1, partial, feat_cloud, f)
        return Completion(p0, p1, p2, f)

    def loss(self, out: Completion, gt) -> tuple[Tensor, list[Tensor]]:
        """Sum of arcosh-chamfer terms of the three stages against ``gt``."""
        g = Tensor(as_cloud(gt).astype(out.p0.dtype))
        terms = [arc_chamfer(p, g) for p in (out.p0, out.p1, out.p2)]
        return terms[0] + terms[1] + terms[2], terms

    def save(self, path) -> None:
        checkpoint.save(path, self.state_dict())

    @classmethod
    def load(cls, path, cfg: ModelConfig) -> "CompletionNet":
        net = cls(cfg)
        net.load_state_dict(checkpoint.load(path))
        return net


def complete(cloud, weights: CompletionNet, config: ModelConfig | None = None):
    """Run the full pipeline and return ``(p0, p1, p2)`` as float64 arrays."""
    if config is not None and config != weights.cfg:
        raise ConfigMismatch("weights were built for a different configuration")
    return weights(cloud).clouds()

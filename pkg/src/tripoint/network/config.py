"""Architecture hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import ConfigMismatch

INCEPTION_BRANCHES = ((1, 32, 0), (3, 32, 1), (5, 32, 2))


@dataclass(frozen=True)
class ModelConfig:
    """Every width and count of the completion network.

    ``edgeconv_specs`` holds two ``(in, out, neighbors)`` triples and
    ``conv1d_specs`` two lists of ``(kernel, out, padding)`` inception
    branches. ``n_partial_feat`` is the number of partial-input points fed to
    the multi-scale extractor (``None`` means all of them). Upsampler offsets
    are the offset head's output times ``offset_scale`` (1 leaves them
    unscaled; smaller values damp early offsets at the cost of slower fitting).
    """

    c: int = 64
    n_in: int = 2048
    n_coarse: int = 256
    merge_target: int = 512
    up_ratios: tuple = (2, 2)
    ccm_hw: tuple = (64, 64)
    edgeconv_specs: tuple = ((3, 64, 16), (64, 128, 16))
    conv1d_specs: tuple = (INCEPTION_BRANCHES, INCEPTION_BRANCHES)
    heads: int = 4
    decoder_depth: int = 2
    sa_neighbors: int = 16
    n_partial_feat: int | None = None
    cd_embed_dim: int = 64
    use_ccm: bool = True
    use_alignment: bool = True
    use_inception: bool = True
    offset_scale: float = 1.0

    def __post_init__(self):
        self.validate()

    @property
    def width(self) -> int:
        """Token width used by attention stacks (2C)."""
        return 2 * self.c

    @property
    def n_feat(self) -> int:
        return self.n_in if self.n_partial_feat is None else self.n_partial_feat

    @property
    def n_out(self) -> int:
        r1, r2 = self.up_ratios
        return self.merge_target * r1 * r2

    @property
    def branch_width(self) -> int:
        return sum(o for _, o, _ in self.conv1d_specs[0])

    @property
    def sa_levels(self) -> tuple:
        """(centers, neighbors) for the two set-abstraction levels."""
        n1 = max(1, self.n_in // 4)
        n2 = max(1, self.n_in // 16)
        return ((n1, min(self.sa_neighbors, self.n_in)), (n2, min(self.sa_neighbors, n1)))

    def validate(self) -> None:
        ints = dict(
            c=self.c, n_in=self.n_in, n_coarse=self.n_coarse, merge_target=self.merge_target,
            heads=self.heads, decoder_depth=self.decoder_depth, n_feat=self.n_feat,
            cd_embed_dim=self.cd_embed_dim,
        )
        for name, v in ints.items():
            if not isinstance(v, int) or v < 1:
                raise ConfigMismatch(f"{name} must be a positive integer, got {v!r}")
        if len(self.up_ratios) != 2 or any(int(r) < 1 for r in self.up_ratios):
            raise ConfigMismatch(f"up_ratios must be two positive integers, got {self.up_ratios}")
        if len(self.ccm_hw) != 2 or any(int(s) < 16 for s in self.ccm_hw):
            raise ConfigMismatch(f"ccm_hw must be two sizes >= 16, got {self.ccm_hw}")
        if self.width % self.heads:
            raise ConfigMismatch(f"heads={self.heads} must divide width {self.width}")
        if self.merge_target > self.n_in + self.n_coarse:
            raise ConfigMismatch("merge_target exceeds the merged point count")
        if self.n_feat > self.n_in:
            raise ConfigMismatch("n_partial_feat exceeds n_in")
        if not self.offset_scale > 0:
            raise ConfigMismatch(f"offset_scale must be positive, got {self.offset_scale}")
        if self.cd_embed_dim % 2:
            raise ConfigMismatch("cd_embed_dim must be even")
        if len(self.edgeconv_specs) != 2:
            raise ConfigMismatch("need exactly two EdgeConv specs")
        (i1, o1, k1), (i2, o2, k2) = self.edgeconv_specs
        if i1 != 3 or i2 != o1:
            raise ConfigMismatch(f"EdgeConv chain {self.edgeconv_specs} is not 3 -> o1 -> o2")
        if min(o1, o2) < 1 or not 1 <= k1 < self.n_feat or not 1 <= k2 < self.n_feat:
            raise ConfigMismatch("EdgeConv neighbors must satisfy 1 <= n < n_partial_feat")
        if len(self.conv1d_specs) != 2:
            raise ConfigMismatch("need exactly two inception branch lists")
        widths = [sum(o for _, o, _ in branch) for branch in self.conv1d_specs]
        if widths[0] != widths[1]:
            raise ConfigMismatch(f"inception output widths differ: {widths}")
        for branch in self.conv1d_specs:
            for k, o, p in branch:
                if k < 1 or o < 1 or 2 * p != k - 1:
                    raise ConfigMismatch(f"conv1d spec {(k, o, p)} must preserve length")

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    @classmethod
    def toy(cls, c: int = 8, n_in: int = 64, **overrides) -> "ModelConfig":
        """Small configuration with widths and neighborhoods scaled to ``c`` and ``n_in``."""
        k = max(1, min(16, n_in // 4))
        base = dict(
            c=c,
            n_in=n_in,
            n_coarse=max(4, n_in // 4),
            merge_target=max(4, n_in // 2),
            ccm_hw=(16, 16),
            edgeconv_specs=((3, c, k), (c, 2 * c, k)),
            heads=2,
            decoder_depth=1,
        )
        base.update(overrides)
        return cls(**base)

"""Run configuration: plain ``key = value`` files with ``#`` comments.

Keys are dotted: ``model.*`` goes to :class:`ModelConfig`, ``synth.*`` to
:class:`SynthSpec`, everything else to :class:`RunConfig` itself. Values are
Python literals (``32``, ``1e-3``, ``(2, 2)``, ``'union'``); bare words and
``true``/``false`` are accepted too.
"""

from __future__ import annotations

import ast
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigMismatch
from ..network.config import ModelConfig
from .synth import SynthSpec


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run needs.

    ``dataset`` is either ``"synth"`` (draw samples from ``synth``) or a
    directory holding ``partial/`` and ``gt/`` clouds with matching names.
    With ``fixed_shape`` every iteration reuses the sample drawn for seed
    ``seed`` (the overfit benchmark).
    """

    model: ModelConfig = field(default_factory=ModelConfig)
    synth: SynthSpec = field(default_factory=lambda: SynthSpec(gt_points=8192, partial_points=2048))
    seed: int = 0
    iterations: int = 1000
    lr: float = 1e-3
    lr_schedule: str = "constant"
    warmup: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 1
    dataset: str = "synth"
    fixed_shape: bool = False
    output_dir: str = "run"
    checkpoint_every: int = 0
    eval_every: int = 0
    log_timing: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigMismatch(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigMismatch(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigMismatch(f"lr must be positive, got {self.lr}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigMismatch(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")
        if self.warmup < 0:
            raise ConfigMismatch("warmup must be >= 0")
        if self.checkpoint_every < 0 or self.eval_every < 0:
            raise ConfigMismatch("checkpoint_every and eval_every must be >= 0")
        if self.synth.partial_points != self.model.n_in:
            raise ConfigMismatch(
                f"synth.partial_points={self.synth.partial_points} but model.n_in={self.model.n_in}"
            )


def parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_lines(lines) -> dict:
    """``key = value`` pairs; blank lines and ``#`` comments are skipped."""
    out = {}
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigMismatch(f"line {num}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigMismatch(f"line {num}: empty key")
        out[key] = parse_value(value)
    return out


def read_config_file(path) -> dict:
    return parse_lines(Path(path).read_text(encoding="utf-8").splitlines())


def _coerce(cls, values: dict, where: str):
    known = {f.name: f.default for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigMismatch(f"unknown {where} keys: {', '.join(unknown)}")
    out = {}
    for k, v in values.items():
        if isinstance(v, list):
            v = tuple(v)
        if isinstance(known[k], float) and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        out[k] = v
    return out


def build_run_config(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Apply dotted ``values`` on top of ``base`` (defaults when omitted)."""
    base = base or RunConfig()
    model, synth, top = {}, {}, {}
    for key, v in values.items():
        if key.startswith("model."):
            model[key[6:]] = v
        elif key.startswith("synth."):
            synth[key[6:]] = v
        else:
            top[key] = v
    if "n_in" in model and "partial_points" not in synth:
        synth["partial_points"] = model["n_in"]
    try:
        m = replace(base.model, **_coerce(ModelConfig, model, "model"))
        s = replace(base.synth, **_coerce(SynthSpec, synth, "synth"))
        t = _coerce(RunConfig, top, "run")
        t.pop("model", None)
        t.pop("synth", None)
        return replace(base, model=m, synth=s, **t)
    except (TypeError, ValueError) as exc:
        raise ConfigMismatch(str(exc)) from None


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = read_config_file(path) if path else {}
    values.update(overrides or {})
    return build_run_config(values)


def toy_run_config(**overrides) -> RunConfig:
    """Overfit benchmark: one sphere-and-box union, toy network."""
    model = ModelConfig.toy(c=32, n_in=512, n_coarse=128, merge_target=256, ccm_hw=(32, 32))
    base = RunConfig(
        model=model,
        synth=SynthSpec(family="union", gt_points=2048, partial_points=512, occlusion=0.5),
        iterations=500,
        lr=2e-3,
        lr_schedule="cosine",
        warmup=25,
        fixed_shape=True,
    )
    return build_run_config(overrides, base)


def dump_run_config(cfg: RunConfig) -> str:
    """Text form that :func:`load_run_config` reads back to an equal config."""
    lines = []
    for k, v in asdict(cfg.model).items():
        lines.append(f"model.{k} = {v!r}")
    for k, v in asdict(cfg.synth).items():
        lines.append(f"synth.{k} = {v!r}")
    for f in fields(cfg):
        if f.name not in ("model", "synth"):
            lines.append(f"{f.name} = {getattr(cfg, f.name)!r}")
    return "\n".join(lines) + "\n"

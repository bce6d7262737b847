"""Seeded training loop with per-iteration CSV logging and checkpoints."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..errors import MissingPair, NonFiniteLoss
from ..metrics import MetricReport, evaluate_pair
from ..network import CompletionNet
from ..pcio import read_cloud
from .config import RunConfig, dump_run_config
from .rng import derive_int, derive_rng
from .synth import synth_generate

LOG_HEADER = ("iter", "loss", "term0", "term1", "term2", "ms")
EVAL_HEADER = ("iter", "cd_l1", "cd_l2", "arc_cd", "dcd", "fscore", "fidelity")


@dataclass
class TrainLog:
    """Per-iteration losses plus periodic held-out reports."""

    rows: list = field(default_factory=list)
    evals: list = field(default_factory=list)

    @staticmethod
    def format_row(row) -> str:
        it, loss, t0, t1, t2, ms = row
        timing = "0" if ms is None else f"{ms:.3f}"
        return ",".join([str(it)] + [repr(float(v)) for v in (loss, t0, t1, t2)] + [timing])

    def csv(self) -> str:
        return ",".join(LOG_HEADER) + "\n" + "".join(self.format_row(r) + "\n" for r in self.rows)

    def eval_csv(self) -> str:
        lines = [",".join(EVAL_HEADER)]
        for it, rep in self.evals:
            vals = rep.values()
            cells = ["" if vals[k] is None else repr(float(vals[k])) for k in EVAL_HEADER[1:]]
            lines.append(",".join([str(it)] + cells))
        return "\n".join(lines) + "\n"

    @property
    def losses(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])


@dataclass
class TrainResult:
    net: CompletionNet
    log: TrainLog
    checkpoint: Path | None
    train_pair: tuple | None = None


def _cloud_pairs(root: Path) -> list[tuple[Path, Path]]:
    pdir, gdir = root / "partial", root / "gt"
    gts = sorted(p for p in gdir.iterdir() if p.is_file()) if gdir.is_dir() else []
    if not gts:
        raise MissingPair(f"no ground-truth clouds under {gdir}")
    pairs = []
    for g in gts:
        p = pdir / g.name
        if not p.is_file():
            raise MissingPair(f"no partial cloud for {g.name} in {pdir}")
        pairs.append((p, g))
    return pairs


def sample_stream(cfg: RunConfig):
    """Endless ``(partial, gt)`` stream determined by ``cfg.seed``."""
    if cfg.dataset == "synth":
        if cfg.fixed_shape:
            pair = synth_generate(cfg.synth, cfg.seed)
            while True:
                yield pair
        i = 0
        while True:
            yield synth_generate(cfg.synth, derive_int(cfg.seed, f"data.{i}"))
            i += 1
    pairs = _cloud_pairs(Path(cfg.dataset))
    if cfg.fixed_shape:
        pair = (read_cloud(pairs[0][0]), read_cloud(pairs[0][1]))
        while True:
            yield pair
    epoch = 0
    while True:
        for j in derive_rng(cfg.seed, f"data.epoch.{epoch}").permutation(len(pairs)):
            yield read_cloud(pairs[j][0]), read_cloud(pairs[j][1])
        epoch += 1


def held_out_pair(cfg: RunConfig):
    if cfg.dataset == "synth":
        return synth_generate(cfg.synth, derive_int(cfg.seed, "heldout"))
    p, g = _cloud_pairs(Path(cfg.dataset))[-1]
    return read_cloud(p), read_cloud(g)


def evaluate_model(net: CompletionNet, partial, gt) -> MetricReport:
    p2 = net(partial).clouds()[2]
    return evaluate_pair(p2, gt, partial=partial)


def learning_rate(cfg: RunConfig, it: int) -> float:
    """Step size for 1-based iteration ``it``: linear warmup, then constant or cosine decay to 0."""
    if it <= cfg.warmup:
        return cfg.lr * it / cfg.warmup
    if cfg.lr_schedule == "constant":
        return cfg.lr
    span = max(1, cfg.iterations - cfg.warmup)
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * (it - cfg.warmup - 1) / span))


def train(cfg: RunConfig, out_dir=None, progress=None) -> TrainResult:
    """Run ``cfg.iterations`` optimizer steps.

    With ``out_dir`` the log (``train.csv``), held-out reports (``eval.csv``),
    the resolved config (``run.cfg``) and checkpoints are written there.
    ``progress(it, loss)`` is called after every step when given.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "run.cfg").write_text(dump_run_config(cfg), encoding="utf-8")
    net = CompletionNet(cfg.model, seed=cfg.seed)
    opt = ad.Adam(net.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)
    stream = sample_stream(cfg)
    log = TrainLog()
    heldout = held_out_pair(cfg) if cfg.eval_every else None
    first_pair = None
    log_file = (out / "train.csv").open("w", encoding="utf-8", newline="\n") if out is not None else None
    try:
        if log_file:
            log_file.write(",".join(LOG_HEADER) + "\n")
        for it in range(1, cfg.iterations + 1):
            start = time.perf_counter()
            net.zero_grad()
            total, terms = 0.0, np.zeros(3)
            for _ in range(cfg.batch_size):
                partial, gt = next(stream)
                first_pair = first_pair or (partial, gt)
                result = net(partial)
                loss, parts = net.loss(result, gt)
                if cfg.batch_size > 1:
                    loss = loss * (1.0 / cfg.batch_size)
                ad.backward(loss)
                total += loss.item()
                terms += [t.item() / cfg.batch_size for t in parts]
            if not (math.isfinite(total) and np.all(np.isfinite(terms))):
                raise NonFiniteLoss(
                    f"iteration {it}: loss={total} terms={terms.tolist()} lr={cfg.lr}; "
                    "lower the learning rate or check the input clouds"
                )
            opt.lr = learning_rate(cfg, it)
            opt.step()
            ms = (time.perf_counter() - start) * 1e3 if cfg.log_timing else None
            row = (it, total, *terms.tolist(), ms)
            log.rows.append(row)
            if log_file:
                log_file.write(TrainLog.format_row(row) + "\n")
                log_file.flush()
            if progress:
                progress(it, total)
            if out is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                net.save(out / f"checkpoint_{it:06d}.gfck")
            if heldout is not None and (it % cfg.eval_every == 0 or it == cfg.iterations):
                log.evals.append((it, evaluate_model(net, *heldout)))
    finally:
        if log_file:
            log_file.close()
    ckpt = None
    if out is not None:
        ckpt = out / "model.gfck"
        net.save(ckpt)
        if log.evals:
            (out / "eval.csv").write_text(log.eval_csv(), encoding="utf-8")
    return TrainResult(net, log, ckpt, first_pair)

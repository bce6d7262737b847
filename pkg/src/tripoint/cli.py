"""Command-line entry point: ``tripoint <subcommand> ...``.

Exit status is 0 on success, 1 when the command itself fails (bad file,
mismatched config, failed gradient check) and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .ccm import render_triplane, write_ccm, write_ppm
from .errors import TripointError
from .geometry import normalize_canonical
from .network import CompletionNet
from .pcio import read_cloud, write_cloud
from .pipeline.config import (
    load_run_config,
    parse_value,
    read_config_file,
    toy_run_config,
)
from .pipeline.evaluate import evaluate_dirs, report_rows
from .pipeline.rng import derive_int
from .pipeline.synth import FAMILIES, SynthSpec, synth_generate
from .pipeline.train import train


def _resolution(text: str) -> tuple[int, int]:
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or HxW, got {text!r}") from None
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"expected N or HxW, got {text!r}")
    return parts[0], parts[1]


def _assignment(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), parse_value(value)


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        family=args.family,
        gt_points=args.gt_points,
        partial_points=args.partial_points,
        occlusion=args.occlusion,
        jitter=args.jitter,
        parts=tuple(args.parts),
    )
    out = Path(args.out)
    (out / "partial").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        partial, gt = synth_generate(spec, derive_int(args.seed, f"data.{i}"))
        name = f"shape_{i:04d}.{args.format}"
        write_cloud(out / "partial" / name, partial)
        write_cloud(out / "gt" / name, gt)
    print(f"wrote {args.count} pairs to {out}")
    return 0


def _cmd_render(args) -> int:
    pts = read_cloud(args.input)
    if args.normalize:
        pts, _, _ = normalize_canonical(pts)
    h, w = args.res
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for ccm in render_triplane(pts, h, w):
        write_ccm(out / f"{ccm.pose.name}.ccm", ccm)
        write_ppm(out / f"{ccm.pose.name}.ppm", ccm)
    print(f"wrote front/right/top maps ({h}x{w}) to {out}")
    return 0


def _cmd_train(args) -> int:
    overrides = dict(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.preset == "toy":
        values = read_config_file(args.config) if args.config else {}
        values.update(overrides)
        cfg = toy_run_config(**values)
    else:
        cfg = load_run_config(args.config, overrides)
    out = Path(args.out or cfg.output_dir)

    def report(it, loss):
        if not args.quiet and (it == 1 or it % 50 == 0 or it == cfg.iterations):
            print(f"iter {it:5d}  loss {loss:.6f}", flush=True)

    result = train(cfg, out, progress=report)
    print(f"checkpoint: {result.checkpoint}")
    return 0


def _cmd_complete(args) -> int:
    ckpt = Path(args.checkpoint)
    cfg_path = Path(args.config) if args.config else ckpt.with_name("run.cfg")
    if not cfg_path.is_file():
        raise TripointError(f"config file {cfg_path} not found; pass --config")
    cfg = load_run_config(cfg_path)
    net = CompletionNet.load(ckpt, cfg.model)
    pts = read_cloud(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suffix = args.format or Path(args.input).suffix.lstrip(".") or "xyz"
    for name, cloud in zip(("p0", "p1", "p2"), net(pts).clouds()):
        write_cloud(out / f"{name}.{suffix}", cloud)
    print(f"wrote p0/p1/p2 to {out}")
    return 0


def _cmd_eval(args) -> int:
    results = evaluate_dirs(args.pred, args.gt, args.out, partial_dir=args.partial, threads=args.threads)
    if args.out is None:
        for row in report_rows(results):
            print(",".join(row))
    return 0


def _cmd_gradcheck(args) -> int:
    from .autodiff.gradcheck import run_ops
    from .network.gradcheck import run_blocks

    checks = run_ops(args.seed, args.probes)
    if not args.ops_only:
        checks += run_blocks(seed=args.seed, probes=args.probes)
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tripoint", description="Point cloud completion toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic partial/gt dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--family", choices=FAMILIES, default="union")
    s.add_argument("--parts", nargs=2, default=("sphere", "box"), choices=FAMILIES[:4])
    s.add_argument("--gt-points", type=int, default=2048)
    s.add_argument("--partial-points", type=int, default=512)
    s.add_argument("--occlusion", type=float, default=0.5)
    s.add_argument("--jitter", type=float, default=0.0)
    s.add_argument("--format", choices=("xyz", "pcb"), default="xyz")
    s.set_defaults(run=_cmd_synth)

    r = sub.add_parser("render-ccm", help="render the three canonical coordinate maps of a cloud")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--res", type=_resolution, default=(64, 64), help="N or HxW")
    r.add_argument("--out", required=True)
    r.add_argument("--normalize", action="store_true", help="map the cloud into the unit cube first")
    r.set_defaults(run=_cmd_render)

    t = sub.add_parser("train", help="train a completion network")
    t.add_argument("--config")
    t.add_argument("--set", action="append", type=_assignment, metavar="KEY=VALUE")
    t.add_argument("--seed", type=int)
    t.add_argument("--iterations", type=int)
    t.add_argument("--preset", choices=("default", "toy"), default="default")
    t.add_argument("--out")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(run=_cmd_train)

    c = sub.add_parser("complete", help="complete a partial cloud with a trained checkpoint")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--config", help="run.cfg of the checkpoint (default: next to it)")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--format", choices=("xyz", "pcb"))
    c.set_defaults(run=_cmd_complete)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--partial", help="partial inputs, enables the fidelity column")
    e.add_argument("--out", help="CSV path (default: stdout)")
    e.add_argument("--threads", type=int)
    e.set_defaults(run=_cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of every op and block")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--probes", type=int, default=24)
    g.add_argument("--ops-only", action="store_true")
    g.set_defaults(run=_cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (TripointError, OSError, ValueError) as exc:
        print(f"tripoint {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

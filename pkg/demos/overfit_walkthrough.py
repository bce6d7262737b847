"""Fit the toy network to one occluded shape and watch the three stages improve.

Takes about two minutes on one core. Pass ``--out DIR`` to keep the
checkpoint, log and the completed clouds.

    python demos/overfit_walkthrough.py [--out DIR] [--iterations N]
"""

import argparse
from pathlib import Path

from tripoint.metrics import chamfer
from tripoint.network import CompletionNet
from tripoint.pcio import write_cloud
from tripoint.pipeline.config import toy_run_config
from tripoint.pipeline.train import train

ap = argparse.ArgumentParser()
ap.add_argument("--out")
ap.add_argument("--iterations", type=int, default=500)
args = ap.parse_args()

cfg = toy_run_config(iterations=args.iterations)
out = Path(args.out) if args.out else None


def progress(it, loss):
    if it == 1 or it % 50 == 0:
        print(f"iter {it:4d}  loss {loss:.4f}", flush=True)


untrained = CompletionNet(cfg.model, seed=cfg.seed)
res = train(cfg, out, progress=progress)
partial, gt = res.train_pair

print(f"\nchamfer-L2 to ground truth (partial input: {chamfer(partial, gt):.2e})")
before = untrained(partial).clouds()
after = res.net(partial).clouds()
for name, b, a in zip(("p0", "p1", "p2"), before, after):
    print(f"  {name} ({len(a):4d} pts): untrained {chamfer(b, gt):.2e}  trained {chamfer(a, gt):.2e}")

if out is not None:
    for name, cloud in zip(("partial", "gt", "p0", "p1", "p2"), (partial, gt, *after)):
        write_cloud(out / f"{name}.xyz", cloud)
    print(f"clouds, log and checkpoint in {out}/")

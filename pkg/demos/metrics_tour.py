"""How the evaluation metrics react to noise, clumping and missing regions.

    python demos/metrics_tour.py
"""

import numpy as np

from tripoint.metrics import evaluate_pair, format_report
from tripoint.pipeline.synth import SynthSpec, synth_generate

partial, gt = synth_generate(SynthSpec(family="sphere", gt_points=2048, partial_points=512), seed=0)
rng = np.random.default_rng(0)

cases = {
    "exact copy": gt,
    "noise 0.002": gt + rng.normal(0, 0.002, gt.shape),
    "noise 0.01": gt + rng.normal(0, 0.01, gt.shape),
    # same count, but every point duplicated from only half of the surface samples
    "clumped": gt[rng.integers(0, len(gt) // 2, len(gt))],
    "partial only": partial,
}
for name, pred in cases.items():
    report = evaluate_pair(pred, gt, partial=partial)
    print(f"{name:>13}: {format_report(report)}")

"""Render the three canonical coordinate maps of a synthetic shape.

Writes front/right/top PPM images to the output directory and prints how many
pixels each view covers and how many points are visible in several views.

    python demos/ccm_views.py [out_dir]
"""

import sys
from pathlib import Path

from tripoint.ccm import canonical_views, render_triplane, write_ppm, zbuffer_winners
from tripoint.pipeline.synth import SynthSpec, synth_generate

out = Path(sys.argv[1] if len(sys.argv) > 1 else "ccm_demo")
out.mkdir(parents=True, exist_ok=True)

_, gt = synth_generate(SynthSpec(family="union", parts=("torus", "box")), seed=3)
res = 64
maps = render_triplane(gt, res, res)
visible = {}
for pose, m in zip(canonical_views(), maps):
    write_ppm(out / f"{pose.name}.ppm", m)
    _, owners = zbuffer_winners(gt, pose, res, res)
    for i in owners.tolist():
        visible[i] = visible.get(i, 0) + 1
    print(f"{pose.name:>5}: {int(m.mask.sum()):5d} of {res * res} pixels covered")

multi = sum(1 for n in visible.values() if n >= 2)
print(f"{len(visible)} points visible somewhere, {multi} of them in two or more views")
print(f"images in {out}/")

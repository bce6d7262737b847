"""Chamfer-family distances, scores and the arcosh training objective.

All evaluations run in float64 on brute-force nearest-neighbor tables,
processed in row blocks so large clouds do not exhaust memory.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BadThreshold, EmptyCloud, EmptyReferenceSet
from .geometry import as_cloud, sq_dist_matrix

DCD_ALPHA = 1000.0
FSCORE_THRESHOLD = 0.01
_BLOCK = 1024


def _nonempty(*clouds):
    out = []
    for c in clouds:
        arr = as_cloud(c)
        if len(arr) == 0:
            raise EmptyCloud("metric evaluated on an empty cloud")
        out.append(arr)
    return out


def nearest(src, dst) -> tuple[np.ndarray, np.ndarray]:
    """For each point of ``src``: squared distance to, and index of, its nearest ``dst`` point."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    d2 = np.empty(len(src))
    idx = np.empty(len(src), dtype=np.int64)
    for s in range(0, len(src), _BLOCK):
        block = sq_dist_matrix(src[s : s + _BLOCK], dst)
        j = block.argmin(axis=1)
        idx[s : s + _BLOCK] = j
        d2[s : s + _BLOCK] = block[np.arange(len(j)), j]
    return d2, idx


def chamfer(p, q, order: str = "L2") -> float:
    """Chamfer distance.

    ``L2``: mean squared nearest distance in each direction, summed.
    ``L1``: mean unsquared nearest distance in each direction, averaged
    (the PCN benchmark convention).
    """
    p, q = _nonempty(p, q)
    dpq, _ = nearest(p, q)
    dqp, _ = nearest(q, p)
    if order == "L2":
        return float(dpq.mean() + dqp.mean())
    if order == "L1":
        return float(0.5 * (np.sqrt(dpq).mean() + np.sqrt(dqp).mean()))
    raise ValueError(f"unknown chamfer order {order!r}")


def arcosh1p(x: float) -> float:
    """arcosh(1 + x) for x >= 0."""
    y = 1.0 + x
    return math.log(y + math.sqrt(y * y - 1.0))


def arc_cd(p, q) -> float:
    return arcosh1p(chamfer(p, q, "L2"))


@dataclass
class LossValue:
    total: float
    terms: list[float]


def total_loss(p0, p1, p2, gt) -> LossValue:
    terms = [arc_cd(p, gt) for p in (p0, p1, p2)]
    return LossValue(total=float(sum(terms)), terms=terms)


def fscore(p, gt, threshold: float = FSCORE_THRESHOLD) -> float:
    """F1 of precision (pred near gt) and recall (gt near pred) at ``threshold``."""
    if not threshold > 0:
        raise BadThreshold(f"threshold must be positive, got {threshold}")
    p, gt = _nonempty(p, gt)
    dp, _ = nearest(p, gt)
    dg, _ = nearest(gt, p)
    precision = float(np.mean(np.sqrt(dp) < threshold))
    recall = float(np.mean(np.sqrt(dg) < threshold))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _dcd_direction(src, dst, alpha: float) -> float:
    d2, idx = nearest(src, dst)
    counts = np.bincount(idx, minlength=len(dst))
    return float(np.mean(1.0 - np.exp(-alpha * d2) / counts[idx]))


def dcd(p, gt, alpha: float = DCD_ALPHA) -> float:
    """Density-aware chamfer distance, bounded to [0, 1].

    Each nearest-neighbor term ``exp(-alpha * d^2)`` is divided by how many
    source points share that neighbor, penalizing clumped predictions.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    p, gt = _nonempty(p, gt)
    return 0.5 * (_dcd_direction(p, gt, alpha) + _dcd_direction(gt, p, alpha))


def fidelity(input_partial, completed) -> float:
    """Mean squared distance from each input point to the completed cloud."""
    src, dst = _nonempty(input_partial, completed)
    d2, _ = nearest(src, dst)
    return float(d2.mean())


def mmd(completed, references) -> float:
    refs = list(references)
    if not refs:
        raise EmptyReferenceSet("minimal matching distance needs references")
    return min(chamfer(completed, r, "L2") for r in refs)


@dataclass
class MetricReport:
    cd_l1: float | None = None
    cd_l2: float | None = None
    arc_cd: float | None = None
    dcd: float | None = None
    fscore: float | None = None
    fidelity: float | None = None
    mmd: float | None = None
    metadata: dict = field(
        default_factory=lambda: {
            "dcd_alpha": DCD_ALPHA,
            "fscore_threshold": FSCORE_THRESHOLD,
            "fidelity": "squared",
            "cd_l1": "0.5*(mean+mean) of unsquared distances",
        }
    )

    def values(self) -> dict:
        d = asdict(self)
        d.pop("metadata")
        return d


def evaluate_pair(pred, gt, partial=None, references=None) -> MetricReport:
    """Full report for one prediction/ground-truth pair."""
    pred, gt = _nonempty(pred, gt)
    dpg, ipg = nearest(pred, gt)
    dgp, igp = nearest(gt, pred)
    cd_l2 = float(dpg.mean() + dgp.mean())
    cd_l1 = float(0.5 * (np.sqrt(dpg).mean() + np.sqrt(dgp).mean()))
    precision = float(np.mean(np.sqrt(dpg) < FSCORE_THRESHOLD))
    recall = float(np.mean(np.sqrt(dgp) < FSCORE_THRESHOLD))
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    cnt_g = np.bincount(ipg, minlength=len(gt))
    cnt_p = np.bincount(igp, minlength=len(pred))
    d = 0.5 * (
        float(np.mean(1.0 - np.exp(-DCD_ALPHA * dpg) / cnt_g[ipg]))
        + float(np.mean(1.0 - np.exp(-DCD_ALPHA * dgp) / cnt_p[igp]))
    )
    return MetricReport(
        cd_l1=cd_l1,
        cd_l2=cd_l2,
        arc_cd=arcosh1p(cd_l2),
        dcd=d,
        fscore=f,
        fidelity=None if partial is None else fidelity(partial, pred),
        mmd=None if references is None else mmd(pred, references),
    )


def format_report(report: MetricReport, scale: float = 1e3) -> str:
    """Human-readable summary; distance values are shown multiplied by ``scale``."""
    parts = []
    for key, val in report.values().items():
        if val is None:
            continue
        if key.startswith("cd_") or key in ("fidelity", "mmd"):
            parts.append(f"{key}(x{scale:g})={val * scale:.4f}")
        else:
            parts.append(f"{key}={val:.4f}")
    return " ".join(parts)

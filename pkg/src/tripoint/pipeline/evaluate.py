"""Directory-level evaluation: one CSV row per prediction/ground-truth pair."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from ..errors import MissingPair
from ..metrics import MetricReport, evaluate_pair
from ..pcio import read_cloud

CSV_COLUMNS = ("cd_l1", "cd_l2", "arc_cd", "dcd", "fscore", "fidelity")
CLOUD_SUFFIXES = (".xyz", ".pcb")


def thread_cap(default: int | None = None) -> int:
    """Worker count: ``TRIPOINT_THREADS`` when set, else the CPU count."""
    raw = os.environ.get("TRIPOINT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"TRIPOINT_THREADS must be an integer, got {raw!r}") from None
    return default or os.cpu_count() or 1


def _clouds(d: Path) -> dict[str, Path]:
    if not d.is_dir():
        raise MissingPair(f"{d} is not a directory")
    return {p.name: p for p in sorted(d.iterdir()) if p.is_file() and p.suffix.lower() in CLOUD_SUFFIXES}


def match_pairs(pred_dir, gt_dir) -> list[tuple[str, Path, Path]]:
    """``(name, pred, gt)`` for every ground-truth file; a missing prediction is an error."""
    preds, gts = _clouds(Path(pred_dir)), _clouds(Path(gt_dir))
    if not gts:
        raise MissingPair(f"no ground-truth clouds in {gt_dir}")
    missing = [n for n in gts if n not in preds]
    if missing:
        raise MissingPair(f"no prediction for {', '.join(missing)}")
    return [(n, preds[n], gts[n]) for n in gts]


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6g}"


def report_rows(named_reports) -> list[list[str]]:
    """CSV rows (header first, ``mean`` summary last); means are taken over the unrounded values."""
    rows = [["name", *CSV_COLUMNS]]
    sums = {c: [] for c in CSV_COLUMNS}
    for name, rep in named_reports:
        vals = rep.values()
        rows.append([name] + [_fmt(vals[c]) for c in CSV_COLUMNS])
        for c in CSV_COLUMNS:
            if vals[c] is not None:
                sums[c].append(vals[c])
    rows.append(["mean"] + [_fmt(sum(v) / len(v)) if v else "" for v in sums.values()])
    return rows


def evaluate_dirs(pred_dir, gt_dir, out_csv=None, partial_dir=None, threads: int | None = None):
    """Evaluate every pair; returns ``[(name, MetricReport)]`` in file-name order.

    When ``partial_dir`` is given, clouds with the same names there feed the
    fidelity column. Pairs are scored on up to ``threads`` worker threads
    (default from :func:`thread_cap`); the output order never depends on it.
    """
    pairs = match_pairs(pred_dir, gt_dir)
    partial_dir = Path(partial_dir) if partial_dir else None

    def score(item) -> tuple[str, MetricReport]:
        name, p, g = item
        partial = None
        if partial_dir is not None:
            src = partial_dir / name
            if not src.is_file():
                raise MissingPair(f"no partial cloud for {name} in {partial_dir}")
            partial = read_cloud(src)
        return name, evaluate_pair(read_cloud(p), read_cloud(g), partial=partial)

    workers = min(threads or thread_cap(), len(pairs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(score, pairs))
    else:
        results = [score(item) for item in pairs]
    if out_csv is not None:
        text = "\n".join(",".join(r) for r in report_rows(results)) + "\n"
        Path(out_csv).write_text(text, encoding="utf-8")
    return results

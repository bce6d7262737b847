import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import brute_nearest
from tripoint.errors import BadThreshold, EmptyCloud, EmptyReferenceSet
from tripoint.metrics import (
    MetricReport,
    arc_cd,
    arcosh1p,
    chamfer,
    dcd,
    evaluate_pair,
    fidelity,
    format_report,
    fscore,
    mmd,
    total_loss,
)

small_clouds = st.integers(1, 24).flatmap(
    lambda n: arrays(np.float64, (n, 3), elements=st.floats(-2, 2, allow_nan=False, width=64))
)


def brute_dcd(p, q, alpha):
    def direction(src, dst):
        match = []
        for a in src:
            dists = [sum((a[i] - b[i]) ** 2 for i in range(3)) for b in dst]
            j = min(range(len(dst)), key=lambda t: (dists[t], t))
            match.append((j, dists[j]))
        counts = {}
        for j, _ in match:
            counts[j] = counts.get(j, 0) + 1
        return sum(1 - math.exp(-alpha * d) / counts[j] for j, d in match) / len(src)

    return 0.5 * (direction(p, q) + direction(q, p))


# -------------------------------------------------------------------- chamfer


def test_chamfer_identity_and_singletons():
    p = np.random.default_rng(0).random((10, 3))
    assert chamfer(p, p, "L2") == 0.0 and chamfer(p, p, "L1") == 0.0
    a, b = np.array([[0.0, 0, 0]]), np.array([[1.0, 0, 0]])
    assert chamfer(a, b, "L2") == 2.0
    assert chamfer(a, b, "L1") == 1.0


def test_chamfer_matches_double_loop(rng):
    p, q = rng.random((48, 3)), rng.random((56, 3))
    dp, dq = brute_nearest(p, q), brute_nearest(q, p)
    assert chamfer(p, q, "L2") == pytest.approx(dp.mean() + dq.mean(), rel=1e-12)
    assert chamfer(p, q, "L1") == pytest.approx(0.5 * (np.sqrt(dp).mean() + np.sqrt(dq).mean()), rel=1e-12)


def test_chamfer_frozen_value():
    # double-loop oracle on this seeded pair, frozen
    r = np.random.default_rng(42)
    p, q = r.random((20, 3)), r.random((30, 3))
    assert chamfer(p, q, "L2") == pytest.approx(0.1095870208017784, rel=1e-12)
    assert chamfer(p, q, "L1") == pytest.approx(0.2230460311009102, rel=1e-12)


def test_chamfer_rejects_empty_and_bad_order():
    with pytest.raises(EmptyCloud):
        chamfer(np.zeros((0, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        chamfer(np.zeros((1, 3)), np.zeros((1, 3)), "L3")


@given(small_clouds, small_clouds)
def test_chamfer_symmetric_and_nonnegative(p, q):
    for order in ("L1", "L2"):
        a, b = chamfer(p, q, order), chamfer(q, p, order)
        assert a >= 0
        assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


@given(small_clouds, small_clouds, st.sampled_from([0.5, 2.0, 8.0]))
def test_chamfer_scale_covariance(p, q, s):
    assert chamfer(p * s, q * s, "L2") == pytest.approx(s * s * chamfer(p, q, "L2"), rel=1e-9, abs=1e-300)
    assert chamfer(p * s, q * s, "L1") == pytest.approx(s * chamfer(p, q, "L1"), rel=1e-9, abs=1e-300)


# --------------------------------------------------------------------- arc-CD


def test_arcosh_values():
    assert arcosh1p(0.0) == 0.0
    assert arcosh1p(1.0) == pytest.approx(math.log(2 + math.sqrt(3)), rel=1e-15)
    assert arcosh1p(1.0) == pytest.approx(1.3169578969248166, rel=1e-15)
    for x in (1e-6, 0.1, 3.0):
        assert arcosh1p(x) == pytest.approx(math.acosh(1 + x), rel=1e-12)


def test_arc_cd_identity_and_definition(rng):
    p, q = rng.random((30, 3)), rng.random((25, 3))
    assert arc_cd(p, p) == 0.0
    assert arc_cd(p, q) == pytest.approx(math.acosh(1 + chamfer(p, q)), rel=1e-14)


@given(st.floats(0, 10), st.floats(0, 10))
def test_arcosh_monotone(a, b):
    if a < b:
        assert arcosh1p(a) <= arcosh1p(b)


def test_arcosh_derivative_dominates_sqrt():
    for x in np.linspace(1e-3, 1.0, 100):
        assert 1.0 / math.sqrt((1 + x) ** 2 - 1) >= 1.0 / (2 * math.sqrt(x))


def test_total_loss_terms(rng):
    gt = rng.random((40, 3))
    assert total_loss(gt, gt, gt, gt).total == 0.0
    p = rng.random((20, 3))
    lv = total_loss(p, p, p, gt)
    assert lv.total == pytest.approx(3 * arc_cd(p, gt), rel=1e-14)
    stages = [rng.random((n, 3)) for n in (8, 16, 32)]
    lv = total_loss(*stages, gt)
    assert lv.terms == [arc_cd(s, gt) for s in stages]
    assert lv.total == pytest.approx(sum(lv.terms), rel=1e-15)


# -------------------------------------------------------------------- F-score


def test_fscore_basic_cases():
    gt = np.random.default_rng(1).random((30, 3))
    assert fscore(gt, gt) == 1.0
    assert fscore(gt + 5.0, gt) == 0.0


def test_fscore_half_precision_full_recall():
    gt = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    p = np.array([[0.0, 0, 0], [1.0, 0, 0], [5.0, 0, 0], [6.0, 0, 0]])
    assert fscore(p, gt, 0.01) == pytest.approx(2 / 3, rel=1e-15)


def test_fscore_threshold_is_strict():
    gt = np.array([[0.0, 0, 0]])
    p = np.array([[0.5, 0, 0]])
    assert fscore(p, gt, 0.5) == 0.0
    assert fscore(p, gt, 0.5000001) == 1.0


def test_fscore_bad_threshold():
    with pytest.raises(BadThreshold):
        fscore(np.zeros((1, 3)), np.zeros((1, 3)), 0.0)


# ------------------------------------------------------------------------ DCD


def test_dcd_identity_and_far_limit(rng):
    p = rng.random((32, 3))
    assert dcd(p, p) == 0.0
    assert dcd(p, p + 10.0, 1000.0) == pytest.approx(1.0, abs=1e-12)


def test_dcd_matches_formula(rng):
    p, q = rng.random((32, 3)), rng.random((32, 3))
    for alpha in (1.0, 50.0, 1000.0):
        assert dcd(p, q, alpha) == pytest.approx(brute_dcd(p, q, alpha), rel=1e-12)


def test_dcd_penalizes_clumping():
    gt = np.array([[0.0, 0, 0], [0.1, 0, 0]])
    spread = gt.copy()
    clumped = np.array([[0.0, 0, 0], [0.0, 0, 0]])
    assert dcd(clumped, gt, 10.0) > dcd(spread, gt, 10.0)


@given(small_clouds, small_clouds)
def test_dcd_symmetric_and_bounded(p, q):
    a = dcd(p, q, 5.0)
    assert 0.0 <= a <= 1.0
    assert a == pytest.approx(dcd(q, p, 5.0), rel=1e-12, abs=1e-15)


# ------------------------------------------------------------ fidelity / MMD


def test_fidelity_cases(rng):
    x = rng.random((10, 3))
    assert fidelity(x, np.concatenate([x, rng.random((5, 3))])) == 0.0
    assert fidelity([[0.0, 0, 0]], [[0.0, 1, 0]]) == 1.0


@given(small_clouds, small_clouds, small_clouds)
def test_fidelity_never_increases_with_more_points(partial, done, extra):
    assert fidelity(partial, np.concatenate([done, extra])) <= fidelity(partial, done)


def test_mmd_cases(rng):
    c = rng.random((16, 3))
    refs = [rng.random((16, 3)) for _ in range(5)]
    assert mmd(c, refs + [c]) == 0.0
    assert mmd(c, refs[:1]) == chamfer(c, refs[0])
    assert mmd(c, refs) == min(chamfer(c, r) for r in refs)
    with pytest.raises(EmptyReferenceSet):
        mmd(c, [])


# ------------------------------------------------------------------- reports


def test_evaluate_pair_agrees_with_single_metrics(rng):
    pred, gt, partial = rng.random((40, 3)), rng.random((50, 3)), rng.random((12, 3))
    rep = evaluate_pair(pred, gt, partial=partial, references=[gt])
    assert rep.cd_l2 == pytest.approx(chamfer(pred, gt, "L2"), rel=1e-14)
    assert rep.cd_l1 == pytest.approx(chamfer(pred, gt, "L1"), rel=1e-14)
    assert rep.arc_cd == pytest.approx(arc_cd(pred, gt), rel=1e-14)
    assert rep.dcd == pytest.approx(dcd(pred, gt), rel=1e-14)
    assert rep.fscore == fscore(pred, gt)
    assert rep.fidelity == fidelity(partial, pred)
    assert rep.mmd == chamfer(pred, gt)


def test_report_metadata_and_display_scaling(rng):
    rep = evaluate_pair(rng.random((5, 3)), rng.random((5, 3)))
    assert rep.metadata["fidelity"] == "squared"
    assert rep.metadata["dcd_alpha"] == 1000.0
    text = format_report(MetricReport(cd_l2=0.002, fscore=0.5))
    assert "cd_l2(x1000)=2.0000" in text and "fscore=0.5000" in text

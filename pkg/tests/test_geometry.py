import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tripoint.errors import BadCount, DegenerateExtent, EmptyCloud, TooFewPoints
from tripoint.geometry import (
    anchor_index,
    bounding_box,
    denormalize,
    farthest_point_sample,
    fps_indices,
    knn_graph,
    memoize_cloud,
    merge_resample,
    normalize_canonical,
    smallest_k,
)

coords = st.floats(-100, 100, allow_nan=False, width=64)


def clouds(min_n=2, max_n=40):
    return st.integers(min_n, max_n).flatmap(lambda n: arrays(np.float64, (n, 3), elements=coords))


def as_set(pts):
    return {tuple(p) for p in np.asarray(pts).tolist()}


def brute_knn(pts, k):
    rows = []
    for i, p in enumerate(pts):
        cand = [(float(((p - q) ** 2).sum()), j) for j, q in enumerate(pts) if j != i]
        rows.append([j for _, j in sorted(cand)[:k]])
    return np.array(rows)


# ------------------------------------------------------------ normalization


def test_normalize_hand_example():
    pts = np.array([[-1.0, -1.0, -1.0], [1.0, 3.0, 1.0]])
    out, s, off = normalize_canonical(pts)
    assert out[1].tolist() == [0.5, 1.0, 0.5]
    assert s == 0.25
    assert off.tolist() == [-1.0, -1.0, -1.0]


def test_normalize_identity_when_already_canonical():
    pts = np.array([[0.0, 0.0, 0.2], [0.5, 1.0, 0.0], [0.1, 0.4, 0.9]])
    out, s, off = normalize_canonical(pts)
    np.testing.assert_array_equal(out, pts)
    assert s == 1.0 and off.tolist() == [0.0, 0.0, 0.0]


def test_normalize_errors():
    with pytest.raises(EmptyCloud):
        normalize_canonical(np.zeros((0, 3)))
    with pytest.raises(DegenerateExtent):
        normalize_canonical(np.ones((5, 3)))


def test_denormalize_inverts(rng):
    pts = rng.normal(size=(50, 3)) * 3 + 7
    out, s, off = normalize_canonical(pts)
    np.testing.assert_allclose(denormalize(out, s, off), pts, rtol=1e-12, atol=1e-12)


@given(clouds())
def test_normalize_idempotent(pts):
    if np.ptp(pts, axis=0).max() < 1e-6:
        return
    once, _, _ = normalize_canonical(pts)
    twice, s, off = normalize_canonical(once)
    np.testing.assert_array_equal(once, twice)
    assert s == 1.0
    lo, hi = bounding_box(once)
    assert lo.tolist() == [0.0, 0.0, 0.0] and hi.max() == 1.0


@given(clouds(), st.sampled_from([0.5, 2.0, 4.0]), st.sampled_from([-3.0, 0.0, 8.0]))
def test_normalize_translation_and_scale_invariant(pts, s, t):
    # powers of two and small integer shifts keep the transformed input exact
    pts = np.round(pts)
    if np.ptp(pts, axis=0).max() == 0:
        return
    a, _, _ = normalize_canonical(pts)
    b, _, _ = normalize_canonical(pts * s + t)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


# ----------------------------------------------------------------------- FPS


def test_fps_hand_example():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.1, 0, 0]])
    assert fps_indices(pts, 2, start=0).tolist() == [0, 1]


def test_fps_full_count_is_permutation(rng):
    pts = rng.random((30, 3))
    idx = fps_indices(pts, 30, seed=5)
    assert sorted(idx.tolist()) == list(range(30))


def test_fps_bad_counts():
    pts = np.zeros((4, 3))
    for m in (0, 5):
        with pytest.raises(BadCount):
            farthest_point_sample(pts, m)


def test_fps_ties_take_lowest_index():
    # after starting at the origin, points 1 and 2 are equally far
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [0.3, 0.3, 0]])
    assert fps_indices(pts, 2, start=0).tolist() == [0, 1]


def test_fps_frozen_indices():
    # frozen from a brute-force greedy loop on this seeded cloud
    pts = np.random.default_rng(7).random((12, 3))
    assert fps_indices(pts, 6, start=0).tolist() == [0, 10, 1, 11, 2, 6]


def test_fps_spreads_better_than_random_subsets():
    def min_pairwise(x):
        d = ((x[:, None] - x[None]) ** 2).sum(-1)
        return np.sqrt(d[np.triu_indices(len(x), 1)].min())

    fps_vals, rand_vals = [], []
    for seed in range(100):
        r = np.random.default_rng(seed)
        pts = r.random((64, 3))
        fps_vals.append(min_pairwise(farthest_point_sample(pts, 16, seed=seed)))
        rand_vals.append(min_pairwise(pts[r.choice(64, 16, replace=False)]))
    assert np.mean(fps_vals) >= np.mean(rand_vals)


@given(clouds(min_n=3), st.integers(0, 2**31 - 1))
def test_fps_subset_and_deterministic(pts, seed):
    m = max(1, len(pts) // 2)
    a = farthest_point_sample(pts, m, seed=seed)
    assert as_set(a) <= as_set(pts)
    np.testing.assert_array_equal(a, farthest_point_sample(pts, m, seed=seed))


def test_fps_matches_greedy_oracle(rng):
    pts = rng.random((40, 3))
    idx = fps_indices(pts, 12, start=3)
    chosen = [3]
    while len(chosen) < 12:
        best, best_j = -1.0, None
        for j in range(len(pts)):
            d = min(((pts[j] - pts[c]) ** 2).sum() for c in chosen)
            if d > best:
                best, best_j = d, j
        chosen.append(best_j)
    assert idx.tolist() == chosen


def test_anchor_index_ignores_order(rng):
    pts = rng.random((25, 3))
    perm = rng.permutation(25)
    assert perm[anchor_index(pts[perm])] == anchor_index(pts)
    sym = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]])
    for p in itertools.permutations(range(4)):
        p = np.array(p)
        assert sym[p][anchor_index(sym[p])].tolist() == [1.0, 0, 0]


# ----------------------------------------------------------------------- kNN


def test_knn_hand_example():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
    assert knn_graph(pts, 1)[0].tolist() == [1]


def test_knn_full_rows_are_permutations(rng):
    pts = rng.random((9, 3))
    g = knn_graph(pts, 8)
    for i, row in enumerate(g):
        assert sorted(row.tolist()) == [j for j in range(9) if j != i]


def test_knn_matches_brute_force(rng):
    pts = rng.random((128, 3))
    np.testing.assert_array_equal(knn_graph(pts, 8), brute_knn(pts, 8))


def test_knn_tie_break_by_index():
    # lattice points: many equal distances
    pts = np.array(list(itertools.product(range(3), repeat=3)), dtype=float)
    np.testing.assert_array_equal(knn_graph(pts, 6), brute_knn(pts, 6))


def test_knn_too_few_points():
    with pytest.raises(TooFewPoints):
        knn_graph(np.zeros((3, 3)), 3)


@given(st.integers(4, 30).flatmap(lambda n: st.tuples(arrays(np.float64, (n, 3), elements=st.integers(-3, 3).map(float)), st.integers(1, n - 1))))
def test_knn_brute_force_property(case):
    pts, k = case
    np.testing.assert_array_equal(knn_graph(pts, k), brute_knn(pts, k))


@given(arrays(np.float64, (20, 20), elements=st.integers(0, 5).map(float)), st.integers(1, 18))
def test_smallest_k_equals_stable_argsort(d, k):
    np.testing.assert_array_equal(smallest_k(d, k), np.argsort(d, axis=1, kind="stable")[:, :k])


def test_knn_permutation_consistent(rng):
    pts = rng.random((60, 3))
    perm = rng.permutation(60)
    inv = np.argsort(perm)
    g, gp = knn_graph(pts, 5), knn_graph(pts[perm], 5)
    # relabel the permuted graph back to original indices
    np.testing.assert_array_equal(perm[gp][inv], g)


# ------------------------------------------------------------- merge/resample


def test_merge_keeps_everything_at_full_count(rng):
    a, b = rng.random((4, 3)), rng.random((4, 3))
    out = merge_resample(a, b, 8)
    assert len(out) == 8 and as_set(out) == as_set(a) | as_set(b)


def test_merge_subset_with_exact_count(rng):
    a, b = rng.random((4, 3)), rng.random((4, 3))
    out = merge_resample(a, b, 6, seed=2)
    assert len(out) == 6 and as_set(out) <= as_set(a) | as_set(b)


def test_merge_duplicates_never_chosen_twice(rng):
    a = rng.random((10, 3))
    for seed in range(10):
        out = merge_resample(a, a.copy(), 10, seed=seed)
        assert as_set(out) == as_set(a)


def test_merge_bad_count(rng):
    with pytest.raises(BadCount):
        merge_resample(rng.random((2, 3)), rng.random((2, 3)), 5)


# ------------------------------------------------------------------- caching


def test_memoize_cloud_keys_on_content():
    calls = []

    @memoize_cloud(size=2)
    def f(cloud, k):
        calls.append(k)
        return cloud.sum() + k

    a = np.ones((3, 3))
    assert f(a, 1) == f(a.copy(), 1) == 10
    assert calls == [1]
    f(a, 2)
    f(a * 2, 1)
    f(a, 1)  # evicted by the two newer keys
    assert calls == [1, 2, 1, 1]
    f.cache_clear()
    f(a, 1)
    assert len(calls) == 5

from __future__ import annotations

import numpy as np
import pytest
from conftest import two_blobs
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from partkrr.clustering import Clustering, kbalance, kmeans, nearest_center, nearest_centers
from partkrr.data import synth_clustered

points = hnp.arrays(np.float64, st.tuples(st.integers(1, 60), st.integers(1, 3)),
                    elements=st.floats(-100, 100, allow_nan=False, allow_infinity=False))


def test_k_equals_one():
    X = np.random.default_rng(0).normal(size=(30, 3))
    cl = kmeans(X, 1, 4)
    assert cl.n_iter == 1
    assert np.allclose(cl.centers[0], X.mean(axis=0), atol=1e-14)
    assert np.all(cl.membership == 0)


def test_k_equals_n():
    X = np.random.default_rng(1).normal(size=(12, 2))
    cl = kmeans(X, 12, 0)
    assert sorted(cl.membership.tolist()) == list(range(12))
    assert np.allclose(cl.centers[cl.membership], X)


def brute_force_two_clustering(X):
    """Best split by threshold along the first coordinate (exhaustive over cut points)."""
    order = np.argsort(X[:, 0], kind="stable")
    best, labels = np.inf, None
    for cut in range(1, len(X)):
        a, b = X[order[:cut]], X[order[cut:]]
        w = ((a - a.mean(0)) ** 2).sum() + ((b - b.mean(0)) ** 2).sum()
        if w < best:
            best = w
            labels = np.zeros(len(X), int)
            labels[order[cut:]] = 1
    return labels


def same_partition(a, b):
    return np.array_equal(a, b) or np.array_equal(a, 1 - b)


def test_two_blobs_recovered():
    X, truth = two_blobs(50, 50, gap=40.0, seed=3)
    oracle = brute_force_two_clustering(X)
    assert same_partition(oracle, truth)
    for seed in range(5):
        assert same_partition(kmeans(X, 2, seed).membership, truth)


@given(points, st.integers(1, 6), st.integers(0, 1000))
def test_kmeans_wcss_non_increasing(X, k, seed):
    k = min(k, X.shape[0])
    cl = kmeans(X, k, seed)
    tr = np.asarray(cl.wcss_trace)
    assert np.all(np.diff(tr) <= 1e-9 * max(1.0, tr[0]))
    assert np.all(cl.sizes > 0) or len(np.unique(X, axis=0)) < k


@given(points, st.integers(1, 8), st.integers(0, 1000))
def test_kbalance_sizes_differ_by_at_most_one(X, k, seed):
    k = min(k, X.shape[0])
    cl = kbalance(X, k, seed)
    assert cl.sizes.max() - cl.sizes.min() <= 1
    assert cl.sizes.sum() == X.shape[0]


@given(points, st.integers(1, 5), st.integers(0, 1000))
def test_deterministic(X, k, seed):
    k = min(k, X.shape[0])
    a, b = kbalance(X, k, seed), kbalance(X, k, seed)
    assert np.array_equal(a.membership, b.membership)
    assert np.array_equal(a.centers, b.centers)


def test_kbalance_k_one():
    X = np.random.default_rng(2).normal(size=(17, 2))
    cl = kbalance(X, 1, 0)
    assert np.all(cl.membership == 0)
    assert np.allclose(cl.centers[0], X.mean(0), atol=1e-14)


def test_kbalance_sixteen_thousand():
    X = synth_clustered(16000, 8, 8, 0.1, 1).dense
    assert kbalance(X, 8, 1).sizes.tolist() == [2000] * 8


def test_kbalance_ten_by_three():
    X = np.arange(10, dtype=float).reshape(-1, 1)
    assert sorted(kbalance(X, 3, 0).sizes.tolist()) == [3, 3, 4]


def replay_balanced_scan(X, centers, cap):
    """Hand reference: nearest center with room, scanning rows in order."""
    sizes = [0] * len(centers)
    member = []
    for x in X:
        d = [float(np.sum((x - c) ** 2)) for c in centers]
        for j in sorted(range(len(centers)), key=lambda j: (d[j], j)):
            if sizes[j] < cap:
                sizes[j] += 1
                member.append(j)
                break
    return np.array(member), sizes


def test_kbalance_sixty_forty_replay():
    X, truth = two_blobs(60, 40, gap=30.0, seed=8)
    km = kmeans(X, 2, 0)
    ref, ref_sizes = replay_balanced_scan(X, km.centers, 50)
    cl = kbalance(X, 2, 0, warm=km)
    assert ref_sizes == [50, 50]
    assert np.array_equal(cl.membership, ref)
    # blob A is scanned first: its last ten rows are the ones pushed out
    a_label = cl.membership[0]
    displaced = np.flatnonzero((truth == 0) & (cl.membership != a_label))
    assert displaced.tolist() == list(range(50, 60))


def test_kmeans_imbalanced_blobs_unequal():
    X, _ = two_blobs(80, 20, gap=30.0, seed=1)
    assert sorted(kmeans(X, 2, 0).sizes.tolist()) == [20, 80]


def test_nearest_center_rules():
    C = np.array([[0.0, 0.0], [5.0, 5.0], [9.0, -1.0]])
    assert nearest_center(C, C[2]) == 2
    assert nearest_center(np.array([[0.0], [10.0]]), [4.0]) == 0
    assert nearest_center(np.array([[0.0], [10.0]]), [5.0]) == 0
    assert nearest_centers(C, np.array([[5.0, 4.0], [0.1, 0.0]])).tolist() == [1, 0]


def test_empty_cluster_reseeded():
    # duplicate points make some initial centers coincide
    X = np.array([[0.0]] * 6 + [[10.0]] * 2 + [[20.0]])
    cl = kmeans(X, 3, 0)
    assert np.all(cl.sizes > 0)


def test_text_round_trip():
    X = np.random.default_rng(5).normal(size=(20, 2))
    cl = kbalance(X, 3, 0)
    back = Clustering.from_text(cl.to_text())
    assert np.array_equal(back.membership, cl.membership)
    assert np.array_equal(back.centers, cl.centers)


def test_bad_k():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 1)), 4, 0)

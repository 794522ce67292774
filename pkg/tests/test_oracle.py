import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hnswpy import brute_force_knn, ground_truth, recall

from support import exact_knn_ids


def test_stored_element_comes_first():
    X = np.random.default_rng(0).random((50, 3))
    res = brute_force_knn(X, X[17], 3)
    assert res[0].id == 17 and res[0].dist == 0.0


def test_k_at_least_n_returns_everything_sorted():
    X = np.array([[3.0], [1.0], [2.0]])
    res = brute_force_knn(X, [0.0], 10)
    assert [r.id for r in res] == [1, 2, 0]


def test_1d_example():
    res = brute_force_knn(np.array([[0.0], [2.0], [5.0]]), [1.4], 2)
    assert [r.id for r in res] == [1, 0]
    assert res[0].dist == pytest.approx(0.6, abs=1e-6)
    assert res[1].dist == pytest.approx(1.4, abs=1e-6)


def test_ties_broken_by_id():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    assert [r.id for r in brute_force_knn(X, [0.0], 3)] == [0, 1, 2]


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        brute_force_knn(np.zeros((3, 2)), [1, 2, 3], 1)


def test_empty_dataset():
    with pytest.raises(ValueError):
        brute_force_knn(np.zeros((0, 2)), [1, 2], 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 500), st.integers(1, 6), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_agrees_with_full_sort(n, dim, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((n, dim)).astype(np.float32)
    q = rng.random(dim).astype(np.float32)
    res = brute_force_knn(X, q, k)
    ids, dists = exact_knn_ids(X, q, k)
    assert [r.id for r in res] == ids.tolist()
    np.testing.assert_allclose([r.dist for r in res], dists, rtol=1e-12)


def test_ground_truth_rows_match_single_queries():
    rng = np.random.default_rng(4)
    X = rng.random((120, 3))
    Q = rng.random((7, 3))
    gt = ground_truth(X, Q, 5)
    assert gt.ids.shape == (7, 5) and gt.k == 5
    for i, q in enumerate(Q):
        assert gt.ids[i].tolist() == [r.id for r in brute_force_knn(X, q, 5)]
        assert (np.diff(gt.dists[i]) >= 0).all()


def test_ground_truth_k_too_large():
    with pytest.raises(ValueError, match="exceeds"):
        ground_truth(np.zeros((3, 2)), np.zeros((1, 2)), 4)


def test_recall_examples():
    truth = list(range(10))
    assert recall(truth, truth, 10) == 1.0
    assert recall(range(10, 20), truth, 10) == 0.0
    assert recall([0, 1, 2, 3, 4, 50, 51, 52, 53, 54], truth, 10) == 0.5


@given(st.permutations(list(range(10))), st.permutations([0, 2, 4, 6, 8, 11, 13, 15, 17, 19]))
def test_recall_permutation_invariant(truth, found):
    assert recall(found, truth, 10) == recall(sorted(found), sorted(truth), 10) == 0.5


def test_recall_accepts_ties_at_kth_distance():
    # truth kept id 3 at the boundary; id 7 sits at the same distance
    assert recall([1, 2, 7], [1, 2, 3], 3) == pytest.approx(2 / 3)
    assert recall([1, 2, 7], [1, 2, 3], 3, found_dists=[0.1, 0.2, 0.5], kth_dist=0.5) == 1.0
    assert recall([1, 2, 7], [1, 2, 3], 3, found_dists=[0.1, 0.2, 0.6], kth_dist=0.5) == pytest.approx(2 / 3)

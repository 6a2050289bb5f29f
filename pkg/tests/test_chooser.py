import numpy as np
import pytest

from covfuzz.chooser import (
    KMeansState,
    choose_clustered,
    choose_random,
    kmeans_fit,
)
from covfuzz.errors import ConfigError


def toy_images(n, seed=0, side=4):
    return np.random.default_rng(seed).random((n, side, side, 1)).astype(np.float32)


def two_blobs(per_blob=20, seed=1):
    rng = np.random.default_rng(seed)
    a = (0.05 + 0.02 * rng.random((per_blob, 4, 4, 1))).astype(np.float32)
    b = (0.90 + 0.02 * rng.random((per_blob, 4, 4, 1))).astype(np.float32)
    return np.concatenate([a, b]), np.array([0] * per_blob + [1] * per_blob)


def test_full_size_batch_is_a_permutation(rng):
    images = toy_images(12)
    sel = choose_random(images, None, 12, rng)
    assert sorted(sel.indices.tolist()) == list(range(12))


def test_singleton_set(rng):
    images = toy_images(1)
    sel = choose_random(images, None, 1, rng)
    assert sel.indices.tolist() == [0]


def test_no_duplicates_and_determinism():
    images = toy_images(50)
    a = choose_random(images, None, 16, np.random.default_rng(7))
    b = choose_random(images, None, 16, np.random.default_rng(7))
    assert len(set(a.indices.tolist())) == 16
    assert np.array_equal(a.indices, b.indices)


def test_sequential_draws_differ_but_reproduce():
    images = toy_images(50)
    rng1 = np.random.default_rng(9)
    first = choose_random(images, None, 8, rng1).indices
    second = choose_random(images, None, 8, rng1).indices
    assert not np.array_equal(first, second)
    rng2 = np.random.default_rng(9)
    assert np.array_equal(choose_random(images, None, 8, rng2).indices, first)
    assert np.array_equal(choose_random(images, None, 8, rng2).indices, second)


def test_labels_follow_indices(rng):
    images = toy_images(10)
    labels = np.arange(10, dtype=np.uint8)
    sel = choose_random(images, labels, 4, rng)
    assert np.array_equal(sel.labels, labels[sel.indices])


def test_bad_batch_size_rejected(rng):
    with pytest.raises(ConfigError):
        choose_random(toy_images(5), None, 0, rng)
    with pytest.raises(ConfigError):
        choose_random(np.zeros((0, 4, 4, 1), dtype=np.float32), None, 3, rng)


# --- k-means -------------------------------------------------------------------


def test_k_equals_one_centroid_is_mean(rng):
    images = toy_images(30)
    state = kmeans_fit(images, 1, rng)
    np.testing.assert_allclose(state.centroids[0],
                               images.reshape(30, -1).mean(axis=0), atol=1e-6)
    assert set(state.assignment.tolist()) == {0}


def test_two_blobs_separate_exactly(rng):
    images, truth = two_blobs()
    state = kmeans_fit(images, 2, rng)
    # Brute-force nearest-centroid check for every point.
    flat = images.reshape(len(images), -1).astype(np.float64)
    for i, row in enumerate(flat):
        dists = [float(((row - c) ** 2).sum()) for c in state.centroids]
        assert int(np.argmin(dists)) == state.assignment[i]
    # Assignment must split exactly along the blobs (up to label swap).
    a_clusters = set(state.assignment[truth == 0].tolist())
    b_clusters = set(state.assignment[truth == 1].tolist())
    assert len(a_clusters) == 1 and len(b_clusters) == 1 and a_clusters != b_clusters


def test_k_equals_n_each_point_own_cluster(rng):
    images = toy_images(8)
    state = kmeans_fit(images, 8, rng)
    assert sorted(np.bincount(state.assignment, minlength=8).tolist()) == [1] * 8


def test_objective_non_increasing(rng):
    images = toy_images(60, seed=4)
    state = kmeans_fit(images, 5, rng)
    hist = state.objective_history
    assert all(hist[i + 1] <= hist[i] + 1e-9 for i in range(len(hist) - 1))


def test_no_empty_clusters(rng):
    images = toy_images(40, seed=5)
    state = kmeans_fit(images, 7, rng)
    assert np.all(np.bincount(state.assignment, minlength=7) > 0)


def test_k_larger_than_n_rejected(rng):
    with pytest.raises(ConfigError):
        kmeans_fit(toy_images(3), 4, rng)


def test_assign_new_extends_assignment(rng):
    images, _ = two_blobs()
    state = kmeans_fit(images, 2, rng)
    low_cluster = state.assignment[0]
    new = np.full((3, 4, 4, 1), 0.06, dtype=np.float32)
    state.extend(new)
    assert np.all(state.assignment[-3:] == low_cluster)


# --- clustered choice -------------------------------------------------------------


def test_clustered_batch_is_cluster_pure(rng):
    images, _ = two_blobs()
    state = kmeans_fit(images, 2, rng)
    sel = choose_clustered(images, None, state, 8, rng)
    assert len(set(state.assignment[sel.indices].tolist())) == 1
    assert sel.cluster == state.assignment[sel.indices[0]]


def test_undersized_cluster_returned_whole(rng):
    images = np.concatenate([
        np.full((3, 4, 4, 1), 0.05, dtype=np.float32),
        np.full((30, 4, 4, 1), 0.95, dtype=np.float32),
    ])
    state = kmeans_fit(images, 2, rng)
    small_cluster = state.assignment[0]
    for seed in range(20):
        sel = choose_clustered(images, None, state, 10, np.random.default_rng(seed))
        if sel.cluster == small_cluster:
            assert sorted(sel.indices.tolist()) == [0, 1, 2]
            break
    else:
        pytest.fail("small cluster never sampled in 20 seeds")


def test_single_cluster_equivalent_to_random_within(rng):
    images = toy_images(15)
    state = kmeans_fit(images, 1, rng)
    sel = choose_clustered(images, None, state, 6, np.random.default_rng(3))
    assert len(set(sel.indices.tolist())) == 6
    assert sel.cluster == 0

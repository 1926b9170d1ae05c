import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from analytics.clustering import cluster_profile, kmeans_fit, loco_splits, select_k, silhouette
from ingestion.types import Period

TRAIN = Period.parse("1980-10-01", "1995-09-30")
TEST = Period.parse("1995-10-01", "2010-09-30")


def _blobs(n_per, centres, seed, spread=0.3):
    rng = np.random.default_rng(seed)
    centres = np.asarray(centres, dtype=float)
    X = np.vstack([c + rng.normal(0.0, spread, size=(n_per, centres.shape[1])) for c in centres])
    return X, np.repeat(np.arange(len(centres)), n_per)


def test_two_point_pairs():
    model = kmeans_fit(np.array([0.0, 0.0, 10.0, 10.0]), 2, seed=0)
    assert sorted(model.centroids.ravel().tolist()) == [0.0, 10.0]
    assert model.inertia == 0.0


def test_kmeans_is_deterministic():
    X, _ = _blobs(20, [[0, 0], [4, 4], [0, 5]], seed=1, spread=1.5)
    a = kmeans_fit(X, 3, seed=5)
    b = kmeans_fit(X, 3, seed=5)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.centroids, b.centroids)
    assert a.inertia == b.inertia


def test_kmeans_recovers_blobs():
    X, truth = _blobs(20, [[0, 0], [10, 0], [0, 10]], seed=2)
    model = kmeans_fit(X, 3, seed=0)
    assert adjusted_rand_score(truth, model.labels) == 1.0


def test_inertia_never_increases():
    X, _ = _blobs(30, [[0, 0], [2, 2], [4, 0], [1, 5]], seed=3, spread=1.5)
    history = kmeans_fit(X, 4, seed=9, restarts=1).inertia_history
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_no_cluster_ends_empty():
    X = np.vstack([np.zeros((10, 2)), [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]])
    model = kmeans_fit(X, 4, seed=0)
    assert set(model.labels.tolist()) == {0, 1, 2, 3}


def test_k_out_of_range():
    with pytest.raises(ValueError, match="out of range"):
        kmeans_fit(np.arange(3.0), 4, seed=0)


def test_silhouette_hand_case():
    X = np.array([0.0, 0.2, 10.0, 10.2])
    s = silhouette(X, [0, 0, 1, 1])
    # a = 0.2 for every point; b = 10.1, 9.9, 9.9, 10.1
    expected = np.mean([(10.1 - 0.2) / 10.1, (9.9 - 0.2) / 9.9, (9.9 - 0.2) / 9.9, (10.1 - 0.2) / 10.1])
    assert s == pytest.approx(expected, abs=1e-12)
    assert s == pytest.approx(0.98, abs=1e-3)


def test_silhouette_singletons_score_zero():
    assert silhouette(np.array([0.0, 1.0, 5.0]), [0, 1, 2]) == 0.0


def test_silhouette_of_arbitrary_split_is_not_positive():
    base = np.random.default_rng(4).normal(size=(10, 2))
    X = np.vstack([base, base])
    assert silhouette(X, [0] * 10 + [1] * 10) <= 0.0


def test_select_k_finds_two_blobs():
    X, _ = _blobs(15, [[0, 0], [12, 12]], seed=6)
    best_k, model, profile = select_k(X, 2, 6, seed=1)
    assert best_k == 2
    assert sorted(profile) == [2, 3, 4, 5, 6]
    again = select_k(X, 2, 6, seed=1)
    assert again[0] == best_k and np.array_equal(again[1].labels, model.labels)


def test_select_k_validates_range():
    with pytest.raises(ValueError):
        select_k(np.arange(10.0), 1, 3)
    with pytest.raises(ValueError, match="exceeds"):
        select_k(np.arange(5.0), 2, 6)


def _model(k, n_per=2):
    X, _ = _blobs(n_per, [[20.0 * i, 0.0] for i in range(k)], seed=k, spread=0.1)
    basins = [f"b{i:02d}" for i in range(X.shape[0])]
    return kmeans_fit(X, k, seed=0, basins=basins, kind="aef-64")


@pytest.mark.parametrize("k", [9, 12])
def test_loco_splits_partition(k):
    model = _model(k)
    splits = loco_splits(model, TRAIN, TEST)
    assert len(splits) == k
    held_out = [b for s in splits for b in s.test_basins]
    assert sorted(held_out) == sorted(model.basins)
    for s in splits:
        assert not set(s.train_basins) & set(s.test_basins)
        assert len(s.train_basins) + len(s.test_basins) == len(model.basins)


def test_cluster_profile(fleet):
    table = fleet.attributes
    X = table.values[:, :3]
    model = kmeans_fit(X, 2, seed=0, basins=table.basins)
    profile = cluster_profile(model, table)
    assert len(profile) == 2 * 17
    assert set(profile.columns) >= {"cluster", "attribute", "n", "q25", "median", "q75"}
    assert profile.groupby("cluster")["n"].first().sum() == table.n


def test_kmeans_ignores_a_translation():
    X, _ = _blobs(15, [[0, 0], [6, 0], [0, 6]], seed=8)
    a = kmeans_fit(X, 3, seed=2)
    b = kmeans_fit(X + np.array([100.0, -50.0]), 3, seed=2)
    assert adjusted_rand_score(a.labels, b.labels) == 1.0
    assert b.inertia == pytest.approx(a.inertia, rel=1e-9)

import numpy as np
import pytest

from analytics.preprocessing import apply_column_stats, build_folds, fit_column_stats, standardize_columns
from ingestion.types import Period

TRAIN = Period.parse("1980-10-01", "1995-09-30")
TEST = Period.parse("1995-10-01", "2010-09-30")


def test_standardize_single_column():
    Z, stats = standardize_columns(np.array([[1.0], [2.0], [3.0]]))
    assert np.allclose(Z.ravel(), [-1.2247449, 0.0, 1.2247449], atol=1e-6)
    assert stats.mean[0] == 2.0


def test_constant_column_maps_to_zero():
    Z, stats = standardize_columns(np.array([[5.0, 1.0], [5.0, 2.0]]))
    assert np.array_equal(Z[:, 0], [0.0, 0.0])
    assert stats.std[0] == 0.0


def test_standardize_is_idempotent():
    X = np.random.default_rng(0).normal(3.0, 2.0, size=(40, 5))
    Z, _ = standardize_columns(X)
    Z2, _ = standardize_columns(Z)
    assert np.allclose(Z, Z2, atol=1e-12)


def test_stats_apply_to_unseen_rows():
    stats = fit_column_stats(np.array([[0.0, 10.0], [2.0, 30.0]]))
    assert np.allclose(apply_column_stats(np.array([[4.0, 50.0]]), stats), [[3.0, 3.0]])
    with pytest.raises(ValueError, match="dimension mismatch"):
        apply_column_stats(np.ones((1, 3)), stats)


def test_missing_values_are_ignored_when_fitting():
    stats = fit_column_stats(np.array([[1.0], [np.nan], [3.0]]))
    assert stats.mean[0] == 2.0
    Z = apply_column_stats(np.array([[np.nan]]), stats)
    assert np.isnan(Z[0, 0])


def test_folds_partition_basins():
    basins = [f"b{i:02d}" for i in range(10)]
    folds = build_folds(basins, 5, seed=1, train_period=TRAIN, test_period=TEST)
    assert [len(f.test_basins) for f in folds] == [2, 2, 2, 2, 2]
    tested = [b for f in folds for b in f.test_basins]
    assert sorted(tested) == basins
    for f in folds:
        assert not set(f.train_basins) & set(f.test_basins)
        assert len(f.train_basins) + len(f.test_basins) == 10


def test_folds_uneven_sizes():
    basins = [str(i) for i in range(671)]
    folds = build_folds(basins, 5, seed=0, train_period=TRAIN, test_period=TEST)
    assert [len(f.test_basins) for f in folds] == [135, 134, 134, 134, 134]


def test_folds_are_seeded():
    basins = [str(i) for i in range(20)]
    a = build_folds(basins, 4, seed=9, train_period=TRAIN, test_period=TEST)
    b = build_folds(basins, 4, seed=9, train_period=TRAIN, test_period=TEST)
    c = build_folds(basins, 4, seed=10, train_period=TRAIN, test_period=TEST)
    assert [f.test_basins for f in a] == [f.test_basins for f in b]
    assert [f.test_basins for f in a] != [f.test_basins for f in c]


def test_folds_reject_bad_counts():
    with pytest.raises(ValueError):
        build_folds(["a", "b"], 1, 0, TRAIN, TEST)
    with pytest.raises(ValueError, match="too few basins"):
        build_folds(["a", "b"], 3, 0, TRAIN, TEST)


def test_period_split():
    head, tail = Period.parse("2000-01-01", "2000-01-10").split(0.8)
    assert (head.n_days, tail.n_days) == (8, 2)
    assert str(tail) == "2000-01-09..2000-01-10"
    with pytest.raises(ValueError):
        Period.parse("2000-01-02", "2000-01-01")

import math

import numpy as np
import pytest

from analytics.infotheory import equal_frequency_bins, mi_matrix, mi_summary, mutual_information, write_mi_matrix
from configs.columns import AEF, ATTRIBUTES, EMBEDDING_COLS
from ingestion.types import StaticTable


def _tables(attrs, embs):
    n = attrs.shape[0]
    basins = tuple(f"{i:08d}" for i in range(n))
    return (
        StaticTable(ATTRIBUTES, basins, attrs, tuple(f"a{i:02d}" for i in range(17))),
        StaticTable(AEF, basins, embs, tuple(EMBEDDING_COLS)),
    )


def test_product_distribution_has_zero_information():
    x = np.tile([0.0, 0.0, 1.0, 1.0], 25)
    y = np.tile([0.0, 1.0, 0.0, 1.0], 25)
    assert mutual_information(x, y, bins=2) == pytest.approx(0.0, abs=1e-12)


def test_diagonal_joint_gives_log_two():
    x = np.repeat([0.0, 1.0], 50)
    assert mutual_information(x, x, bins=2) == pytest.approx(math.log(2), abs=1e-12)


def test_mutual_information_is_symmetric():
    rng = np.random.default_rng(0)
    x = rng.normal(size=300)
    y = x + rng.normal(size=300)
    assert mutual_information(x, y, bins=8) == mutual_information(y, x, bins=8)
    assert mutual_information(x, y, bins=8) > 0.1


def test_bins_are_equal_frequency():
    labels = equal_frequency_bins(np.arange(100.0), 4)
    assert np.bincount(labels).tolist() == [25, 25, 25, 25]


def test_mi_rejects_bad_input():
    with pytest.raises(ValueError, match="length mismatch"):
        mutual_information(np.ones(10), np.ones(11), bins=2)
    with pytest.raises(ValueError, match="too few samples"):
        mutual_information(np.arange(10.0), np.arange(10.0), bins=8)


def test_matrix_shape_and_duplicated_column():
    rng = np.random.default_rng(1)
    attrs = rng.normal(size=(64, 17))
    embs = rng.normal(size=(64, 64))
    embs[:, 5] = attrs[:, 2]
    matrix = mi_matrix(*_tables(attrs, embs), bins=4)
    assert matrix.values.shape == (17, 64)
    assert int(np.argmax(matrix.values[2])) == 5
    summary = mi_summary(matrix)
    assert summary.loc[2, "best_dimension"] == "e05"
    assert len(summary) == 17


def test_independent_tables_stay_below_threshold():
    rng = np.random.default_rng(2)
    matrix = mi_matrix(*_tables(rng.normal(size=(500, 17)), rng.normal(size=(500, 64))), bins=8)
    assert matrix.values.size == 1088
    assert (matrix.values < 0.15).all()


def test_matrix_requires_matching_basin_order():
    rng = np.random.default_rng(3)
    attrs, embs = _tables(rng.normal(size=(40, 17)), rng.normal(size=(40, 64)))
    with pytest.raises(ValueError, match="basin-order mismatch"):
        mi_matrix(attrs, embs.subset(list(reversed(embs.basins))), bins=4)


def test_write_matrix(tmp_path):
    rng = np.random.default_rng(4)
    matrix = mi_matrix(*_tables(rng.normal(size=(40, 17)), rng.normal(size=(40, 64))), bins=4)
    path = write_mi_matrix(matrix, tmp_path / "mi.csv")
    lines = open(path).read().splitlines()
    assert len(lines) == 18
    assert lines[0].startswith("attribute,e00,")


def test_matches_hand_computed_plug_in_sum():
    rng = np.random.default_rng(5)
    x = rng.normal(size=200)
    y = 0.5 * x + rng.normal(size=200)
    lx, ly = equal_frequency_bins(x, 4), equal_frequency_bins(y, 4)
    joint = np.zeros((4, 4))
    np.add.at(joint, (lx, ly), 1.0)
    p = joint / joint.sum()
    px, py = p.sum(axis=1), p.sum(axis=0)
    nz = p > 0
    expected = float(np.sum(p[nz] * np.log(p[nz] / np.outer(px, py)[nz])))
    assert mutual_information(x, y, bins=4) == pytest.approx(expected, abs=1e-12)

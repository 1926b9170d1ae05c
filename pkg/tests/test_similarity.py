from collections import Counter

import numpy as np
import pytest

from analytics.preprocessing import standardize_columns
from analytics.similarity import (
    SimilarityMatrix,
    cosine,
    donor_ranking,
    export_similarity,
    load_similarity,
    rank_and_select,
    select_random,
    similarity_matrix,
)
from configs.columns import FUSION
from ingestion.types import StaticTable


def _table(values, basins=None):
    values = np.asarray(values, dtype=float)
    basins = basins or [f"b{i}" for i in range(values.shape[0])]
    cols = [f"f{j:02d}" for j in range(values.shape[1])]
    return StaticTable(FUSION, tuple(basins), values, tuple(cols))


def test_cosine_examples():
    assert cosine([3, 4], [3, 4]) == pytest.approx(1.0)
    assert cosine([1, 0], [0, 1]) == 0.0
    assert cosine([1, 2, 2], [2, 1, 2]) == pytest.approx(8 / 9, abs=1e-12)
    with pytest.raises(ValueError):
        cosine([0, 0], [1, 1])


def test_cosine_is_scale_invariant():
    u = np.array([0.3, -1.2, 2.0])
    v = np.array([1.0, 0.5, -0.7])
    assert cosine(u, v) == pytest.approx(cosine(7.5 * u, v), abs=1e-12)


def test_matrix_invariants():
    rng = np.random.default_rng(42)
    for _ in range(50):
        n, d = rng.integers(3, 9), rng.integers(2, 6)
        S = similarity_matrix(_table(rng.normal(size=(n, d)))).values
        assert np.array_equal(S, S.T)
        assert np.allclose(np.diag(S), 1.0, atol=1e-12)
        assert (S >= -1.0).all() and (S <= 1.0).all()


def test_matrix_matches_pairwise_oracle():
    table = _table(np.random.default_rng(5).normal(size=(5, 4)))
    S = similarity_matrix(table).values
    Z, _ = standardize_columns(table.values)
    for i in range(5):
        for j in range(5):
            assert S[i, j] == cosine(Z[i], Z[j])


def test_three_point_table():
    S = similarity_matrix(_table([[0, 0], [1, 0], [0, 1]])).values
    assert np.array_equal(S, S.T)
    assert np.allclose(np.diag(S), 1.0)


def test_identical_pair_has_no_direction():
    with pytest.raises(ValueError, match="basin b0 has an all-zero standardized"):
        similarity_matrix(_table([[1.0, 2.0], [1.0, 2.0]]))


def _scored(scores):
    basins = ["A", "B", "C", "D"]
    S = np.eye(4)
    for name, s in scores.items():
        j = basins.index(name)
        S[0, j] = S[j, 0] = s
    return SimilarityMatrix("custom", tuple(basins), S)


def test_rank_ties_break_by_id():
    matrix = _scored({"B": 0.9, "C": 0.5, "D": 0.9})
    assert rank_and_select(matrix, "A", 2) == ["B", "D"]
    assert rank_and_select(matrix, "A", 3) == ["B", "D", "C"]


def test_rank_matches_full_sort():
    table = _table(np.random.default_rng(8).normal(size=(6, 3)))
    matrix = similarity_matrix(table)
    i = matrix.index_of("b2")
    others = [j for j in range(6) if j != i]
    oracle = sorted(others, key=lambda j: -matrix.values[i, j])[:3]
    assert rank_and_select(matrix, "b2", 3) == [matrix.basins[j] for j in oracle]


def test_topk_is_a_prefix():
    matrix = similarity_matrix(_table(np.random.default_rng(3).normal(size=(8, 4))))
    full = donor_ranking(matrix, "b4").ids
    for k in range(1, 8):
        assert rank_and_select(matrix, "b4", k) == full[:k]
    assert "b4" not in full


def test_rank_rejects_bad_requests():
    matrix = _scored({"B": 0.1, "C": 0.2, "D": 0.3})
    with pytest.raises(ValueError, match="out of range"):
        rank_and_select(matrix, "A", 4)
    with pytest.raises(ValueError, match="out of range"):
        rank_and_select(matrix, "A", 0)
    with pytest.raises(ValueError, match="unknown target basin Z"):
        rank_and_select(matrix, "Z", 1)


def test_random_selection():
    basins = ["a", "b", "c", "d", "e", "f"]
    first = select_random(basins, "c", 3, seed=11)
    assert first == select_random(basins, "c", 3, seed=11)
    assert "c" not in first and len(set(first)) == 3
    assert sorted(select_random(basins, "c", 5, seed=2)) == ["a", "b", "d", "e", "f"]


def test_random_selection_is_uniform():
    basins = ["t", "a", "b", "c", "d", "e"]
    counts = Counter(select_random(basins, "t", 1, seed=s)[0] for s in range(10_000))
    for b in "abcde":
        assert 0.18 <= counts[b] / 10_000 <= 0.22


def test_export_full_matrix_round_trip(tmp_path):
    matrix = similarity_matrix(_table(np.random.default_rng(1).normal(size=(3, 3))))
    path = export_similarity(matrix, tmp_path / "sim.csv")
    lines = open(path).read().strip().splitlines()
    assert len(lines) == 4
    assert lines[0].split(",") == ["basin_id", "b0", "b1", "b2"]
    loaded = load_similarity(path)
    assert loaded.basins == matrix.basins
    assert np.allclose(loaded.values, matrix.values, atol=1e-9)


def test_export_stripe(tmp_path):
    matrix = similarity_matrix(_table(np.random.default_rng(2).normal(size=(5, 3))))
    path = export_similarity(matrix, tmp_path / "stripe.csv", target="b1")
    rows = open(path).read().strip().splitlines()
    assert rows[0] == "donor_id,score"
    assert [r.split(",")[0] for r in rows[1:]] == donor_ranking(matrix, "b1").ids


def test_row_at_the_column_means_is_rejected():
    # 0.2 standardizes to round-off noise, not to an exact zero
    table = _table([[0.1, 0.4], [0.2, 0.5], [0.3, 0.6]])
    with pytest.raises(ValueError, match="basin b1 has an all-zero standardized"):
        similarity_matrix(table)


def test_permuting_basins_permutes_the_matrix():
    rng = np.random.default_rng(9)
    values = rng.normal(size=(7, 4))
    basins = [f"b{i}" for i in range(7)]
    S = similarity_matrix(_table(values, basins)).values
    perm = rng.permutation(7)
    P = similarity_matrix(_table(values[perm], [basins[i] for i in perm])).values
    assert np.allclose(P, S[np.ix_(perm, perm)], atol=1e-12)

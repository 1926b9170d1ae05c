# analytics/preprocessing.py
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.preprocessing import StandardScaler

from ingestion.types import ColumnStats, Period, SplitSpec


def fit_column_stats(matrix) -> ColumnStats:
    """Population mean/std per column; NaN entries are ignored."""
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] < 1:
        raise ValueError("cannot fit column statistics on an empty matrix")
    scaler = StandardScaler().fit(X)
    return ColumnStats(mean=scaler.mean_, std=np.sqrt(scaler.var_))


def apply_column_stats(matrix, stats: ColumnStats) -> np.ndarray:
    X = np.asarray(matrix, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X.reshape(-1, 1) if stats.d == 1 else X.reshape(1, -1)
    if X.shape[1] != stats.d:
        raise ValueError(f"dimension mismatch: matrix has {X.shape[1]} columns, stats have {stats.d}")
    safe = np.where(stats.std > 0, stats.std, 1.0)
    Z = (X - stats.mean) / safe
    # zero-variance columns carry no information
    Z[:, stats.std == 0] = 0.0
    if np.isnan(X).any():
        Z[np.isnan(X)] = np.nan
    return Z.reshape(-1) if squeeze else Z


def standardize_columns(matrix, stats: Optional[ColumnStats] = None) -> Tuple[np.ndarray, ColumnStats]:
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"standardize_columns needs an n x d matrix with n >= 1, got shape {X.shape}")
    if stats is None:
        stats = fit_column_stats(X)
    return apply_column_stats(X, stats), stats


def build_folds(
    basins: Sequence[str],
    n_folds: int,
    seed: int,
    train_period: Period,
    test_period: Period,
) -> List[SplitSpec]:
    """Seeded shuffle, then near-equal contiguous test chunks (larger chunks first)."""
    basins = list(basins)
    if n_folds < 2:
        raise ValueError(f"n_folds must be at least 2, got {n_folds}")
    if len(basins) < n_folds:
        raise ValueError(f"too few basins ({len(basins)}) for {n_folds} folds")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(basins))
    chunks = np.array_split(order, n_folds)

    folds = []
    for i, chunk in enumerate(chunks):
        test_idx = set(int(j) for j in chunk)
        test = [basins[j] for j in chunk]
        train = [b for j, b in enumerate(basins) if j not in test_idx]
        folds.append(SplitSpec(train, test, train_period, test_period, label=f"fold-{i}"))
    return folds

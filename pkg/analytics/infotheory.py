# analytics/infotheory.py
"""
Plug-in mutual information on equal-frequency bins.

    I(X;Y) = sum_x sum_y p(x,y) log( p(x,y) / (p(x) p(y)) )      [nats]

No bias correction is applied.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import mutual_info_score

from analytics.preprocessing import standardize_columns
from ingestion.types import StaticTable


@dataclass(frozen=True)
class MiMatrix:
    rows: Tuple[str, ...]
    columns: Tuple[str, ...]
    values: np.ndarray
    bins: int

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, index=list(self.rows), columns=list(self.columns))
        df.index.name = "attribute"
        return df


def equal_frequency_bins(x, bins: int) -> np.ndarray:
    """Bin index per sample; edges are sample quantiles, values on an edge go to the lower bin."""
    x = np.asarray(x, dtype=np.float64).ravel()
    edges = np.quantile(x, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    return np.searchsorted(edges, x, side="left")


def _mi_from_labels(lx: np.ndarray, ly: np.ndarray) -> float:
    # fixed argument order keeps I(x;y) == I(y;x) bitwise
    if lx.tobytes() > ly.tobytes():
        lx, ly = ly, lx
    return max(0.0, float(mutual_info_score(lx, ly)))


def mutual_information(x, y, bins: int = 16) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if bins < 2:
        raise ValueError(f"bins must be at least 2, got {bins}")
    if x.size < 2 * bins:
        raise ValueError(f"too few samples ({x.size}) for {bins} bins; need at least {2 * bins}")
    return _mi_from_labels(equal_frequency_bins(x, bins), equal_frequency_bins(y, bins))


def mi_matrix(attrs: StaticTable, embs: StaticTable, bins: int = 16) -> MiMatrix:
    if attrs.basins != embs.basins:
        raise ValueError("basin-order mismatch between attribute and embedding tables")
    if attrs.n < 2 * bins:
        raise ValueError(f"too few basins ({attrs.n}) for {bins} bins; need at least {2 * bins}")

    A, _ = standardize_columns(attrs.values)
    E, _ = standardize_columns(embs.values)
    la = [equal_frequency_bins(A[:, i], bins) for i in range(A.shape[1])]
    le = [equal_frequency_bins(E[:, j], bins) for j in range(E.shape[1])]

    values = np.empty((len(la), len(le)))
    for i, a in enumerate(la):
        for j, e in enumerate(le):
            values[i, j] = _mi_from_labels(a, e)
    return MiMatrix(rows=attrs.columns, columns=embs.columns, values=values, bins=bins)


def mi_summary(matrix: MiMatrix) -> pd.DataFrame:
    """Per attribute: the embedding dimension sharing the most information with it."""
    best = np.argmax(matrix.values, axis=1)
    return pd.DataFrame({
        "attribute": list(matrix.rows),
        "best_dimension": [matrix.columns[j] for j in best],
        "mi": matrix.values[np.arange(len(best)), best],
        "mean_mi": matrix.values.mean(axis=1),
    })


def write_mi_matrix(matrix: MiMatrix, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix.to_frame().to_csv(path, float_format="%.6f")
    return str(path)

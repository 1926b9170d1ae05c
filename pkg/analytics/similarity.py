# analytics/similarity.py
"""
Cosine similarity between basins and donor selection.

All three representations (attributes, fusion embeddings, satellite
embeddings) share one path: z-score the columns across the table, then
cosine between rows.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analytics.preprocessing import standardize_columns
from configs.columns import ID_COL, KIND_TO_METHOD
from ingestion.types import StaticTable

logger = logging.getLogger(__name__)

METHODS = ("attributes", "fusion", "aef", "custom")
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class SimilarityMatrix:
    method: str
    basins: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"Unknown similarity method '{self.method}'")
        values = np.array(self.values, dtype=np.float64, copy=True)
        n = len(self.basins)
        if values.shape != (n, n):
            raise ValueError(f"similarity values shape {values.shape} does not match {n} basins")
        values.setflags(write=False)
        object.__setattr__(self, "basins", tuple(self.basins))
        object.__setattr__(self, "values", values)

    def index_of(self, basin: str) -> int:
        try:
            return self.basins.index(basin)
        except ValueError:
            raise ValueError(f"unknown target basin {basin}") from None


@dataclass(frozen=True)
class DonorRanking:
    target: str
    donors: Tuple[Tuple[str, float], ...]

    @property
    def ids(self) -> List[str]:
        return [b for b, _ in self.donors]


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or u.shape != v.shape or u.size < 1:
        raise ValueError(f"cosine needs two vectors of equal length, got {u.shape} and {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("zero-norm vector in cosine similarity")
    return float(min(1.0, max(-1.0, np.dot(u, v) / (nu * nv))))


def similarity_matrix(table: StaticTable, method: Optional[str] = None) -> SimilarityMatrix:
    if table.n < 2:
        raise ValueError("similarity needs at least 2 basins")
    method = method or KIND_TO_METHOD.get(table.kind, "custom")

    Z, _ = standardize_columns(table.values)
    for i, b in enumerate(table.basins):
        # a row at the column means standardizes to round-off, not to exact zeros
        if np.linalg.norm(Z[i]) <= DEGENERATE_TOL * np.sqrt(Z.shape[1]):
            raise ValueError(
                f"basin {b} has an all-zero standardized {table.kind} row; "
                "cosine similarity is undefined"
            )

    n = table.n
    S = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            S[i, j] = S[j, i] = cosine(Z[i], Z[j])

    logger.debug("Similarity matrix (%s) over %d basins", method, n)
    return SimilarityMatrix(method=method, basins=table.basins, values=S)


def donor_ranking(matrix: SimilarityMatrix, target: str) -> DonorRanking:
    i = matrix.index_of(target)
    scored = [(b, float(matrix.values[i, j])) for j, b in enumerate(matrix.basins) if j != i]
    # descending score, ties by ascending id
    scored.sort(key=lambda x: (-x[1], x[0]))
    return DonorRanking(target=target, donors=tuple(scored))


def rank_and_select(matrix: SimilarityMatrix, target: str, k: int) -> List[str]:
    n = len(matrix.basins)
    matrix.index_of(target)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} out of range 1..{n - 1}")
    return donor_ranking(matrix, target).ids[:k]


def select_random(basins: Sequence[str], target: str, k: int, seed: int) -> List[str]:
    basins = list(basins)
    if not 1 <= k <= len(basins) - 1:
        raise ValueError(f"k={k} out of range 1..{len(basins) - 1}")
    candidates = [b for b in basins if b != target]
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(candidates), size=k, replace=False)
    return [candidates[int(i)] for i in picks]


def export_similarity(matrix: SimilarityMatrix, path, target: Optional[str] = None) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if target is None:
        df = pd.DataFrame(matrix.values, index=list(matrix.basins), columns=list(matrix.basins))
        df.index.name = ID_COL
        df.to_csv(path)
    else:
        ranking = donor_ranking(matrix, target)
        pd.DataFrame(list(ranking.donors), columns=["donor_id", "score"]).to_csv(path, index=False)
    return str(path)


def load_similarity(path, method: str = "custom") -> SimilarityMatrix:
    df = pd.read_csv(path, dtype={ID_COL: str}).set_index(ID_COL)
    basins = [str(b) for b in df.index]
    if [str(c) for c in df.columns] != basins:
        raise ValueError(f"{path} is not a square similarity matrix")
    return SimilarityMatrix(method=method, basins=tuple(basins), values=df.to_numpy(dtype=np.float64))

# analytics/clustering.py
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.cluster import kmeans_plusplus
from sklearn.metrics import silhouette_samples

from ingestion.types import Period, SplitSpec, StaticTable

logger = logging.getLogger(__name__)

MAX_ITER = 300


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    basins: Tuple[str, ...]
    silhouette: float
    inertia: float
    kind: str = "custom"
    inertia_history: List[float] = field(default_factory=list)

    @property
    def assignments(self) -> Dict[str, int]:
        return {b: int(c) for b, c in zip(self.basins, self.labels)}

    def members(self, cluster: int) -> List[str]:
        return [b for b, c in zip(self.basins, self.labels) if c == cluster]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"basin_id": list(self.basins), "cluster": self.labels.astype(int)})


def _sq_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _assign(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # argmin picks the lowest cluster index on ties
    return np.argmin(_sq_distances(X, C), axis=1)


def _inertia(X: np.ndarray, C: np.ndarray, labels: np.ndarray) -> float:
    return float(((X - C[labels]) ** 2).sum())


def _reseed_empty(X: np.ndarray, C: np.ndarray, labels: np.ndarray, K: int) -> None:
    """Move the point farthest from its own centroid into each empty cluster (in place)."""
    for c in range(K):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=K)
        d = ((X - C[labels]) ** 2).sum(axis=1)
        # a point may only leave a cluster that keeps at least one member
        d[counts[labels] <= 1] = -1.0
        far = int(np.argmax(d))
        if d[far] <= 0:
            raise RuntimeError(
                f"cannot re-seed empty cluster {c}: fewer than {K} distinct points available"
            )
        labels[far] = c
        C[c] = X[far]


def _lloyd(X: np.ndarray, C: np.ndarray, K: int, max_iter: int) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    labels = _assign(X, C)
    history = []
    for _ in range(max_iter):
        _reseed_empty(X, C, labels, K)
        for c in range(K):
            C[c] = X[labels == c].mean(axis=0)
        new_labels = _assign(X, C)
        history.append(_inertia(X, C, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    else:
        # iteration cap reached: make sure no cluster ends empty
        _reseed_empty(X, C, labels, K)
        history.append(_inertia(X, C, labels))
    return C, labels, history


def kmeans_fit(
    points,
    K: int,
    seed: int,
    restarts: int = 10,
    basins: Optional[Sequence[str]] = None,
    kind: str = "custom",
    max_iter: int = MAX_ITER,
) -> ClusterModel:
    """k-means++ seeding, Lloyd iterations, best of ``restarts`` by inertia."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = X.shape[0]
    if not 2 <= K <= n:
        raise ValueError(f"K={K} out of range 2..{n}")
    basins = tuple(basins) if basins is not None else tuple(str(i) for i in range(n))

    best = None
    for r in range(max(1, restarts)):
        state = int(np.random.default_rng([seed, r]).integers(0, 2**31 - 1))
        C, _ = kmeans_plusplus(X, n_clusters=K, random_state=state)
        C, labels, history = _lloyd(X, C.copy(), K, max_iter)
        inertia = history[-1]
        if best is None or inertia < best[0]:
            best = (inertia, C, labels, history)

    inertia, C, labels, history = best
    return ClusterModel(
        k=K,
        centroids=C,
        labels=labels,
        basins=basins,
        silhouette=silhouette(X, labels) if K < n else 0.0,
        inertia=inertia,
        kind=kind,
        inertia_history=history,
    )


def silhouette(points, assignments) -> float:
    """Mean silhouette with Euclidean distance; points in singleton clusters score 0."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    labels = np.asarray(assignments)
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise ValueError("silhouette needs at least 2 clusters")

    if clusters.size == X.shape[0]:
        # every cluster a singleton
        return 0.0
    return float(silhouette_samples(X, labels, metric="euclidean").mean())


def select_k(
    points,
    k_min: int = 2,
    k_max: int = 15,
    seed: int = 0,
    restarts: int = 10,
    basins: Optional[Sequence[str]] = None,
    kind: str = "custom",
) -> Tuple[int, ClusterModel, Dict[int, float]]:
    """Fit every K in [k_min, k_max]; keep the silhouette argmax (ties go to the smaller K)."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if k_min < 2 or k_max < k_min:
        raise ValueError(f"invalid K range {k_min}..{k_max}")
    if k_max > X.shape[0]:
        raise ValueError(f"k_max={k_max} exceeds the number of points ({X.shape[0]})")

    profile = {}
    best_k, best_model = None, None
    for K in range(k_min, k_max + 1):
        model = kmeans_fit(X, K, seed=seed, restarts=restarts, basins=basins, kind=kind)
        profile[K] = model.silhouette
        logger.debug("K=%d silhouette=%.4f inertia=%.4f", K, model.silhouette, model.inertia)
        if best_model is None or model.silhouette > best_model.silhouette:
            best_k, best_model = K, model
    return best_k, best_model, profile


def loco_splits(model: ClusterModel, train_period: Period, test_period: Period) -> List[SplitSpec]:
    if model.k < 2:
        raise ValueError("leave-one-cluster-out needs at least 2 clusters")
    splits = []
    for c in range(model.k):
        test = model.members(c)
        if not test:
            raise ValueError(f"cluster {c} is empty")
        train = [b for b in model.basins if b not in set(test)]
        splits.append(SplitSpec(train, test, train_period, test_period, label=f"cluster-{c}:{model.kind}"))
    return splits


def cluster_profile(model: ClusterModel, table: StaticTable) -> pd.DataFrame:
    """Quartiles of every column of ``table`` within each cluster."""
    df = table.subset(list(model.basins)).to_frame().drop(columns=["basin_id"])
    df["cluster"] = model.labels
    rows = []
    for c, grp in df.groupby("cluster"):
        for col in table.columns:
            q = grp[col].quantile([0.25, 0.5, 0.75]).to_numpy()
            rows.append({"cluster": int(c), "attribute": col, "n": len(grp),
                         "q25": q[0], "median": q[1], "q75": q[2]})
    return pd.DataFrame(rows)

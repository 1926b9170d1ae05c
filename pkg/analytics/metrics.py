# analytics/metrics.py
"""
Skill scores and the statistics used to compare them.

Implemented functions:
    nse: Nash-Sutcliffe efficiency.
    kge: Kling-Gupta efficiency with its r / alpha / beta components.
    pool_and_bootstrap: seed-pooled bootstrap of NSE and KGE.
    ks_two_sample: two-sided two-sample Kolmogorov-Smirnov test.
    cdf_points: empirical CDF step points for plotting.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special, stats
from statsmodels.distributions.empirical_distribution import ECDF

logger = logging.getLogger(__name__)

BOOTSTRAP_METRICS = ("nse", "kge")


class UndefinedScoreError(ValueError):
    """The score has no value for these observations (e.g. zero variance)."""


@dataclass(frozen=True)
class MetricRecord:
    basin: str
    seed: int
    metric: str
    value: float
    experiment: str = ""

    @property
    def defined(self) -> bool:
        return bool(np.isfinite(self.value))


@dataclass
class BootstrapResult:
    basin: str
    scores: Dict[str, np.ndarray]
    pooled_size: int
    replicate_size: int
    fraction: float
    n_undefined: Dict[str, int] = field(default_factory=dict)

    @property
    def reps(self) -> int:
        return len(next(iter(self.scores.values())))

    def defined(self, metric: str) -> np.ndarray:
        s = self.scores[metric]
        return s[np.isfinite(s)]

    def median(self, metric: str) -> float:
        d = self.defined(metric)
        return float(np.median(d)) if d.size else float("nan")


class KSResult(NamedTuple):
    D: float
    p: float


def _aligned(obs, sim) -> Tuple[np.ndarray, np.ndarray]:
    obs = np.asarray(obs, dtype=np.float64).ravel()
    sim = np.asarray(sim, dtype=np.float64).ravel()
    if obs.shape != sim.shape:
        raise ValueError(f"obs and sim differ in length ({obs.size} vs {sim.size})")
    keep = np.isfinite(obs) & np.isfinite(sim)
    obs, sim = obs[keep], sim[keep]
    if obs.size < 2:
        raise UndefinedScoreError(f"need at least 2 valid pairs, got {obs.size}")
    return obs, sim


def nse(obs, sim) -> float:
    """1 - sum((obs - sim)^2) / sum((obs - mean(obs))^2), over pairs with valid obs."""
    obs, sim = _aligned(obs, sim)
    denominator = np.sum((obs - np.mean(obs)) ** 2)
    if denominator == 0:
        raise UndefinedScoreError("zero observation variance; NSE undefined")
    return float(1.0 - np.sum((obs - sim) ** 2) / denominator)


def kge(obs, sim) -> Tuple[float, float, float, float]:
    """Returns (kge, r, alpha, beta) with alpha = sd_sim/sd_obs, beta = mean_sim/mean_obs."""
    obs, sim = _aligned(obs, sim)
    mo, ms = np.mean(obs), np.mean(sim)
    do, ds = obs - mo, sim - ms
    var_o, var_s = np.mean(do * do), np.mean(ds * ds)
    if var_o == 0:
        raise UndefinedScoreError("zero observation variance; KGE undefined")
    if mo == 0:
        raise UndefinedScoreError("zero observation mean; KGE undefined")
    if var_s == 0:
        raise UndefinedScoreError("constant simulation; correlation undefined")

    r = float(np.clip(np.mean(do * ds) / math.sqrt(var_o * var_s), -1.0, 1.0))
    alpha = float(math.sqrt(var_s) / math.sqrt(var_o))
    beta = float(ms / mo)
    score = 1.0 - math.sqrt((r - 1.0) ** 2 + (alpha - 1.0) ** 2 + (beta - 1.0) ** 2)
    return score, r, alpha, beta


def _score(metric: str, obs: np.ndarray, sim: np.ndarray) -> float:
    if metric == "nse":
        return nse(obs, sim)
    if metric == "kge":
        return kge(obs, sim)[0]
    raise ValueError(f"Unknown metric '{metric}'")


def pool_and_bootstrap(
    seed_runs: Sequence[Tuple[Sequence[float], Sequence[float]]],
    fraction: float = 0.8,
    reps: int = 100,
    rng_seed: int = 0,
    basin: str = "",
    metrics: Sequence[str] = BOOTSTRAP_METRICS,
) -> BootstrapResult:
    """
    Pool the (obs, sim) pairs of every seed run, then score ``reps`` replicates
    of floor(fraction * N) pairs drawn with replacement. Replicate r draws from
    its own stream seeded by (rng_seed, r).
    """
    if len(seed_runs) < 1:
        raise ValueError("bootstrap needs at least one seed run")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")

    obs_parts, sim_parts = [], []
    for obs, sim in seed_runs:
        o = np.asarray(obs, dtype=np.float64).ravel()
        s = np.asarray(sim, dtype=np.float64).ravel()
        if o.shape != s.shape:
            raise ValueError("obs and sim differ in length within a seed run")
        keep = np.isfinite(o) & np.isfinite(s)
        obs_parts.append(o[keep])
        sim_parts.append(s[keep])
    pooled_obs = np.concatenate(obs_parts)
    pooled_sim = np.concatenate(sim_parts)

    N = pooled_obs.size
    if N < 5:
        raise ValueError(f"pooled sample too small for bootstrap ({N} < 5)")
    m = int(math.floor(fraction * N + 1e-9))

    scores = {metric: np.empty(reps) for metric in metrics}
    undefined = {metric: 0 for metric in metrics}
    for r in range(reps):
        idx = np.random.default_rng([rng_seed, r]).integers(0, N, size=m)
        o, s = pooled_obs[idx], pooled_sim[idx]
        for metric in metrics:
            try:
                scores[metric][r] = _score(metric, o, s)
            except UndefinedScoreError:
                scores[metric][r] = np.nan
                undefined[metric] += 1

    if any(undefined.values()):
        logger.debug("basin %s: undefined bootstrap replicates %s", basin, undefined)
    return BootstrapResult(
        basin=basin,
        scores=scores,
        pooled_size=N,
        replicate_size=m,
        fraction=fraction,
        n_undefined=undefined,
    )


def ks_statistic(x, y) -> float:
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    if x.size < 1 or y.size < 1:
        raise ValueError("KS test needs two non-empty samples")
    grid = np.concatenate([x, y])
    # integer counts scaled to a common denominator, divided once
    cx = np.searchsorted(x, grid, side="right").astype(np.int64) * y.size
    cy = np.searchsorted(y, grid, side="right").astype(np.int64) * x.size
    return int(np.max(np.abs(cx - cy))) / (x.size * y.size)


def ks_two_sample(x, y, exact: bool = False) -> KSResult:
    """
    D = sup |F_x - F_y| from a merged sorted sweep; p from the asymptotic
    Kolmogorov distribution with the small-sample lambda correction, or from
    exact enumeration when ``exact`` and the smaller sample has <= 10 points.
    """
    D = ks_statistic(x, y)
    n1, n2 = np.size(x), np.size(y)
    if exact and min(n1, n2) <= 10:
        p = float(stats.ks_2samp(np.ravel(x), np.ravel(y), method="exact").pvalue)
    else:
        en = math.sqrt(n1 * n2 / (n1 + n2))
        p = float(special.kolmogorov((en + 0.12 + 0.11 / en) * D))
    return KSResult(D=D, p=min(1.0, max(0.0, p)))


def cdf_points(values) -> List[Tuple[float, float]]:
    """Sorted distinct values with their right-continuous ECDF heights i/n."""
    v = np.asarray(values, dtype=np.float64).ravel()
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError("cdf_points needs at least one finite value")
    xs = np.unique(v)
    heights = ECDF(v)(xs)
    return [(float(a), float(b)) for a, b in zip(xs, heights)]


def write_cdf(values, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(cdf_points(values), columns=["value", "fraction"]).to_csv(path, index=False)
    return str(path)

# ingestion/synthetic.py
"""
Synthetic basin fleets for desk-scale verification.

Every basin is a capped linear reservoir

    Q_t     = S_t / k
    S_{t+1} = min(c, S_t + P_t - ET_t - Q_t),   S_0 = c / 2

with actual evaporation ET_t = min(e * PET_t, S_t + P_t - Q_t) so storage
never goes negative. All basins share one regional weather pattern with
per-basin scaling and jitter, so flow similarity follows parameter
similarity.
"""

import logging
from typing import Dict

import numpy as np
import pandas as pd

from configs.columns import (
    AEF,
    ATTRIBUTES,
    DATE_COL,
    EMBEDDING_COLS,
    FLOW_COL,
    FORCING_COLS,
    SYNTH_ATTRIBUTE_COLS,
)
from ingestion.types import BasinArchive, StaticTable, TimeSeriesFrame

logger = logging.getLogger(__name__)

THETA_LOW = np.array([5.0, 50.0, 0.2])
THETA_HIGH = np.array([50.0, 500.0, 1.0])

# The theta -> embedding map is the same for every fleet
ENCODING_SEED = 20250101
EMBEDDING_NOISE = 0.01
REGIME_SPREAD = 0.03


def simulate_reservoir(k, capacity, evap, precip, pet) -> Dict[str, np.ndarray]:
    """
    Run the reservoir for one or many basins.

    Scalars or 1-D arrays of basins for the parameters; ``precip``/``pet`` are
    (T,) or (T, n_basins). Returns storage (T+1, ...), flow, evaporation and
    spill (T, ...), so that S_{t+1} - S_t = P_t - ET_t - Q_t - spill_t.
    """
    k = np.asarray(k, dtype=np.float64)
    capacity = np.asarray(capacity, dtype=np.float64)
    evap = np.asarray(evap, dtype=np.float64)
    precip = np.asarray(precip, dtype=np.float64)
    pet = np.asarray(pet, dtype=np.float64)
    if np.any(k <= 1) or np.any(capacity <= 0):
        raise ValueError("recession constant must exceed 1 day and capacity must be positive")

    T = precip.shape[0]
    storage = np.empty((T + 1,) + precip.shape[1:])
    flow = np.empty_like(precip)
    et = np.empty_like(precip)
    spill = np.empty_like(precip)

    S = np.broadcast_to(capacity / 2.0, precip.shape[1:]).astype(np.float64)
    storage[0] = S
    for t in range(T):
        Q = S / k
        avail = S + precip[t] - Q
        E = np.minimum(evap * pet[t], avail)
        nxt = avail - E
        over = np.maximum(nxt - capacity, 0.0)
        S = nxt - over
        flow[t], et[t], spill[t], storage[t + 1] = Q, E, over, S

    return {"storage": storage, "flow": flow, "evaporation": et, "spill": spill}


def _theta_unit(rng: np.random.Generator, n_basins: int, n_regimes: int) -> np.ndarray:
    if n_regimes <= 0:
        return rng.uniform(0.0, 1.0, size=(n_basins, 3))

    # regime centres on a shuffled diagonal lattice, one lattice step apart per axis
    grid = (np.arange(n_regimes) + 0.5) / n_regimes
    centres = np.column_stack([grid, rng.permutation(grid), rng.permutation(grid)])
    labels = np.arange(n_basins) % n_regimes
    u = centres[labels] + rng.normal(0.0, REGIME_SPREAD, size=(n_basins, 3))
    return np.clip(u, 0.0, 1.0)


def _regional_weather(rng: np.random.Generator, dates: pd.DatetimeIndex) -> Dict[str, np.ndarray]:
    doy = dates.dayofyear.values.astype(np.float64)
    season = np.sin(2.0 * np.pi * (doy - 80.0) / 365.25)
    T = len(dates)

    wet_prob = 0.35 - 0.1 * season
    wet = rng.uniform(size=T) < wet_prob
    amount = rng.exponential(8.0, size=T)
    return {
        "season": season,
        "prcp": np.where(wet, amount, 0.0),
        "tmax": 15.0 + 12.0 * season + rng.normal(0.0, 2.0, size=T),
        "srad": 220.0 + 110.0 * season + rng.normal(0.0, 15.0, size=T),
    }


def generate_synthetic_fleet(
    n_basins: int,
    n_days: int,
    seed: int,
    start: str = "1980-01-01",
    n_regimes: int = 0,
) -> BasinArchive:
    if n_basins < 2:
        raise ValueError(f"a fleet needs at least 2 basins, got {n_basins}")
    if n_days < 800:
        raise ValueError(f"a fleet needs at least 800 days, got {n_days}")

    rng = np.random.default_rng(seed)
    dates = pd.date_range(start, periods=n_days, freq="D", name=DATE_COL)
    basins = [f"{i + 1:08d}" for i in range(n_basins)]

    u = _theta_unit(rng, n_basins, n_regimes)
    theta = THETA_LOW + u * (THETA_HIGH - THETA_LOW)
    k, capacity, evap = theta[:, 0], theta[:, 1], theta[:, 2]

    weather = _regional_weather(rng, dates)
    season = weather["season"]

    # per-basin scaling and jitter on top of the shared weather
    scale = rng.uniform(0.8, 1.2, size=n_basins)
    jitter = rng.lognormal(0.0, 0.3, size=(n_days, n_basins))
    prcp = weather["prcp"][:, None] * scale[None, :] * jitter

    tmax = weather["tmax"][:, None] + rng.normal(0.0, 1.0, size=(n_days, n_basins))
    tmin = tmax - 8.0 - rng.uniform(0.0, 4.0, size=(n_days, n_basins))
    srad = np.maximum(weather["srad"][:, None] + rng.normal(0.0, 10.0, size=(n_days, n_basins)), 0.0)
    dayl = np.repeat((43200.0 + 10800.0 * season)[:, None], n_basins, axis=1)
    vp = 900.0 + 500.0 * (season[:, None] + 1.0) / 2.0 + rng.normal(0.0, 50.0, size=(n_days, n_basins))
    pet = np.maximum(1.0 + 1.5 * (season[:, None] + 1.0) + rng.normal(0.0, 0.2, size=(n_days, n_basins)), 0.0)

    sim = simulate_reservoir(k, capacity, evap, prcp, pet)

    forcings, flow = {}, {}
    columns = {"prcp": prcp, "dayl": dayl, "srad": srad, "tmin": tmin, "tmax": tmax, "vp": vp, "pet": pet}
    for j, b in enumerate(basins):
        forcings[b] = TimeSeriesFrame(pd.DataFrame({c: columns[c][:, j] for c in FORCING_COLS}, index=dates))
        flow[b] = TimeSeriesFrame(pd.DataFrame({FLOW_COL: sim["flow"][:, j]}, index=dates))

    nuisance = rng.normal(0.0, 1.0, size=(n_basins, len(SYNTH_ATTRIBUTE_COLS) - 3))
    attributes = StaticTable(ATTRIBUTES, tuple(basins), np.hstack([theta, nuisance]), tuple(SYNTH_ATTRIBUTE_COLS))

    encoding = np.random.default_rng(ENCODING_SEED).normal(0.0, 1.0, size=(len(EMBEDDING_COLS), 3))
    emb = (u - 0.5) @ encoding.T + rng.normal(0.0, EMBEDDING_NOISE, size=(n_basins, len(EMBEDDING_COLS)))
    embeddings = StaticTable(AEF, tuple(basins), emb, tuple(EMBEDDING_COLS))

    logger.info("Generated synthetic fleet: %d basins x %d days (seed %d)", n_basins, n_days, seed)
    return BasinArchive(attributes=attributes, embeddings=embeddings, forcings=forcings, flow=flow)

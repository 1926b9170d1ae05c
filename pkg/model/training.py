# model/training.py
"""
Multi-basin training, prediction and fusion-embedding extraction.

Windows are (basin, end day) pairs: the network sees ``seq_length`` days of
forcings ending on that day and is fit to that day's flow. Forcings, static
descriptors and flow are standardized with statistics from the donors'
gradient portion of the train period only; the final ``val_fraction`` of the
train period is the validation slice used to pick the best epoch.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analytics.metrics import UndefinedScoreError, nse
from analytics.preprocessing import apply_column_stats, fit_column_stats
from configs.columns import FORCING_COLS, FUSION
from ingestion.types import BasinArchive, ColumnStats, Period, StaticTable, TimeSeriesFrame
from model.network import (
    ModelConfig,
    ParamSet,
    dropout_mask,
    forward,
    frontend_embedding,
    init_params,
    loss_and_grad,
)
from model.optim import AdamState, adam_step

logger = logging.getLogger(__name__)

SIM_COL = "q_sim"
PREDICT_CHUNK = 512


@dataclass
class TrainedModel:
    config: ModelConfig
    params: ParamSet
    best_epoch: int
    forcing_stats: ColumnStats
    static_stats: ColumnStats
    flow_stats: ColumnStats
    donors: Tuple[str, ...]
    history: List[Dict[str, float]] = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.best_epoch <= self.config.epochs:
            raise ValueError(f"best epoch {self.best_epoch} outside 1..{self.config.epochs}")
        self.donors = tuple(self.donors)


@dataclass
class _WindowPool:
    """Standardized forcings of several basins laid end to end."""

    forcings: np.ndarray               # (total_days, n_dyn)
    offsets: Dict[str, int]            # basin -> row of its first day
    dates: Dict[str, pd.DatetimeIndex]
    statics: np.ndarray                # (n_basins, n_static), standardized
    basin_rows: Dict[str, int]

    def batch(self, ends: np.ndarray, basin_idx: np.ndarray, seq_length: int) -> Tuple[np.ndarray, np.ndarray]:
        steps = np.arange(-seq_length + 1, 1)
        dyn = self.forcings[ends[:, None] + steps[None, :]]
        return dyn, self.statics[basin_idx]


def _forcing_matrix(archive: BasinArchive, basin: str) -> pd.DataFrame:
    return archive.forcing_frame(basin).data[FORCING_COLS]


def _stack_rows(archive: BasinArchive, donors: Sequence[str], period: Period) -> Tuple[np.ndarray, np.ndarray]:
    forcing_rows, flow_rows = [], []
    for b in donors:
        forcing_rows.append(_forcing_matrix(archive, b).loc[str(period.start):str(period.end)].to_numpy())
        flow_rows.append(archive.flow_series(b).loc[str(period.start):str(period.end)].to_numpy())
    return np.vstack(forcing_rows), np.concatenate(flow_rows)


def _complete_windows(forcings: np.ndarray, seq_length: int) -> np.ndarray:
    """Boolean per row: the ``seq_length`` rows ending here are all present."""
    bad = (~np.isfinite(forcings).all(axis=1)).astype(np.int64)
    csum = np.concatenate([[0], np.cumsum(bad)])
    ok = np.zeros(len(forcings), dtype=bool)
    if len(forcings) >= seq_length:
        ends = np.arange(seq_length - 1, len(forcings))
        ok[ends] = (csum[ends + 1] - csum[ends + 1 - seq_length]) == 0
    return ok


def _static_table(archive: BasinArchive, config: ModelConfig, table: Optional[StaticTable]) -> StaticTable:
    table = table if table is not None else archive.static_table(config.static_kind)
    if table.kind != config.static_kind:
        raise ValueError(f"model trained on '{config.static_kind}' static vectors, got a '{table.kind}' table")
    if table.d != config.n_static:
        raise ValueError(f"n_static={config.n_static} but the {table.kind} table has {table.d} columns")
    return table


def _build_pool(archive, basins, table, forcing_stats, static_stats) -> _WindowPool:
    parts, offsets, dates, rows = [], {}, {}, {}
    total = 0
    for i, b in enumerate(basins):
        frame = _forcing_matrix(archive, b)
        parts.append(apply_column_stats(frame.to_numpy(), forcing_stats))
        offsets[b] = total
        dates[b] = frame.index
        rows[b] = i
        total += len(frame)
    statics = apply_column_stats(np.vstack([table.row(b) for b in basins]), static_stats)
    return _WindowPool(np.vstack(parts), offsets, dates, statics, rows)


def _windows(pool: _WindowPool, archive: BasinArchive, basins: Sequence[str], period: Period,
             seq_length: int, flow_stats: ColumnStats) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Global end rows, basin rows and standardized targets of every valid window in ``period``."""
    ends, owners, targets = [], [], []
    for b in basins:
        idx = pool.dates[b]
        lo = pool.offsets[b]
        ok = _complete_windows(pool.forcings[lo:lo + len(idx)], seq_length)
        flow = archive.flow_series(b).reindex(idx).to_numpy()
        in_period = (idx >= pd.Timestamp(period.start)) & (idx <= pd.Timestamp(period.end))
        keep = np.nonzero(ok & in_period & np.isfinite(flow))[0]
        ends.append(lo + keep)
        owners.append(np.full(keep.size, pool.basin_rows[b]))
        targets.append(apply_column_stats(flow[keep], flow_stats))
    return np.concatenate(ends), np.concatenate(owners), np.concatenate(targets)


def _predict_rows(params, config, pool: _WindowPool, ends, owners) -> np.ndarray:
    out = np.empty(ends.size)
    for start in range(0, ends.size, PREDICT_CHUNK):
        sl = slice(start, start + PREDICT_CHUNK)
        dyn, static = pool.batch(ends[sl], owners[sl], config.seq_length)
        out[sl] = forward(params, config, dyn, static)
    return out


def _validation_nse(params, config, pool, archive, donors, val_period, flow_stats) -> float:
    scores = []
    for b in donors:
        ends, owners, targets = _windows(pool, archive, [b], val_period, config.seq_length, flow_stats)
        if ends.size < 2:
            continue
        sim = _predict_rows(params, config, pool, ends, owners)
        try:
            scores.append(nse(targets, sim))
        except UndefinedScoreError:
            continue
    return float(np.median(scores)) if scores else float("-inf")


def train(
    config: ModelConfig,
    archive: BasinArchive,
    donors: Sequence[str],
    train_period: Period,
    static_table: Optional[StaticTable] = None,
) -> TrainedModel:
    donors = sorted(set(donors))
    if not donors:
        raise ValueError("train needs at least one donor basin")
    table = _static_table(archive, config, static_table)
    grad_period, val_period = train_period.split(1.0 - config.val_fraction)

    warm_start = pd.Timestamp(train_period.start) - pd.Timedelta(days=config.seq_length - 1)
    for b in donors:
        if not archive.forcing_frame(b).covers(warm_start, train_period.end):
            raise ValueError(
                f"basin {b}: forcings do not cover {train_period} plus {config.seq_length - 1} warm-up days"
            )

    forcing_rows, flow_rows = _stack_rows(archive, donors, grad_period)
    forcing_stats = fit_column_stats(forcing_rows)
    flow_stats = fit_column_stats(flow_rows.reshape(-1, 1))
    static_stats = fit_column_stats(np.vstack([table.row(b) for b in donors]))

    pool = _build_pool(archive, donors, table, forcing_stats, static_stats)
    ends, owners, targets = _windows(pool, archive, donors, grad_period, config.seq_length, flow_stats)
    if ends.size == 0:
        raise RuntimeError(f"no valid training windows in {grad_period} for {len(donors)} donor(s)")
    logger.info("Training on %d windows from %d donors (%s, mode=%s)",
                ends.size, len(donors), config.static_kind, config.frontend_mode)

    state = AdamState.initial(init_params(config, config.seed))
    best_params, best_epoch, best_score = None, 0, -np.inf
    history = []

    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(ends.size)
        sq_sum = 0.0
        for j, start in enumerate(range(0, ends.size, config.batch_size)):
            sel = order[start:start + config.batch_size]
            dyn, static = pool.batch(ends[sel], owners[sel], config.seq_length)
            mask = dropout_mask(rng, sel.size, config.hidden_size, config.dropout)
            loss, grads = loss_and_grad(state.params, config, dyn, static, targets[sel], dropout_mask=mask)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}, batch {j + 1}: loss={loss}")
            sq_sum += loss * sel.size
            state = adam_step(state, grads, config.learning_rate)

        train_loss = sq_sum / ends.size
        val_nse = _validation_nse(state.params, config, pool, archive, donors, val_period, flow_stats)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_nse": val_nse})
        logger.info("epoch %d/%d loss=%.5f val median NSE=%.4f", epoch, config.epochs, train_loss, val_nse)

        # strict improvement keeps the earliest epoch on ties
        if best_params is None or val_nse > best_score:
            best_params = {k: v.copy() for k, v in state.params.items()}
            best_epoch, best_score = epoch, val_nse

    return TrainedModel(
        config=config,
        params=best_params,
        best_epoch=best_epoch,
        forcing_stats=forcing_stats,
        static_stats=static_stats,
        flow_stats=flow_stats,
        donors=tuple(donors),
        history=history,
    )


def predict(
    model: TrainedModel,
    archive: BasinArchive,
    basin: str,
    period: Period,
    static_table: Optional[StaticTable] = None,
) -> TimeSeriesFrame:
    """One de-standardized prediction per day of ``period``; negative flows clip to zero."""
    config = model.config
    table = _static_table(archive, config, static_table)
    frame = _forcing_matrix(archive, basin)
    warm_start = pd.Timestamp(period.start) - pd.Timedelta(days=config.seq_length - 1)
    if not archive.forcing_frame(basin).covers(warm_start, period.end):
        raise ValueError(
            f"insufficient warm-up history for basin {basin}: forcings must cover "
            f"{warm_start.date()}..{period.end}"
        )

    forcings = apply_column_stats(frame.loc[warm_start:pd.Timestamp(period.end)].to_numpy(), model.forcing_stats)
    static = apply_column_stats(table.row(basin), model.static_stats)
    n = period.n_days
    steps = np.arange(config.seq_length)
    sim = np.empty(n)
    for start in range(0, n, PREDICT_CHUNK):
        rows = np.arange(start, min(n, start + PREDICT_CHUNK))
        dyn = forcings[rows[:, None] + steps[None, :]]
        if not np.all(np.isfinite(dyn)):
            bad = rows[~np.isfinite(dyn).all(axis=(1, 2))][0]
            raise ValueError(
                f"missing forcing value inside the window ending {period.dates()[bad].date()} for basin {basin}"
            )
        sim[rows] = forward(model.params, config, dyn, np.broadcast_to(static, (rows.size, static.size)))

    q = sim * model.flow_stats.std[0] + model.flow_stats.mean[0]
    q = np.maximum(q, 0.0)
    return TimeSeriesFrame(pd.DataFrame({SIM_COL: q}, index=period.dates()))


def extract_fusion_embeddings(model: TrainedModel, table: StaticTable) -> StaticTable:
    config = model.config
    if config.frontend_mode != "attr-fc":
        raise ValueError("model front end is joint-mlp; the embedding is not attribute-separable")
    if table.kind != config.static_kind:
        raise ValueError(f"model trained on '{config.static_kind}' static vectors, got a '{table.kind}' table")
    Z = apply_column_stats(table.values, model.static_stats)
    E = frontend_embedding(model.params, config, Z)
    columns = tuple(f"f{i:02d}" for i in range(E.shape[1]))
    return StaticTable(FUSION, table.basins, E, columns)

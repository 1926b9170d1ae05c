# experiments/runner.py
"""
Cells, seeds and the resumable result log shared by every experiment.

A cell is one unit of work (one training run, or one bootstrap pass) with a
stable key. Results go to two tables: ``result_rows`` (one row per cell,
basin, metric and replicate) and ``cells`` (the row count a complete cell
has). A rerun skips every complete cell and recomputes the rest; inserts are
``ON CONFLICT DO NOTHING`` so partially written cells converge to the same
table.
"""

import hashlib
import json
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd
from sqlalchemy import text

from analytics.metrics import UndefinedScoreError, kge, nse
from configs.columns import DATE_COL, ID_COL
from database.db import get_engine
from database.init_db import init_schema
from ingestion.types import BasinArchive, Period, StaticTable
from model.network import ModelConfig
from model.training import SIM_COL, extract_fusion_embeddings, predict, train

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "experiment", "cell_key", "label", "method", "k", "seed",
    "basin_id", "metric", "replicate", "value", "wall_time", "completed_at",
]
SCORE_METRICS = ("nse", "kge")


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 31-bit seed from the master seed and a cell descriptor."""
    payload = json.dumps([int(master_seed)] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(payload.encode("utf-8")).digest()[:4], "big") & 0x7FFFFFFF


@dataclass(frozen=True)
class Cell:
    experiment: str
    label: str
    method: str
    k: str
    seed: int
    train_seed: int = 0
    payload: Tuple = ()

    @property
    def key(self) -> str:
        raw = f"{self.label}__{self.method}__k-{self.k}__seed-{self.seed}"
        return re.sub(r"[^A-Za-z0-9_.-]+", "-", raw)


@dataclass
class ResultRow:
    experiment: str
    cell_key: str
    label: str
    method: str
    k: str
    seed: int
    basin_id: str
    metric: str
    replicate: int
    value: Optional[float]
    wall_time: float = 0.0
    completed_at: str = ""

    def as_params(self) -> dict:
        value = None if self.value is None or not math.isfinite(self.value) else float(self.value)
        return {
            "experiment": self.experiment, "cell_key": self.cell_key, "label": self.label,
            "method": self.method, "k": self.k, "seed": int(self.seed), "basin_id": self.basin_id,
            "metric": self.metric, "replicate": int(self.replicate), "value": value,
            "wall_time": float(self.wall_time), "completed_at": self.completed_at,
        }


@dataclass
class ExperimentPlan:
    experiment: str
    cells: List[Cell]
    model_config: ModelConfig
    output_dir: Path
    train_period: Period
    test_period: Period

    def __post_init__(self):
        keys = [c.key for c in self.cells]
        if len(set(keys)) != len(keys):
            dup = next(k for k in keys if keys.count(k) > 1)
            raise ValueError(f"duplicate cell '{dup}' in {self.experiment} plan")


@dataclass
class RunSummary:
    experiment: str
    total: int = 0
    skipped: int = 0
    completed: int = 0
    failed: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed

    def merge(self, other: "RunSummary") -> "RunSummary":
        self.total += other.total
        self.skipped += other.skipped
        self.completed += other.completed
        self.failed.extend(other.failed)
        return self

    def __str__(self) -> str:
        return (f"{self.experiment}: {self.completed} computed, {self.skipped} resumed, "
                f"{len(self.failed)} failed of {self.total} cells")


class ResultLog:
    """Append-only result store behind SQLAlchemy (SQLite or Postgres)."""

    def __init__(self, db_url: str):
        self.engine = get_engine(db_url)
        init_schema(self.engine)

    def completed(self, experiment: str) -> Set[str]:
        sql = text("""
            SELECT c.cell_key, c.n_rows, COUNT(r.cell_key) AS n_found
            FROM cells c
            LEFT JOIN result_rows r
              ON r.experiment = c.experiment AND r.cell_key = c.cell_key
            WHERE c.experiment = :experiment
            GROUP BY c.cell_key, c.n_rows
        """)
        with self.engine.connect() as conn:
            rows = conn.execute(sql, {"experiment": experiment}).fetchall()
        return {r.cell_key for r in rows if r.n_found == r.n_rows}

    def append(self, cell: Cell, rows: Sequence[ResultRow]) -> None:
        with self.engine.begin() as conn:
            if rows:
                conn.execute(text("""
                    INSERT INTO result_rows (experiment, cell_key, label, method, k, seed, basin_id,
                                             metric, replicate, value, wall_time, completed_at)
                    VALUES (:experiment, :cell_key, :label, :method, :k, :seed, :basin_id,
                            :metric, :replicate, :value, :wall_time, :completed_at)
                    ON CONFLICT (experiment, cell_key, basin_id, metric, replicate) DO NOTHING
                """), [r.as_params() for r in rows])
            conn.execute(text("""
                INSERT INTO cells (experiment, cell_key, n_rows)
                VALUES (:experiment, :cell_key, :n_rows)
                ON CONFLICT (experiment, cell_key) DO UPDATE SET n_rows = EXCLUDED.n_rows
            """), {"experiment": cell.experiment, "cell_key": cell.key, "n_rows": len(rows)})

    def frame(self, experiment: str) -> pd.DataFrame:
        sql = text(f"""
            SELECT {", ".join(RESULT_COLUMNS)} FROM result_rows
            WHERE experiment = :experiment
            ORDER BY cell_key, basin_id, metric, replicate
        """)
        with self.engine.connect() as conn:
            df = pd.read_sql(sql, conn, params={"experiment": experiment})
        df["value"] = pd.to_numeric(df["value"], errors="coerce")
        return df

    def delete_cells(self, experiment: str, cell_keys: Sequence[str]) -> None:
        with self.engine.begin() as conn:
            for key in cell_keys:
                params = {"experiment": experiment, "cell_key": key}
                conn.execute(text("DELETE FROM result_rows WHERE experiment = :experiment AND cell_key = :cell_key"), params)
                conn.execute(text("DELETE FROM cells WHERE experiment = :experiment AND cell_key = :cell_key"), params)


CellFn = Callable[[Cell], List[ResultRow]]


def _stamp(cell: Cell, rows: List[ResultRow], wall: float) -> List[ResultRow]:
    now = datetime.now(timezone.utc).isoformat(timespec="seconds")
    for r in rows:
        r.experiment, r.cell_key = cell.experiment, cell.key
        r.label, r.method, r.k, r.seed = cell.label, cell.method, cell.k, cell.seed
        r.wall_time, r.completed_at = wall, now
    return rows


def _timed(fn: CellFn, cell: Cell) -> Tuple[List[ResultRow], float]:
    start = time.perf_counter()
    rows = fn(cell)
    return rows, time.perf_counter() - start


def run_cells(experiment: str, cells: Sequence[Cell], fn: CellFn, log: ResultLog, jobs: int = 1) -> RunSummary:
    """Compute every incomplete cell; appends happen on the calling thread."""
    done = log.completed(experiment)
    todo = [c for c in cells if c.key not in done]
    summary = RunSummary(experiment, total=len(cells), skipped=len(cells) - len(todo))
    if summary.skipped:
        logger.info("%s: resuming, %d of %d cells already complete", experiment, summary.skipped, len(cells))

    def record(cell, outcome):
        try:
            rows, wall = outcome()
        except Exception as exc:
            logger.error("%s: cell %s failed: %s", experiment, cell.key, exc)
            summary.failed.append((cell.key, str(exc)))
            return
        log.append(cell, _stamp(cell, rows, wall))
        summary.completed += 1
        logger.info("%s: cell %s done in %.1fs (%d/%d)", experiment, cell.key, wall,
                    summary.completed + summary.skipped, summary.total)

    if jobs <= 1:
        for cell in todo:
            record(cell, lambda c=cell: _timed(fn, c))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_timed, fn, c): c for c in todo}
            for fut in as_completed(futures):
                record(futures[fut], fut.result)
    return summary


class LstmBackend:
    """Model backend used by the experiment drivers."""

    def fit(self, config: ModelConfig, archive: BasinArchive, donors: Sequence[str], period: Period,
            static_table: Optional[StaticTable] = None):
        return train(config, archive, donors, period, static_table=static_table)

    def predict(self, model, archive: BasinArchive, basin: str, period: Period,
                static_table: Optional[StaticTable] = None) -> np.ndarray:
        return predict(model, archive, basin, period, static_table=static_table).data[SIM_COL].to_numpy()

    def embed(self, model, table: StaticTable) -> StaticTable:
        return extract_fusion_embeddings(model, table)


def score_rows(basin: str, obs: np.ndarray, sim: np.ndarray) -> List[ResultRow]:
    """NSE and KGE rows for one basin; undefined scores are stored as missing."""
    rows = []
    for metric in SCORE_METRICS:
        try:
            value = nse(obs, sim) if metric == "nse" else kge(obs, sim)[0]
        except UndefinedScoreError as exc:
            logger.warning("basin %s: %s undefined (%s)", basin, metric, exc)
            value = None
        rows.append(ResultRow("", "", "", "", "", 0, basin, metric, 0, value))
    return rows


def evaluate_split(
    backend,
    config: ModelConfig,
    archive: BasinArchive,
    donors: Sequence[str],
    targets: Sequence[str],
    train_period: Period,
    test_period: Period,
    static_table: Optional[StaticTable] = None,
) -> Tuple[List[ResultRow], pd.DataFrame]:
    """Train on ``donors``, predict each target's test period, score it."""
    model = backend.fit(config, archive, donors, train_period, static_table)
    dates = test_period.dates()
    rows, frames = [], []
    for basin in targets:
        sim = np.asarray(backend.predict(model, archive, basin, test_period, static_table), dtype=np.float64)
        obs = archive.flow_series(basin).reindex(dates).to_numpy()
        rows.extend(score_rows(basin, obs, sim))
        frames.append(pd.DataFrame({ID_COL: basin, DATE_COL: dates.strftime("%Y-%m-%d"), "obs": obs, "sim": sim}))
    return rows, pd.concat(frames, ignore_index=True)


def predictions_path(output_dir: Path, experiment: str, cell: Cell) -> Path:
    return Path(output_dir) / "predictions" / experiment / f"{cell.key}.csv"


def write_predictions(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)


def read_predictions(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(f"predictions not found: {path}")
    return pd.read_csv(path, dtype={ID_COL: str}, float_precision="round_trip")


def resolve_k(k, n_donors: int) -> Optional[int]:
    """Numeric k for a ladder step; None when the step exceeds the donor pool."""
    if k == "all":
        return n_donors
    k = int(k)
    return k if k <= n_donors else None

# experiments/experiment_a.py
"""
Experiment A: attributes-17 vs aef-64 static inputs, in-sample and out-of-sample.

IS trains on every basin over the train period and predicts the same basins'
test period; OOS trains per fold and predicts the held-out basins. Each
(setting, variant) is run once per seed, then a per-basin bootstrap pools
the seed predictions. The KS test compares the two variants' score
distributions per setting and metric.
"""

import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from analytics.metrics import pool_and_bootstrap
from analytics.preprocessing import build_folds
from configs.columns import AEF, ATTRIBUTES, ID_COL, TABLE_WIDTHS
from configs.settings import RunConfig
from experiments.runner import (
    Cell,
    ExperimentPlan,
    LstmBackend,
    ResultLog,
    ResultRow,
    RunSummary,
    derive_seed,
    evaluate_split,
    predictions_path,
    read_predictions,
    run_cells,
    write_predictions,
)
from ingestion.types import BasinArchive

logger = logging.getLogger(__name__)

EXPERIMENT = "exp-a"
VARIANTS = (ATTRIBUTES, AEF)
BOOTSTRAP_PREFIX = "bootstrap"


def _splits(config: RunConfig, basins: Sequence[str]) -> List[Tuple[str, str, Tuple[str, ...], Tuple[str, ...]]]:
    """(setting, split label, train basins, test basins) in plan order."""
    out = []
    if "is" in config.settings:
        out.append(("is", "all", tuple(basins), tuple(basins)))
    if "oos" in config.settings:
        folds = build_folds(basins, config.n_folds, derive_seed(config.master_seed, EXPERIMENT, "folds"),
                            config.train_period, config.test_period)
        for f in folds:
            out.append(("oos", f.label, f.train_basins, f.test_basins))
    return out


def plan_experiment_a(config: RunConfig, basins: Sequence[str]) -> ExperimentPlan:
    cells = []
    for variant in VARIANTS:
        for setting, split, train_basins, test_basins in _splits(config, basins):
            for s in range(config.n_seeds):
                cells.append(Cell(
                    experiment=EXPERIMENT,
                    label=f"{setting}:{split}",
                    method=variant,
                    k="-",
                    seed=s,
                    train_seed=derive_seed(config.master_seed, EXPERIMENT, variant, setting, split, s),
                    payload=(train_basins, test_basins),
                ))
    return ExperimentPlan(EXPERIMENT, cells, config.model, config.output_dir,
                          config.train_period, config.test_period)


def _bootstrap_cells(plan: ExperimentPlan) -> List[Cell]:
    groups = []
    for c in plan.cells:
        key = (c.label.split(":")[0], c.method)
        if key not in groups:
            groups.append(key)
    return [Cell(EXPERIMENT, f"{BOOTSTRAP_PREFIX}:{setting}", variant, "-", 0) for setting, variant in groups]


def run_experiment_a(
    plan: ExperimentPlan,
    archive: BasinArchive,
    log: ResultLog,
    config: RunConfig,
    backend=None,
) -> Tuple[pd.DataFrame, RunSummary]:
    backend = backend or LstmBackend()

    def train_cell(cell: Cell) -> List[ResultRow]:
        train_basins, test_basins = cell.payload
        model_config = plan.model_config.replace(
            n_static=TABLE_WIDTHS[cell.method], static_kind=cell.method, seed=cell.train_seed,
        )
        rows, frame = evaluate_split(backend, model_config, archive, train_basins, test_basins,
                                     plan.train_period, plan.test_period)
        write_predictions(frame, predictions_path(plan.output_dir, EXPERIMENT, cell))
        return rows

    summary = run_cells(EXPERIMENT, plan.cells, train_cell, log, jobs=config.jobs)

    failed = {key for key, _ in summary.failed}
    by_group: Dict[Tuple[str, str], List[Cell]] = {}
    for c in plan.cells:
        by_group.setdefault((c.label.split(":")[0], c.method), []).append(c)

    def bootstrap_cell(cell: Cell) -> List[ResultRow]:
        setting = cell.label.split(":", 1)[1]
        members = by_group[(setting, cell.method)]
        if any(c.key in failed for c in members):
            raise RuntimeError(f"training cells of {setting}/{cell.method} failed; bootstrap skipped")
        return bootstrap_group(plan, members, config, setting, cell.method)

    summary.merge(run_cells(EXPERIMENT, _bootstrap_cells(plan), bootstrap_cell, log, jobs=1))
    return log.frame(EXPERIMENT), summary


def bootstrap_group(plan: ExperimentPlan, members: Sequence[Cell], config: RunConfig,
                    setting: str, variant: str) -> List[ResultRow]:
    """Pool every seed's predictions per basin and bootstrap NSE/KGE."""
    per_basin: Dict[str, List[Tuple[np.ndarray, np.ndarray]]] = {}
    for cell in sorted(members, key=lambda c: (c.label, c.seed)):
        frame = read_predictions(predictions_path(plan.output_dir, EXPERIMENT, cell))
        for basin, grp in frame.groupby(ID_COL, sort=True):
            per_basin.setdefault(basin, []).append((grp["obs"].to_numpy(), grp["sim"].to_numpy()))

    rows = []
    for basin in sorted(per_basin):
        result = pool_and_bootstrap(
            per_basin[basin],
            fraction=config.bootstrap_fraction,
            reps=config.bootstrap_reps,
            rng_seed=derive_seed(config.master_seed, BOOTSTRAP_PREFIX, setting, variant, basin),
            basin=basin,
        )
        for metric, scores in result.scores.items():
            for r, value in enumerate(scores):
                rows.append(ResultRow("", "", "", "", "", 0, basin, metric, r, float(value)))
    return rows


def bootstrap_table(results: pd.DataFrame) -> pd.DataFrame:
    """Bootstrap replicates as `experiment,basin_id,metric,replicate,value`."""
    boot = results[results["label"].str.startswith(BOOTSTRAP_PREFIX + ":")].copy()
    boot["experiment"] = EXPERIMENT + ":" + boot["label"].str.split(":").str[1] + ":" + boot["method"]
    return boot[["experiment", "basin_id", "metric", "replicate", "value"]].reset_index(drop=True)


def metrics_table(results: pd.DataFrame) -> pd.DataFrame:
    """Raw per-seed scores as `experiment,basin_id,seed,metric,value`."""
    raw = results[~results["label"].str.startswith(BOOTSTRAP_PREFIX + ":")].copy()
    raw["experiment"] = EXPERIMENT + ":" + raw["label"].str.split(":").str[0] + ":" + raw["method"]
    raw = raw.sort_values(["experiment", "basin_id", "seed", "metric"])
    return raw[["experiment", "basin_id", "seed", "metric", "value"]].reset_index(drop=True)


def score_samples(boot: pd.DataFrame, group: str, metric: str, sampling: str = "median") -> np.ndarray:
    """KS sample for one bootstrap group: per-basin medians, or every defined replicate."""
    sub = boot[(boot["experiment"] == group) & (boot["metric"] == metric)].dropna(subset=["value"])
    if sampling == "all":
        return sub["value"].to_numpy()
    return sub.groupby("basin_id", sort=True)["value"].median().to_numpy()


def basin_medians(boot: pd.DataFrame) -> pd.DataFrame:
    sub = boot.dropna(subset=["value"])
    return sub.groupby(["experiment", "basin_id", "metric"], sort=True)["value"].median().reset_index()


def group_name(setting: str, variant: str) -> str:
    return f"{EXPERIMENT}:{setting}:{variant}"


def cdf_label(setting: str, variant: str, metric: str) -> str:
    return f"{EXPERIMENT}_{setting}_{variant}_{metric}"

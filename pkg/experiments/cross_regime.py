# experiments/cross_regime.py
"""
Cross-regime study: cluster the basins in a representation space, then hold
out one whole cluster at a time and score the held-out basins.
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import pandas as pd

from analytics.clustering import ClusterModel, cluster_profile, loco_splits, select_k
from analytics.preprocessing import standardize_columns
from configs.columns import AEF, ATTRIBUTES, FUSION, TABLE_WIDTHS
from configs.settings import RunConfig
from experiments.experiment_b import fusion_embeddings
from experiments.runner import (
    Cell,
    ExperimentPlan,
    LstmBackend,
    ResultLog,
    ResultRow,
    RunSummary,
    derive_seed,
    evaluate_split,
    run_cells,
)
from ingestion.archive import load_static_table, write_static_table
from ingestion.types import BasinArchive, StaticTable

logger = logging.getLogger(__name__)

EXPERIMENT = "cross-regime"
REPRESENTATION_KIND = {"attributes": ATTRIBUTES, "aef": AEF, "fusion": FUSION}


def representation_table(rep: str, archive: BasinArchive, config: RunConfig, backend) -> StaticTable:
    if rep == "attributes":
        return archive.attributes
    if rep == "aef":
        return archive.embeddings
    if rep == "fusion":
        path = Path(config.output_dir) / "fusion" / "all.csv"
        if not path.exists():
            table = fusion_embeddings(backend, archive, config, archive.basins,
                                      derive_seed(config.master_seed, "fusion", "all"))
            write_static_table(table, path)
        return load_static_table(path, FUSION)
    raise ValueError(f"Unknown representation '{rep}'")


def cluster_representation(rep: str, table: StaticTable, config: RunConfig) -> Tuple[int, ClusterModel, Dict[int, float]]:
    Z, _ = standardize_columns(table.values)
    k_max = min(config.k_max, table.n - 1)
    if k_max < config.k_min:
        raise ValueError(f"{table.n} basins are too few for K range {config.k_min}..{config.k_max}")
    return select_k(Z, config.k_min, k_max, seed=derive_seed(config.master_seed, "kmeans", rep),
                    restarts=config.kmeans_restarts, basins=table.basins, kind=table.kind)


def write_cluster_outputs(model: ClusterModel, profile: Dict[int, float], attributes: StaticTable,
                          output_dir: Path) -> List[str]:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        output_dir / f"clusters_{model.kind}.csv",
        output_dir / f"silhouette_profile_{model.kind}.csv",
        output_dir / f"cluster_profile_{model.kind}.csv",
    ]
    model.to_frame().to_csv(paths[0], index=False)
    pd.DataFrame({"K": list(profile), "score": list(profile.values())}).to_csv(paths[1], index=False)
    cluster_profile(model, attributes).to_csv(paths[2], index=False)
    return [str(p) for p in paths]


def plan_cross_regime(config: RunConfig, archive: BasinArchive, backend=None) -> Tuple[ExperimentPlan, Dict[str, ClusterModel]]:
    backend = backend or LstmBackend()
    cells, models = [], {}
    for rep in config.representations:
        table = representation_table(rep, archive, config, backend)
        best_k, model, profile = cluster_representation(rep, table, config)
        logger.info("%s: K=%d (silhouette %.3f)", rep, best_k, model.silhouette)
        write_cluster_outputs(model, profile, archive.attributes, config.output_dir)
        models[rep] = model
        for split in loco_splits(model, config.train_period, config.test_period):
            for s in range(config.seeds_per_cell):
                cells.append(Cell(
                    experiment=EXPERIMENT,
                    label=split.label,
                    method=rep,
                    k=str(best_k),
                    seed=s,
                    train_seed=derive_seed(config.master_seed, EXPERIMENT, rep, split.label, s),
                    payload=(split.train_basins, split.test_basins),
                ))
    plan = ExperimentPlan(EXPERIMENT, cells, config.model, config.output_dir,
                          config.train_period, config.test_period)
    return plan, models


def run_cross_regime(
    plan: ExperimentPlan,
    archive: BasinArchive,
    log: ResultLog,
    config: RunConfig,
    backend=None,
) -> Tuple[pd.DataFrame, RunSummary]:
    backend = backend or LstmBackend()

    def cell_fn(cell: Cell) -> List[ResultRow]:
        train_basins, test_basins = cell.payload
        # the aef split trains on aef inputs; attribute and fusion splits on attributes
        kind = AEF if cell.method == "aef" else ATTRIBUTES
        model_config = plan.model_config.replace(n_static=TABLE_WIDTHS[kind], static_kind=kind, seed=cell.train_seed)
        rows, _ = evaluate_split(backend, model_config, archive, train_basins, test_basins,
                                 plan.train_period, plan.test_period)
        return rows

    summary = run_cells(EXPERIMENT, plan.cells, cell_fn, log, jobs=config.jobs)
    return log.frame(EXPERIMENT), summary


def pooled_scores(results: pd.DataFrame, rep: str, metric: str = "nse") -> pd.Series:
    """Per-basin score (seed mean) for one representation."""
    sub = results[(results["method"] == rep) & (results["metric"] == metric)]
    return sub.groupby("basin_id", sort=True)["value"].mean()

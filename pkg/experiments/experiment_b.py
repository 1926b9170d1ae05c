# experiments/experiment_b.py
"""
Experiment B: how target skill scales with the number of top-k similar donors.

For every target, donor method (attributes, fusion, aef, optionally random)
and k on the ladder, train on the k donors and score the target's test
period. The fusion method ranks donors by the front-end embeddings of an
attr-fc model trained once per target on all non-target basins.
"""

import logging
import threading
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import pandas as pd

from analytics.similarity import SimilarityMatrix, rank_and_select, select_random, similarity_matrix
from configs.columns import ATTRIBUTES, FUSION, TABLE_WIDTHS
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
    resolve_k,
    run_cells,
)
from ingestion.archive import load_static_table, write_static_table
from ingestion.types import BasinArchive, StaticTable

logger = logging.getLogger(__name__)

EXPERIMENT = "exp-b"
RANKING_METHODS = ("attributes", "fusion", "aef")
RANDOM = "random"


def plan_experiment_b(config: RunConfig, basins: Sequence[str]) -> Tuple[ExperimentPlan, List[str]]:
    """Cells in ladder order; ladder steps beyond the donor pool are reported and skipped."""
    if not config.targets:
        raise ValueError("no target basins configured (experiment.targets)")
    missing = [t for t in config.targets if t not in basins]
    if missing:
        raise ValueError(f"target basin {missing[0]} not in the archive")

    methods = RANKING_METHODS + ((RANDOM,) if config.include_random else ())
    n_donors = len(basins) - 1
    ks, too_large = ladder_sizes(config.k_ladder, n_donors)
    cells, skipped = [], []
    for target in config.targets:
        for method in methods:
            skipped += [f"{target}/{method}/k={step}: only {n_donors} donors available" for step in too_large]
            for k in ks:
                for s in range(config.seeds_per_cell):
                    cells.append(Cell(
                        experiment=EXPERIMENT,
                        label=target,
                        method=method,
                        k=str(k),
                        seed=s,
                        # independent of method and k: full-pool cells coincide across methods
                        train_seed=derive_seed(config.master_seed, EXPERIMENT, target, s),
                    ))
    for msg in skipped:
        logger.warning("exp-b: skipping %s", msg)
    plan = ExperimentPlan(EXPERIMENT, cells, config.model, config.output_dir,
                          config.train_period, config.test_period)
    return plan, skipped


def ladder_sizes(ladder: Sequence, n_donors: int) -> Tuple[List[int], List]:
    """Distinct donor counts in ladder order, plus the steps larger than the pool."""
    ks, too_large = [], []
    for step in ladder:
        k = resolve_k(step, n_donors)
        if k is None:
            too_large.append(step)
        elif k in ks:
            logger.info("exp-b: ladder step %s repeats k=%d", step, k)
        else:
            ks.append(k)
    return ks, too_large


class DonorSelector:
    """Similarity matrices per method, with one fusion model per target (cached on disk)."""

    def __init__(self, archive: BasinArchive, config: RunConfig, backend, output_dir: Path):
        self.archive = archive
        self.config = config
        self.backend = backend
        self.output_dir = Path(output_dir)
        self._matrices: Dict[str, SimilarityMatrix] = {}
        self._lock = threading.Lock()
        self._target_locks: Dict[str, threading.Lock] = {}

    def _static_matrix(self, method: str) -> SimilarityMatrix:
        with self._lock:
            if method not in self._matrices:
                table = self.archive.attributes if method == "attributes" else self.archive.embeddings
                self._matrices[method] = similarity_matrix(table, method)
            return self._matrices[method]

    def fusion_table(self, target: str) -> StaticTable:
        with self._lock:
            lock = self._target_locks.setdefault(target, threading.Lock())
        with lock:
            path = self.output_dir / "fusion" / f"{target}.csv"
            if not path.exists():
                table = fusion_embeddings(self.backend, self.archive, self.config,
                                          [b for b in self.archive.basins if b != target],
                                          derive_seed(self.config.master_seed, "fusion", target))
                write_static_table(table, path)
            # read back so fresh and resumed runs rank on identical values
            return load_static_table(path, FUSION)

    def select(self, target: str, method: str, k: int, seed: int) -> List[str]:
        if method == RANDOM:
            donors = select_random(self.archive.basins, target, k, seed)
        elif method == "fusion":
            donors = rank_and_select(similarity_matrix(self.fusion_table(target), "fusion"), target, k)
        else:
            donors = rank_and_select(self._static_matrix(method), target, k)
        if target in donors:
            raise RuntimeError(f"target leakage: {target} selected as its own donor ({method}, k={k})")
        return donors


def fusion_embeddings(backend, archive: BasinArchive, config: RunConfig, donors: Sequence[str], seed: int) -> StaticTable:
    """Train an attr-fc model on ``donors`` and embed every basin's attributes."""
    model_config = config.model.replace(
        frontend_mode="attr-fc", n_static=TABLE_WIDTHS[ATTRIBUTES], static_kind=ATTRIBUTES, seed=seed,
    )
    logger.info("Training fusion model on %d basins", len(donors))
    model = backend.fit(model_config, archive, donors, config.train_period)
    return backend.embed(model, archive.attributes)


def run_experiment_b(
    plan: ExperimentPlan,
    archive: BasinArchive,
    log: ResultLog,
    config: RunConfig,
    backend=None,
) -> Tuple[pd.DataFrame, RunSummary]:
    backend = backend or LstmBackend()
    selector = DonorSelector(archive, config, backend, plan.output_dir)
    model_config = plan.model_config.replace(n_static=TABLE_WIDTHS[ATTRIBUTES], static_kind=ATTRIBUTES)

    def cell_fn(cell: Cell) -> List[ResultRow]:
        donor_seed = derive_seed(config.master_seed, EXPERIMENT, RANDOM, cell.label, cell.k, cell.seed)
        donors = selector.select(cell.label, cell.method, int(cell.k), donor_seed)
        rows, _ = evaluate_split(backend, model_config.replace(seed=cell.train_seed), archive,
                                 donors, [cell.label], plan.train_period, plan.test_period)
        return rows

    summary = run_cells(EXPERIMENT, plan.cells, cell_fn, log, jobs=config.jobs)
    return log.frame(EXPERIMENT), summary


def scaling_table(results: pd.DataFrame) -> pd.DataFrame:
    """Across-target mean and std of each score per (method, k); seeds averaged first."""
    df = results.copy()
    df["k"] = df["k"].astype(int)
    per_target = df.groupby(["method", "k", "label", "metric"], sort=True)["value"].mean().reset_index()
    out = (per_target.groupby(["method", "k", "metric"], sort=True)["value"]
           .agg(mean="mean", std=lambda v: v.std(ddof=0), n_targets="count")
           .reset_index())
    return out

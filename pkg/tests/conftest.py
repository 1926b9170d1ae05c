import numpy as np
import pandas as pd
import pytest

from configs.columns import FUSION
from configs.settings import write_config
from ingestion.archive import write_archive
from ingestion.synthetic import generate_synthetic_fleet
from ingestion.types import StaticTable


@pytest.fixture(scope="session")
def fleet():
    return generate_synthetic_fleet(10, 900, seed=3)


@pytest.fixture
def archive_paths(tmp_path, fleet):
    return write_archive(fleet, tmp_path / "data")


def run_values(paths, **extra):
    values = {
        "data.attributes": paths["attributes"],
        "data.embeddings": paths["embeddings"],
        "data.forcings_dir": paths["forcings_dir"],
        "data.flow_dir": paths["flow_dir"],
        "period.train_start": "1980-04-01",
        "period.train_end": "1981-09-30",
        "period.test_start": "1981-10-01",
        "period.test_end": "1982-06-18",
        "model.hidden_size": 4,
        "model.seq_length": 30,
        "model.batch_size": 64,
        "model.epochs": 1,
        "model.frontend_width": 4,
        "experiment.seeds": 2,
        "experiment.n_folds": 2,
        "experiment.k_ladder": [2, 5, "all"],
        "estimator.bootstrap_reps": 10,
        "estimator.mi_bins": 4,
        "estimator.k_max": 4,
        "estimator.kmeans_restarts": 3,
    }
    values.update(extra)
    return values


@pytest.fixture
def make_config(tmp_path, archive_paths):
    """Write a run config for the fixture fleet and return its path."""
    def make(**extra):
        values = run_values(archive_paths, **{"output.dir": str(tmp_path / "out"), **extra})
        return write_config(values, tmp_path / "run.env")
    return make


class OracleBackend:
    """Backend whose predictions are the observed flow; records every fit."""

    def __init__(self):
        self.fits = []

    def fit(self, config, archive, donors, period, static_table=None):
        self.fits.append((config, tuple(donors)))
        return tuple(donors)

    def predict(self, model, archive, basin, period, static_table=None):
        return archive.flow_series(basin).reindex(period.dates()).to_numpy()

    def embed(self, model, table):
        # the first three attribute columns are the reservoir parameters
        return StaticTable(FUSION, table.basins, table.values[:, :3], ("f00", "f01", "f02"))


@pytest.fixture
def oracle():
    return OracleBackend()


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    monkeypatch.delenv("DATABASE_URL", raising=False)
    monkeypatch.delenv("PUB_OUTPUT_DIR", raising=False)


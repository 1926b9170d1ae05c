# cli/app.py
"""
Command-line entry point.

    python -m cli.app synth --basins 8 --days 1500 --seed 7 --out data/synth
    python -m cli.app exp-a --config data/synth/run.env
    python -m cli.app report --config data/synth/run.env --plots

Progress goes to stderr; results only to files under the output directory.
Any failure exits 1 with one line ``error: <subcommand>: <message>``.
"""

import dataclasses
import functools
import logging
import sys
from pathlib import Path
from typing import Optional

import click
import pandas as pd

from analytics.infotheory import mi_matrix, mi_summary, write_mi_matrix
from analytics.similarity import export_similarity, similarity_matrix
from configs.columns import AEF, ATTRIBUTES, DATE_COL, TABLE_WIDTHS
from configs.settings import RunConfig, parse_config, write_config
from experiments import cross_regime, experiment_a, experiment_b
from experiments.report import build_report, report_cross_regime, report_experiment_a, report_experiment_b
from experiments.runner import LstmBackend, ResultLog, derive_seed
from ingestion.archive import check_archive, load_archive, load_basin_list, load_pixel_embeddings, write_archive
from ingestion.synthetic import generate_synthetic_fleet
from ingestion.types import BasinArchive, Period
from model.persistence import load_model, save_model
from model.training import predict, train

logger = logging.getLogger(__name__)

STATIC_CHOICES = {"attributes": ATTRIBUTES, "aef": AEF}


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _guard(name: str):
    """Turn any exception into exit status 1 and a single stderr line."""
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except click.exceptions.Exit:
                raise
            except Exception as exc:
                logger.debug("%s failed", name, exc_info=True)
                message = " ".join(str(exc).split()) or type(exc).__name__
                click.echo(f"error: {name}: {message}", err=True)
                sys.exit(1)
        return wrapper
    return decorate


def _config(path: str, output_dir: Optional[str] = None, jobs: Optional[int] = None, **extra) -> RunConfig:
    overrides = {"output.dir": output_dir, "run.jobs": jobs}
    overrides.update(extra)
    return parse_config(path, overrides)


def _basins(config: RunConfig) -> Optional[list]:
    return load_basin_list(config.basin_list) if config.basin_list else None


def _archive(config: RunConfig) -> BasinArchive:
    archive = load_archive(
        config.attributes_path, config.embeddings_path, config.forcings_dir, config.flow_dir,
        basins=_basins(config), areas_path=config.areas_path, flow_units=config.flow_units,
    )
    if config.pixels_dir:
        archive = dataclasses.replace(archive, embeddings=load_pixel_embeddings(config.pixels_dir, archive.basins))
    return archive


def _done(message: str) -> None:
    click.echo(f"✅ {message}", err=True)


config_option = click.option("--config", "-c", "config_path", required=True,
                             type=click.Path(exists=True, dir_okay=False), help="Run config file.")
output_option = click.option("--output-dir", default=None, help="Override output.dir.")
jobs_option = click.option("--jobs", type=int, default=None, help="Concurrent experiment cells.")


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
def main(verbose: bool):
    """Similarity-guided donor selection and LSTM runoff prediction for ungauged basins."""
    _setup_logging(verbose)


@main.command("check-data")
@config_option
@_guard("check-data")
def check_data(config_path):
    """Validate the archive against the configured periods."""
    config = _config(config_path)
    problems = check_archive(
        config.attributes_path, config.embeddings_path, config.forcings_dir, config.flow_dir,
        periods=[config.train_period, config.test_period], seq_length=config.model.seq_length,
        basins=_basins(config), areas_path=config.areas_path, flow_units=config.flow_units,
    )
    for p in problems:
        logger.error(p)
    if problems:
        raise ValueError(f"{len(problems)} problem(s); first: {problems[0]}")
    _done("archive is complete")


@main.command()
@config_option
@output_option
@click.option("--method", type=click.Choice(["attributes", "aef", "fusion"]), default="attributes")
@click.option("--target", default=None, help="Write the donor ranking stripe for one basin.")
@_guard("similarity")
def similarity(config_path, output_dir, method, target):
    """Cosine similarity matrix (or one target's donor ranking)."""
    config = _config(config_path, output_dir)
    archive = _archive(config)
    if method == "fusion":
        # fusion embeddings of a model that never saw the target
        donors = [b for b in archive.basins if b != target] if target else archive.basins
        seed = derive_seed(config.master_seed, "fusion", target or "all")
        table = experiment_b.fusion_embeddings(LstmBackend(), archive, config, donors, seed)
    else:
        table = archive.attributes if method == "attributes" else archive.embeddings
    matrix = similarity_matrix(table, method)
    name = f"similarity_{method}_{target}.csv" if target else f"similarity_{method}.csv"
    path = export_similarity(matrix, Path(config.output_dir) / name, target=target)
    _done(f"similarity written: {path}")


@main.command()
@config_option
@output_option
@_guard("mi")
def mi(config_path, output_dir):
    """Attribute x embedding mutual information matrix."""
    config = _config(config_path, output_dir)
    archive = _archive(config)
    matrix = mi_matrix(archive.attributes, archive.embeddings, bins=config.mi_bins)
    out = Path(config.output_dir)
    write_mi_matrix(matrix, out / "mi_matrix.csv")
    mi_summary(matrix).to_csv(out / "mi_summary.csv", index=False, float_format="%.6f")
    _done(f"MI matrix {matrix.values.shape[0]}x{matrix.values.shape[1]} written to {out}")


@main.command()
@config_option
@output_option
@click.option("--representation", "representations", multiple=True,
              type=click.Choice(["attributes", "aef", "fusion"]), help="Default: experiment.representations.")
@_guard("cluster")
def cluster(config_path, output_dir, representations):
    """k-means with silhouette model selection per representation."""
    config = _config(config_path, output_dir)
    archive = _archive(config)
    for rep in representations or config.representations:
        table = cross_regime.representation_table(rep, archive, config, LstmBackend())
        best_k, model, profile = cross_regime.cluster_representation(rep, table, config)
        cross_regime.write_cluster_outputs(model, profile, archive.attributes, config.output_dir)
        _done(f"{rep}: K={best_k} silhouette={model.silhouette:.3f}")


@main.command("train")
@config_option
@output_option
@click.option("--donors", default=None, help="Comma-separated donor ids (default: every basin).")
@click.option("--static", "static", type=click.Choice(sorted(STATIC_CHOICES)), default="attributes")
@click.option("--mode", type=click.Choice(["joint-mlp", "attr-fc"]), default=None)
@click.option("--seed", type=int, default=None, help="Override experiment.master_seed.")
@click.option("--model-out", default=None, help="Model file (default: <output>/models/model.npz).")
@_guard("train")
def train_cmd(config_path, output_dir, donors, static, mode, seed, model_out):
    """Train one model on a donor set over the train period."""
    config = _config(config_path, output_dir, **{"model.frontend_mode": mode, "experiment.master_seed": seed})
    archive = _archive(config)
    donor_ids = [d.strip() for d in donors.split(",") if d.strip()] if donors else archive.basins
    kind = STATIC_CHOICES[static]
    model_config = config.model.replace(n_static=TABLE_WIDTHS[kind], static_kind=kind)
    model = train(model_config, archive, donor_ids, config.train_period)
    path = save_model(model, model_out or Path(config.output_dir) / "models" / "model.npz")
    pd.DataFrame(model.history).to_csv(Path(path).with_suffix(".history.csv"), index=False)
    _done(f"model saved to {path} (best epoch {model.best_epoch})")


@main.command("predict")
@config_option
@output_option
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--basin", required=True)
@click.option("--start", default=None, help="Default: period.test_start.")
@click.option("--end", default=None, help="Default: period.test_end.")
@_guard("predict")
def predict_cmd(config_path, output_dir, model_path, basin, start, end):
    """Simulated daily flow (mm/day) for one basin."""
    config = _config(config_path, output_dir)
    archive = _archive(config)
    model = load_model(model_path)
    period = Period.parse(start or str(config.test_period.start), end or str(config.test_period.end))
    frame = predict(model, archive, basin, period).data
    frame.index = frame.index.strftime("%Y-%m-%d")
    frame.index.name = DATE_COL
    path = Path(config.output_dir) / f"predictions_{basin}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path)
    _done(f"{len(frame)} days predicted for basin {basin}: {path}")


def _finish(summary, written) -> None:
    for key, message in summary.failed:
        logger.error("cell %s: %s", key, message)
    if not summary.ok:
        raise RuntimeError(f"{len(summary.failed)} cell(s) failed; rerun to retry them")
    _done(f"{summary}; {len(written)} file(s) written")


@main.command("exp-a")
@config_option
@output_option
@jobs_option
@_guard("exp-a")
def exp_a(config_path, output_dir, jobs):
    """attributes-17 vs aef-64, in-sample and out-of-sample."""
    config = _config(config_path, output_dir, jobs)
    archive = _archive(config)
    log = ResultLog(config.results_db_url)
    plan = experiment_a.plan_experiment_a(config, archive.basins)
    results, summary = experiment_a.run_experiment_a(plan, archive, log, config)
    written = report_experiment_a(results, config, config.output_dir)
    _finish(summary, written)


@main.command("exp-b")
@config_option
@output_option
@jobs_option
@click.option("--target", "targets", multiple=True, help="Override experiment.targets.")
@_guard("exp-b")
def exp_b(config_path, output_dir, jobs, targets):
    """Top-k donor scaling per target and similarity method."""
    config = _config(config_path, output_dir, jobs, **{"experiment.targets": list(targets) or None})
    archive = _archive(config)
    log = ResultLog(config.results_db_url)
    plan, _ = experiment_b.plan_experiment_b(config, archive.basins)
    results, summary = experiment_b.run_experiment_b(plan, archive, log, config)
    written = report_experiment_b(results, config.output_dir)
    _finish(summary, written)


@main.command("cross-regime")
@config_option
@output_option
@jobs_option
@_guard("cross-regime")
def cross_regime_cmd(config_path, output_dir, jobs):
    """Leave-one-cluster-out evaluation per representation."""
    config = _config(config_path, output_dir, jobs)
    archive = _archive(config)
    log = ResultLog(config.results_db_url)
    plan, _ = cross_regime.plan_cross_regime(config, archive)
    results, summary = cross_regime.run_cross_regime(plan, archive, log, config)
    written = report_cross_regime(results, config.output_dir)
    _finish(summary, written)


@main.command()
@click.option("--basins", type=int, default=8, show_default=True)
@click.option("--days", type=int, default=1500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--regimes", type=int, default=0, show_default=True, help="Planted regimes (0 = none).")
@click.option("--out", "out_dir", default="data/synth", show_default=True)
@_guard("synth")
def synth(basins, days, seed, regimes, out_dir):
    """Write a synthetic fleet plus a desk-scale run config (run.env)."""
    archive = generate_synthetic_fleet(basins, days, seed, n_regimes=regimes)
    paths = write_archive(archive, out_dir)
    out = Path(out_dir)
    config_path = write_config(synthetic_run_values(archive, paths, seed), out / "run.env")
    _done(f"{basins} basins x {days} days written to {out}; config {config_path}")


SYNTH_SEQ_LENGTH = 90


def synthetic_run_values(archive: BasinArchive, paths: dict, seed: int) -> dict:
    """Desk-scale settings: short windows, small network, periods fitted to the series."""
    dates = archive.forcing_frame(archive.basins[0]).dates
    usable = dates[SYNTH_SEQ_LENGTH:]
    cut = int(len(usable) * 0.75)
    return {
        "data.attributes": Path(paths["attributes"]).name,
        "data.embeddings": Path(paths["embeddings"]).name,
        "data.forcings_dir": Path(paths["forcings_dir"]).name,
        "data.flow_dir": Path(paths["flow_dir"]).name,
        "period.train_start": usable[0].strftime("%Y-%m-%d"),
        "period.train_end": usable[cut - 1].strftime("%Y-%m-%d"),
        "period.test_start": usable[cut].strftime("%Y-%m-%d"),
        "period.test_end": usable[-1].strftime("%Y-%m-%d"),
        "model.hidden_size": 32,
        "model.seq_length": SYNTH_SEQ_LENGTH,
        "model.batch_size": 128,
        "model.learning_rate": 5e-3,
        "model.epochs": 15,
        "experiment.seeds": 2,
        "experiment.master_seed": seed,
        "experiment.n_folds": 2,
        "experiment.k_ladder": [k for k in (4, 8, 16) if k < len(archive.basins) - 1] + ["all"],
        "experiment.targets": archive.basins[:3],
        "estimator.mi_bins": max(2, min(16, len(archive.basins) // 2)),
        "estimator.k_max": max(2, min(8, len(archive.basins) - 1)),
        "output.dir": "output",
    }


@main.command()
@config_option
@output_option
@click.option("--plots", is_flag=True, help="Also write plotly HTML figures.")
@_guard("report")
def report(config_path, output_dir, plots):
    """Summary tables (medians, CDFs, KS, scaling) from the result log."""
    config = _config(config_path, output_dir)
    written = build_report(config, ResultLog(config.results_db_url), plots=plots)
    _done(f"report: {len(written)} file(s) written to {config.output_dir}")


if __name__ == "__main__":
    main()

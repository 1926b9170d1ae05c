# experiments/report.py
"""
Summary tables (and optional plotly HTML figures) from the result log.

Every export is a pure function of the result rows, so rerunning a report
regenerates identical files.
"""

import logging
from pathlib import Path
from typing import List, Optional

import pandas as pd
import plotly.express as px

from analytics.metrics import cdf_points, ks_two_sample, write_cdf
from configs.settings import RunConfig
from experiments import cross_regime, experiment_a, experiment_b
from experiments.runner import RESULT_COLUMNS, ResultLog

logger = logging.getLogger(__name__)

EXPERIMENTS = (experiment_a.EXPERIMENT, experiment_b.EXPERIMENT, cross_regime.EXPERIMENT)


def export_results(results: pd.DataFrame, experiment: str, output_dir) -> str:
    path = Path(output_dir) / f"results_{experiment}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    results[RESULT_COLUMNS].to_csv(path, index=False)
    return str(path)


def _cdf_figure(curves: dict, title: str, path: Path) -> str:
    frames = []
    for name, values in curves.items():
        pts = pd.DataFrame(cdf_points(values), columns=["value", "fraction"])
        pts["series"] = name
        frames.append(pts)
    fig = px.line(pd.concat(frames), x="value", y="fraction", color="series", line_shape="hv", title=title)
    fig.write_html(str(path), include_plotlyjs="cdn")
    return str(path)


def report_experiment_a(results: pd.DataFrame, config: RunConfig, output_dir, plots: bool = False) -> List[str]:
    out = Path(output_dir)
    written = [export_results(results, experiment_a.EXPERIMENT, out)]

    metrics = experiment_a.metrics_table(results)
    metrics.to_csv(out / "metrics.csv", index=False)
    boot = experiment_a.bootstrap_table(results)
    boot.to_csv(out / "bootstrap.csv", index=False)
    written += [str(out / "metrics.csv"), str(out / "bootstrap.csv")]
    if boot.empty:
        logger.warning("exp-a: no bootstrap rows yet; CDF and KS outputs skipped")
        return written

    medians = experiment_a.basin_medians(boot)
    summary = (medians.groupby(["experiment", "metric"], sort=True)["value"]
               .agg(median="median", n_basins="count").reset_index())
    summary.to_csv(out / "summary_exp-a.csv", index=False)
    written.append(str(out / "summary_exp-a.csv"))

    ks_rows = []
    for setting in sorted({g.split(":")[1] for g in boot["experiment"].unique()}):
        for metric in sorted(boot["metric"].unique()):
            samples = {}
            for variant in experiment_a.VARIANTS:
                group = experiment_a.group_name(setting, variant)
                values = experiment_a.score_samples(boot, group, metric, config.ks_sampling)
                if values.size == 0:
                    continue
                samples[variant] = values
                written.append(write_cdf(values, out / f"cdf_{experiment_a.cdf_label(setting, variant, metric)}.csv"))
            if len(samples) == 2:
                a, b = (samples[v] for v in experiment_a.VARIANTS)
                ks = ks_two_sample(a, b, exact=config.ks_exact)
                ks_rows.append({
                    "setting": setting, "metric": metric, "sampling": config.ks_sampling,
                    "variant_a": experiment_a.VARIANTS[0], "variant_b": experiment_a.VARIANTS[1],
                    "n_a": a.size, "n_b": b.size, "D": ks.D, "p": ks.p,
                })
            if plots and samples:
                written.append(_cdf_figure(samples, f"{setting.upper()} {metric.upper()} CDF",
                                           out / f"cdf_{experiment_a.EXPERIMENT}_{setting}_{metric}.html"))

    pd.DataFrame(ks_rows, columns=["setting", "metric", "sampling", "variant_a", "variant_b",
                                   "n_a", "n_b", "D", "p"]).to_csv(out / "ks_exp-a.csv", index=False)
    written.append(str(out / "ks_exp-a.csv"))
    return written


def report_experiment_b(results: pd.DataFrame, output_dir, plots: bool = False) -> List[str]:
    out = Path(output_dir)
    written = [export_results(results, experiment_b.EXPERIMENT, out)]
    if results.empty:
        return written
    scaling = experiment_b.scaling_table(results)
    scaling.to_csv(out / "scaling_exp-b.csv", index=False)
    written.append(str(out / "scaling_exp-b.csv"))
    if plots:
        nse = scaling[scaling["metric"] == "nse"]
        fig = px.line(nse, x="k", y="mean", error_y="std", color="method", markers=True,
                      title="Target NSE vs number of donors (mean ± std over targets)")
        path = out / "scaling_exp-b.html"
        fig.write_html(str(path), include_plotlyjs="cdn")
        written.append(str(path))
    return written


def report_cross_regime(results: pd.DataFrame, output_dir, plots: bool = False) -> List[str]:
    out = Path(output_dir)
    written = [export_results(results, cross_regime.EXPERIMENT, out)]
    curves, summary = {}, []
    for rep in sorted(results["method"].unique()):
        for metric in ("nse", "kge"):
            scores = cross_regime.pooled_scores(results, rep, metric).dropna()
            if scores.empty:
                continue
            written.append(write_cdf(scores.to_numpy(), out / f"cdf_{cross_regime.EXPERIMENT}_{rep}_{metric}.csv"))
            summary.append({"representation": rep, "metric": metric,
                            "median": float(scores.median()), "n_basins": int(scores.size)})
            if metric == "nse":
                curves[rep] = scores.to_numpy()
    pd.DataFrame(summary, columns=["representation", "metric", "median", "n_basins"]).to_csv(
        out / "summary_cross-regime.csv", index=False)
    written.append(str(out / "summary_cross-regime.csv"))
    if plots and curves:
        written.append(_cdf_figure(curves, "Leave-one-cluster-out NSE CDF",
                                   out / f"cdf_{cross_regime.EXPERIMENT}_nse.html"))
    return written


def build_report(config: RunConfig, log: ResultLog, output_dir: Optional[Path] = None,
                 plots: bool = False) -> List[str]:
    out = Path(output_dir or config.output_dir)
    written = []
    for experiment in EXPERIMENTS:
        results = log.frame(experiment)
        if results.empty:
            logger.info("report: no rows for %s", experiment)
            continue
        if experiment == experiment_a.EXPERIMENT:
            written += report_experiment_a(results, config, out, plots)
        elif experiment == experiment_b.EXPERIMENT:
            written += report_experiment_b(results, out, plots)
        else:
            written += report_cross_regime(results, out, plots)
    return written

# configs/settings.py
"""
Run configuration.

A run config is a flat dotenv-format file with section-prefixed keys:

    data.attributes      = data/attributes.csv
    data.embeddings      = data/embeddings.csv
    data.forcings_dir    = data/forcings
    data.flow_dir        = data/flow
    period.train_start   = 1980-01-01
    model.hidden_size    = 128
    experiment.k_ladder  = [100,200,300,400,500,600,all]

Relative paths resolve against the config file's directory. Precedence is
flags (``overrides``) > PUB_OUTPUT_DIR (output dir only) > file > defaults.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values, load_dotenv

from ingestion.types import Period
from model.network import FRONTEND_MODES, ModelConfig

load_dotenv()

ALL = "all"
KStep = Union[int, str]

SETTINGS = ("is", "oos")
REPRESENTATIONS = ("attributes", "aef", "fusion")
KS_SAMPLING = ("median", "all")
FLOW_UNITS = ("mm_day", "cfs")


def _int(raw: str) -> int:
    return int(raw)


def _float(raw: str) -> float:
    return float(raw)


def _bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _str(raw: str) -> str:
    value = raw.strip()
    if not value:
        raise ValueError(raw)
    return value


def _list(raw: str) -> List[str]:
    value = raw.strip()
    if not (value.startswith("[") and value.endswith("]")):
        raise ValueError(raw)
    return [p.strip() for p in value[1:-1].split(",") if p.strip()]


def _ladder(raw: str) -> List[KStep]:
    return [ALL if p.lower() == ALL else int(p) for p in _list(raw)]


def _choice(options: Tuple[str, ...]) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        value = raw.strip().lower()
        if value not in options:
            raise ValueError(raw)
        return value
    return parse


def _choices(options: Tuple[str, ...]) -> Callable[[str], List[str]]:
    def parse(raw: str) -> List[str]:
        values = [v.lower() for v in _list(raw)]
        if not values or any(v not in options for v in values):
            raise ValueError(raw)
        return values
    return parse


# key -> (parser, default); a None default marks a required key, "" an optional one
KEYS: Dict[str, Tuple[Callable[[str], Any], Optional[str]]] = {
    "data.attributes": (_str, None),
    "data.embeddings": (_str, None),
    "data.forcings_dir": (_str, None),
    "data.flow_dir": (_str, None),
    "data.basin_list": (_str, ""),
    "data.areas": (_str, ""),
    "data.pixels_dir": (_str, ""),
    "data.flow_units": (_choice(FLOW_UNITS), "mm_day"),
    "period.train_start": (_str, "1980-01-01"),
    "period.train_end": (_str, "2004-12-31"),
    "period.test_start": (_str, "2010-01-01"),
    "period.test_end": (_str, "2014-12-31"),
    "model.hidden_size": (_int, "128"),
    "model.dropout": (_float, "0.4"),
    "model.batch_size": (_int, "256"),
    "model.seq_length": (_int, "365"),
    "model.learning_rate": (_float, "1e-3"),
    "model.epochs": (_int, "30"),
    "model.frontend_width": (_int, "32"),
    "model.frontend_mode": (_choice(FRONTEND_MODES), "joint-mlp"),
    "experiment.seeds": (_int, "5"),
    "experiment.master_seed": (_int, "0"),
    "experiment.n_folds": (_int, "5"),
    "experiment.k_ladder": (_ladder, "[100,200,300,400,500,600,all]"),
    "experiment.targets": (_list, "[]"),
    "experiment.include_random": (_bool, "true"),
    "experiment.seeds_per_cell": (_int, "1"),
    "experiment.ks_sampling": (_choice(KS_SAMPLING), "median"),
    "experiment.settings": (_choices(SETTINGS), "[is,oos]"),
    "experiment.representations": (_choices(REPRESENTATIONS), "[attributes,aef]"),
    "estimator.mi_bins": (_int, "16"),
    "estimator.bootstrap_reps": (_int, "100"),
    "estimator.bootstrap_fraction": (_float, "0.8"),
    "estimator.k_min": (_int, "2"),
    "estimator.k_max": (_int, "15"),
    "estimator.kmeans_restarts": (_int, "10"),
    "estimator.ks_exact": (_bool, "false"),
    "output.dir": (_str, "output"),
    "run.jobs": (_int, "1"),
}

PATH_KEYS = ("data.attributes", "data.embeddings", "data.forcings_dir", "data.flow_dir",
             "data.basin_list", "data.areas", "data.pixels_dir")


@dataclass(frozen=True)
class RunConfig:
    attributes_path: Path
    embeddings_path: Path
    forcings_dir: Path
    flow_dir: Path
    train_period: Period
    test_period: Period
    model: ModelConfig
    output_dir: Path
    basin_list: Optional[Path] = None
    areas_path: Optional[Path] = None
    pixels_dir: Optional[Path] = None
    flow_units: str = "mm_day"
    n_seeds: int = 5
    master_seed: int = 0
    n_folds: int = 5
    k_ladder: Tuple[KStep, ...] = (100, 200, 300, 400, 500, 600, ALL)
    targets: Tuple[str, ...] = ()
    include_random: bool = True
    seeds_per_cell: int = 1
    ks_sampling: str = "median"
    settings: Tuple[str, ...] = SETTINGS
    representations: Tuple[str, ...] = ("attributes", "aef")
    mi_bins: int = 16
    bootstrap_reps: int = 100
    bootstrap_fraction: float = 0.8
    k_min: int = 2
    k_max: int = 15
    kmeans_restarts: int = 10
    ks_exact: bool = False
    jobs: int = 1
    values: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def results_db_url(self) -> str:
        return os.getenv("DATABASE_URL") or f"sqlite:///{(self.output_dir / 'results.db').resolve()}"


def check_k_ladder(ladder) -> None:
    if not ladder:
        raise ValueError("k ladder is empty")
    numeric = [k for k in ladder if k != ALL]
    if ALL in ladder and (ladder.count(ALL) > 1 or ladder[-1] != ALL):
        raise ValueError("k ladder not increasing: 'all' must appear once, last")
    if any(k < 1 for k in numeric):
        raise ValueError("k ladder entries must be >= 1")
    if any(b <= a for a, b in zip(numeric, numeric[1:])):
        raise ValueError("k ladder not increasing")


def _resolve(raw: str, base: Path) -> Path:
    p = Path(raw).expanduser()
    return p if p.is_absolute() else (base / p)


def parse_config(path, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    base = path.resolve().parent

    raw: Dict[str, Optional[str]] = {}
    for key, value in dotenv_values(path).items():
        if key not in KEYS:
            raise ValueError(f"unknown config key '{key}'")
        raw[key] = value if value is not None else ""

    env_out = os.getenv("PUB_OUTPUT_DIR")
    if env_out:
        raw["output.dir"] = env_out

    for key, value in (overrides or {}).items():
        if key not in KEYS:
            raise ValueError(f"unknown config key '{key}'")
        if value is not None:
            raw[key] = value if isinstance(value, str) else _format_value(value)

    values: Dict[str, Any] = {}
    for key, (parser, default) in KEYS.items():
        text = raw.get(key, default)
        if text is None:
            raise ValueError(f"missing required key '{key}'")
        if text == "" and default == "":
            values[key] = None
            continue
        try:
            values[key] = parser(text)
        except ValueError:
            raise ValueError(f"malformed value for {key}: '{text}'") from None

    for key in PATH_KEYS:
        if values[key] is None:
            continue
        p = _resolve(values[key], base)
        if not p.exists():
            raise ValueError(f"path for {key} does not exist: {p}")
        values[key] = p

    check_k_ladder(values["experiment.k_ladder"])
    try:
        train = Period.parse(values["period.train_start"], values["period.train_end"])
        test = Period.parse(values["period.test_start"], values["period.test_end"])
    except ValueError as exc:
        raise ValueError(f"malformed period: {exc}") from None

    for key in ("experiment.seeds", "experiment.n_folds", "experiment.seeds_per_cell",
                "estimator.bootstrap_reps", "estimator.kmeans_restarts", "run.jobs"):
        if values[key] < 1:
            raise ValueError(f"{key} must be >= 1, got {values[key]}")
    if values["estimator.mi_bins"] < 2:
        raise ValueError("estimator.mi_bins must be >= 2")
    if not 0 < values["estimator.bootstrap_fraction"] <= 1:
        raise ValueError("estimator.bootstrap_fraction must be in (0, 1]")
    if not 2 <= values["estimator.k_min"] <= values["estimator.k_max"]:
        raise ValueError("estimator K range must satisfy 2 <= k_min <= k_max")

    # file values are relative to the config; flag and env values to the cwd
    if (overrides or {}).get("output.dir") is not None or env_out:
        output_dir = Path(values["output.dir"]).expanduser()
    else:
        output_dir = _resolve(values["output.dir"], base)

    model = ModelConfig(
        hidden_size=values["model.hidden_size"],
        dropout=values["model.dropout"],
        batch_size=values["model.batch_size"],
        seq_length=values["model.seq_length"],
        learning_rate=values["model.learning_rate"],
        epochs=values["model.epochs"],
        frontend_width=values["model.frontend_width"],
        frontend_mode=values["model.frontend_mode"],
        seed=values["experiment.master_seed"],
    )

    return RunConfig(
        attributes_path=values["data.attributes"],
        embeddings_path=values["data.embeddings"],
        forcings_dir=values["data.forcings_dir"],
        flow_dir=values["data.flow_dir"],
        basin_list=values["data.basin_list"],
        areas_path=values["data.areas"],
        pixels_dir=values["data.pixels_dir"],
        flow_units=values["data.flow_units"],
        train_period=train,
        test_period=test,
        model=model,
        output_dir=output_dir,
        n_seeds=values["experiment.seeds"],
        master_seed=values["experiment.master_seed"],
        n_folds=values["experiment.n_folds"],
        k_ladder=tuple(values["experiment.k_ladder"]),
        targets=tuple(values["experiment.targets"]),
        include_random=values["experiment.include_random"],
        seeds_per_cell=values["experiment.seeds_per_cell"],
        ks_sampling=values["experiment.ks_sampling"],
        settings=tuple(values["experiment.settings"]),
        representations=tuple(values["experiment.representations"]),
        mi_bins=values["estimator.mi_bins"],
        bootstrap_reps=values["estimator.bootstrap_reps"],
        bootstrap_fraction=values["estimator.bootstrap_fraction"],
        k_min=values["estimator.k_min"],
        k_max=values["estimator.k_max"],
        kmeans_restarts=values["estimator.kmeans_restarts"],
        ks_exact=values["estimator.ks_exact"],
        jobs=values["run.jobs"],
        values=values,
    )


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(str(v) for v in value) + "]"
    return str(value)


def write_config(values: Mapping[str, Any], path) -> str:
    """Write ``values`` (dotted keys) as a run config file."""
    for key in values:
        if key not in KEYS:
            raise ValueError(f"unknown config key '{key}'")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}={_format_value(value)}" for key, value in values.items()]
    path.write_text("\n".join(lines) + "\n")
    return str(path)

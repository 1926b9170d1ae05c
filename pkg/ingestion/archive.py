# ingestion/archive.py
"""
CSV ingestion for basin archives.

Layout on disk:

    attributes.csv          basin_id,<17 attribute names>
    embeddings.csv          basin_id,e00..e63
    forcings/<basin>.csv    date,prcp,dayl,srad,tmin,tmax,vp,pet
    flow/<basin>.csv        date,q_mm_day      (empty cell = missing)
    pixels/<basin>.csv      year,pixel_id,e00..e63   (optional)
"""

import logging
import math
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from configs.columns import (
    AEF,
    ATTRIBUTES,
    CUBIC_M_PER_CUBIC_FT,
    DATE_COL,
    EMBEDDING_COLS,
    FLOW_COL,
    FLOW_COL_CFS,
    FORCING_COLS,
    ID_COL,
    PIXEL_KEY_COLS,
    SECONDS_PER_DAY,
)
from ingestion.types import BasinArchive, Period, StaticTable, TimeSeriesFrame

logger = logging.getLogger(__name__)


def _to_float(series: pd.Series, column: str, where: str, allow_missing: bool) -> np.ndarray:
    s = series.astype(str).str.strip()
    empty = s.eq("") | s.str.lower().isin(["nan", "na"])
    if empty.any() and not allow_missing:
        row = int(np.flatnonzero(empty.values)[0])
        raise ValueError(f"missing value in column '{column}' (row {row + 1}) of {where}")
    out = pd.to_numeric(s.mask(empty), errors="coerce")
    bad = out.isna() & ~empty
    if bad.any():
        row = int(np.flatnonzero(bad.values)[0])
        raise ValueError(f"non-numeric cell '{s.iloc[row]}' in column '{column}' (row {row + 1}) of {where}")
    return out.to_numpy(dtype=np.float64)


def load_static_table(path, kind: str) -> StaticTable:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Static table not found: {path}")

    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if df.shape[1] < 2:
        raise ValueError(f"{path} needs an id column plus feature columns")

    id_col = df.columns[0]
    ids = df[id_col].astype(str).str.strip()
    if ids.eq("").any():
        raise ValueError(f"empty basin id in {path}")
    dup = ids[ids.duplicated()]
    if not dup.empty:
        raise ValueError(f"duplicate id {dup.iloc[0]} in {path}")

    feature_cols = list(df.columns[1:])
    values = np.column_stack([
        _to_float(df[c], c, str(path), allow_missing=False) for c in feature_cols
    ])
    # StaticTable validates the width against the kind
    return StaticTable(kind=kind, basins=tuple(ids), values=values, columns=tuple(feature_cols))


def load_daily_series(path, schema: Sequence[str], allow_missing: bool = False) -> TimeSeriesFrame:
    """
    Read a daily CSV with a ``date`` column plus ``schema`` columns.

    Forcing files (``allow_missing=False``) must be gap-free on the date axis.
    Flow files (``allow_missing=True``) are reindexed to a contiguous daily axis;
    skipped days and empty cells become NaN.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Series file not found: {path}")

    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in [DATE_COL, *schema] if c not in df.columns]
    if missing:
        raise ValueError(f"missing schema column(s) {missing} in {path}")

    try:
        dates = pd.to_datetime(df[DATE_COL].str.strip(), format="%Y-%m-%d", errors="raise")
    except (ValueError, TypeError) as exc:
        raise ValueError(f"unparsable date in {path}: {exc}") from None

    if dates.duplicated().any():
        raise ValueError(f"duplicate date {dates[dates.duplicated()].iloc[0].date()} in {path}")
    if not dates.is_monotonic_increasing:
        raise ValueError(f"dates not increasing in {path}")

    data = pd.DataFrame(
        {c: _to_float(df[c], c, str(path), allow_missing=allow_missing) for c in schema},
        index=pd.DatetimeIndex(dates, name=DATE_COL),
    )

    if len(data) > 1:
        steps = np.diff(data.index.values).astype("timedelta64[D]").astype(int)
        if np.any(steps != 1):
            gap_at = int(np.flatnonzero(steps != 1)[0])
            if not allow_missing:
                raise ValueError(f"date gap after {data.index[gap_at].date()} in {path}")
            data = data.reindex(pd.date_range(data.index[0], data.index[-1], freq="D", name=DATE_COL))

    return TimeSeriesFrame(data)


def convert_flow_units(q_cfs, area_km2: float):
    """Volumetric discharge (ft3/s) to depth per day (mm/day). NaN passes through."""
    if not area_km2 > 0:
        raise ValueError(f"area must be positive, got {area_km2}")
    factor = CUBIC_M_PER_CUBIC_FT * SECONDS_PER_DAY / (area_km2 * 1e6) * 1e3
    if isinstance(q_cfs, pd.Series):
        return q_cfs.astype(np.float64) * factor
    return np.asarray(q_cfs, dtype=np.float64) * factor


def aggregate_pixel_embeddings(pixel_rows) -> np.ndarray:
    """Component-wise mean over all (year, pixel) rows; exact under row permutation."""
    rows = [list(r) for r in pixel_rows] if not isinstance(pixel_rows, np.ndarray) else pixel_rows
    if len(rows) == 0:
        raise ValueError("cannot aggregate an empty set of pixel embeddings")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"ragged pixel rows (widths {sorted(widths)})")
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape[1] != len(EMBEDDING_COLS):
        raise ValueError(f"pixel rows must have {len(EMBEDDING_COLS)} entries, got {arr.shape[1]}")
    m = arr.shape[0]
    return np.array([math.fsum(col) for col in arr.T]) / m


def load_pixel_embeddings(pixels_dir, basins: Iterable[str]) -> StaticTable:
    pixels_dir = Path(pixels_dir)
    basins = list(basins)
    vectors = []
    for b in basins:
        path = pixels_dir / f"{b}.csv"
        if not path.exists():
            raise ValueError(f"missing pixel file for basin {b}: {path}")
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
        missing = [c for c in PIXEL_KEY_COLS + EMBEDDING_COLS if c not in df.columns]
        if missing:
            raise ValueError(f"missing schema column(s) {missing[:3]} in {path}")
        rows = np.column_stack([_to_float(df[c], c, str(path), allow_missing=False) for c in EMBEDDING_COLS])
        vectors.append(aggregate_pixel_embeddings(rows))
    return StaticTable(AEF, tuple(basins), np.vstack(vectors), tuple(EMBEDDING_COLS))


def load_basin_list(path) -> List[str]:
    """One basin id per line; blank lines and '#' comments ignored."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Basin list not found: {path}")
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate basin id in {path}")
    return out


def load_areas(path) -> Dict[str, float]:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if ID_COL not in df.columns or "area_km2" not in df.columns:
        raise ValueError(f"{path} needs columns '{ID_COL}' and 'area_km2'")
    areas = _to_float(df["area_km2"], "area_km2", str(path), allow_missing=False)
    return dict(zip(df[ID_COL].str.strip(), areas))


def _load_flow(flow_dir: Path, basin: str, flow_units: str, areas: Optional[Dict[str, float]]) -> TimeSeriesFrame:
    path = flow_dir / f"{basin}.csv"
    if flow_units == "cfs":
        if not areas or basin not in areas:
            raise ValueError(f"no area for basin {basin}; needed to convert cfs flow")
        frame = load_daily_series(path, [FLOW_COL_CFS], allow_missing=True)
        q = convert_flow_units(frame.data[FLOW_COL_CFS], areas[basin])
        return TimeSeriesFrame(q.rename(FLOW_COL).to_frame())
    return load_daily_series(path, [FLOW_COL], allow_missing=True)


def load_archive(
    attributes_path,
    embeddings_path,
    forcings_dir,
    flow_dir,
    basins: Optional[Sequence[str]] = None,
    areas_path=None,
    flow_units: str = "mm_day",
) -> BasinArchive:
    attributes = load_static_table(attributes_path, ATTRIBUTES)
    embeddings = load_static_table(embeddings_path, AEF)

    order = list(basins) if basins is not None else list(attributes.basins)
    for b in order:
        if b not in attributes.basins:
            raise ValueError(f"basin {b} missing from attribute table")
        if b not in embeddings.basins:
            raise ValueError(f"basin {b} missing from embedding table")
    attributes = attributes.subset(order)
    embeddings = embeddings.subset(order)

    areas = load_areas(areas_path) if areas_path else None
    forcings_dir, flow_dir = Path(forcings_dir), Path(flow_dir)

    forcings, flow = {}, {}
    for b in order:
        f_path = forcings_dir / f"{b}.csv"
        if not f_path.exists():
            raise ValueError(f"missing forcings for basin {b}: {f_path}")
        forcings[b] = load_daily_series(f_path, FORCING_COLS, allow_missing=False)
        if not (flow_dir / f"{b}.csv").exists():
            raise ValueError(f"missing flow for basin {b}: {flow_dir / f'{b}.csv'}")
        flow[b] = _load_flow(flow_dir, b, flow_units, areas)

    logger.info("Loaded archive with %d basins", len(order))
    return BasinArchive(attributes=attributes, embeddings=embeddings, forcings=forcings, flow=flow, areas=areas)


def check_archive(
    attributes_path,
    embeddings_path,
    forcings_dir,
    flow_dir,
    periods: Sequence[Period],
    seq_length: int,
    basins: Optional[Sequence[str]] = None,
    areas_path=None,
    flow_units: str = "mm_day",
) -> List[str]:
    """Collect every problem in an archive instead of stopping at the first."""
    problems = []
    try:
        attributes = load_static_table(attributes_path, ATTRIBUTES)
        embeddings = load_static_table(embeddings_path, AEF)
    except (OSError, ValueError) as exc:
        return [str(exc)]

    order = list(basins) if basins is not None else list(attributes.basins)
    for b in order:
        if b not in attributes.basins:
            problems.append(f"basin {b}: missing from attribute table")
        if b not in embeddings.basins:
            problems.append(f"basin {b}: missing from embedding table")

    areas = None
    if areas_path:
        try:
            areas = load_areas(areas_path)
        except (OSError, ValueError) as exc:
            problems.append(str(exc))

    first_needed = min(p.start for p in periods)
    last_needed = max(p.end for p in periods)
    warmup_start = pd.Timestamp(first_needed) - pd.Timedelta(days=seq_length - 1)

    forcings_dir, flow_dir = Path(forcings_dir), Path(flow_dir)
    for b in order:
        f_path = forcings_dir / f"{b}.csv"
        if not f_path.exists():
            problems.append(f"basin {b}: missing forcings file {f_path}")
        else:
            try:
                frame = load_daily_series(f_path, FORCING_COLS, allow_missing=False)
                if not frame.covers(warmup_start, last_needed):
                    problems.append(
                        f"basin {b}: forcings do not cover {warmup_start.date()}..{last_needed}"
                    )
            except (OSError, ValueError) as exc:
                problems.append(f"basin {b}: {exc}")

        if not (flow_dir / f"{b}.csv").exists():
            problems.append(f"basin {b}: missing flow file {flow_dir / f'{b}.csv'}")
        else:
            try:
                _load_flow(flow_dir, b, flow_units, areas)
            except (OSError, ValueError) as exc:
                problems.append(f"basin {b}: {exc}")

    return problems


def write_archive(archive: BasinArchive, directory) -> Dict[str, str]:
    directory = Path(directory)
    (directory / "forcings").mkdir(parents=True, exist_ok=True)
    (directory / "flow").mkdir(parents=True, exist_ok=True)

    paths = {
        "attributes": str(directory / "attributes.csv"),
        "embeddings": str(directory / "embeddings.csv"),
        "forcings_dir": str(directory / "forcings"),
        "flow_dir": str(directory / "flow"),
    }
    archive.attributes.to_frame().to_csv(paths["attributes"], index=False)
    archive.embeddings.to_frame().to_csv(paths["embeddings"], index=False)

    for b in archive.basins:
        f = archive.forcings[b].data.copy()
        f.index = f.index.strftime("%Y-%m-%d")
        f.index.name = DATE_COL
        f.to_csv(os.path.join(paths["forcings_dir"], f"{b}.csv"))

        q = archive.flow[b].data.copy()
        q.index = q.index.strftime("%Y-%m-%d")
        q.index.name = DATE_COL
        q.to_csv(os.path.join(paths["flow_dir"], f"{b}.csv"), na_rep="")

    return paths


def write_static_table(table: StaticTable, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_frame().to_csv(path, index=False)
    return str(path)

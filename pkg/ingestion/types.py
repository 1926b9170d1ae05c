"""
Shared domain types for basin archives.

All containers are immutable after construction: numpy arrays are flagged
read-only and frames are copied on the way in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from configs.columns import TABLE_KINDS, TABLE_WIDTHS

BasinId = str


def _readonly(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Period:
    """Closed range of whole days."""

    start: date
    end: date

    def __post_init__(self):
        start = pd.Timestamp(self.start).date()
        end = pd.Timestamp(self.end).date()
        if start > end:
            raise ValueError(f"Period start {start} is after end {end}")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @classmethod
    def parse(cls, start: str, end: str) -> "Period":
        return cls(pd.Timestamp(start).date(), pd.Timestamp(end).date())

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    def dates(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, self.end, freq="D")

    def split(self, fraction: float) -> Tuple["Period", "Period"]:
        """Cut into a leading part holding ``fraction`` of the days and the rest."""
        n_head = int(np.floor(self.n_days * fraction))
        if n_head < 1 or n_head >= self.n_days:
            raise ValueError(f"Period {self} too short to split at {fraction}")
        cut = pd.Timestamp(self.start) + pd.Timedelta(days=n_head)
        return (
            Period(self.start, (cut - pd.Timedelta(days=1)).date()),
            Period(cut.date(), self.end),
        )

    def __str__(self) -> str:
        return f"{self.start.isoformat()}..{self.end.isoformat()}"


@dataclass(frozen=True)
class TimeSeriesFrame:
    """
    Contiguous daily series.

    ``data`` is indexed by a daily DatetimeIndex; NaN is the missing-value
    sentinel.
    """

    data: pd.DataFrame

    def __post_init__(self):
        df = self.data.copy()
        if not isinstance(df.index, pd.DatetimeIndex):
            raise ValueError("TimeSeriesFrame needs a DatetimeIndex")
        if len(df) > 1:
            steps = np.diff(df.index.values).astype("timedelta64[D]").astype(int)
            if not np.all(steps == 1):
                raise ValueError("TimeSeriesFrame dates must step by exactly one day")
        df = df.astype(np.float64)
        object.__setattr__(self, "data", df)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.data.index

    @property
    def columns(self) -> List[str]:
        return list(self.data.columns)

    def __len__(self) -> int:
        return len(self.data)

    def covers(self, start: pd.Timestamp, end: pd.Timestamp) -> bool:
        if self.data.empty:
            return False
        return self.data.index[0] <= pd.Timestamp(start) and self.data.index[-1] >= pd.Timestamp(end)

    def window(self, start, end) -> pd.DataFrame:
        return self.data.loc[pd.Timestamp(start):pd.Timestamp(end)]


@dataclass(frozen=True)
class StaticTable:
    """One row of static descriptors per basin."""

    kind: str
    basins: Tuple[BasinId, ...]
    values: np.ndarray
    columns: Tuple[str, ...]

    def __post_init__(self):
        if self.kind not in TABLE_KINDS:
            raise ValueError(f"Unknown table kind '{self.kind}'. Must be one of {TABLE_KINDS}")
        basins = tuple(str(b) for b in self.basins)
        values = _readonly(self.values)
        if values.ndim != 2 or values.shape[0] != len(basins):
            raise ValueError(f"Table shape {values.shape} does not match {len(basins)} basins")
        if values.shape[1] != len(self.columns):
            raise ValueError(f"Table has {values.shape[1]} columns but {len(self.columns)} names")
        expected = TABLE_WIDTHS.get(self.kind)
        if expected is not None and values.shape[1] != expected:
            raise ValueError(
                f"wrong column count for {self.kind}: expected {expected}, got {values.shape[1]}"
            )
        for b in basins:
            if not b:
                raise ValueError("empty basin id")
        seen = set()
        for b in basins:
            if b in seen:
                raise ValueError(f"duplicate id {b}")
            seen.add(b)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.kind} table contains missing or non-finite values")
        object.__setattr__(self, "basins", basins)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n(self) -> int:
        return len(self.basins)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def index_of(self, basin: BasinId) -> int:
        try:
            return self.basins.index(basin)
        except ValueError:
            raise ValueError(f"basin {basin} not in {self.kind} table") from None

    def row(self, basin: BasinId) -> np.ndarray:
        return self.values[self.index_of(basin)]

    def subset(self, basins: Sequence[BasinId]) -> "StaticTable":
        idx = [self.index_of(b) for b in basins]
        return StaticTable(self.kind, tuple(basins), self.values[idx], self.columns)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=list(self.columns))
        df.insert(0, "basin_id", list(self.basins))
        return df


@dataclass(frozen=True)
class ColumnStats:
    """Per-column mean and population standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _readonly(np.atleast_1d(self.mean))
        std = _readonly(np.atleast_1d(self.std))
        if mean.shape != std.shape:
            raise ValueError("ColumnStats mean and std shapes differ")
        if np.any(std < 0):
            raise ValueError("ColumnStats std must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, payload: Dict[str, List[float]]) -> "ColumnStats":
        return cls(np.asarray(payload["mean"]), np.asarray(payload["std"]))


@dataclass(frozen=True)
class SplitSpec:
    train_basins: Tuple[BasinId, ...]
    test_basins: Tuple[BasinId, ...]
    train_period: Period
    test_period: Period
    label: str

    def __post_init__(self):
        object.__setattr__(self, "train_basins", tuple(self.train_basins))
        object.__setattr__(self, "test_basins", tuple(self.test_basins))


@dataclass(frozen=True)
class BasinArchive:
    """Static tables plus per-basin forcing and flow series."""

    attributes: StaticTable
    embeddings: StaticTable
    forcings: Dict[BasinId, TimeSeriesFrame]
    flow: Dict[BasinId, TimeSeriesFrame]
    areas: Optional[Dict[BasinId, float]] = None
    extra_tables: Dict[str, StaticTable] = field(default_factory=dict)

    @property
    def basins(self) -> List[BasinId]:
        return list(self.attributes.basins)

    def static_table(self, kind: str) -> StaticTable:
        if kind == self.attributes.kind:
            return self.attributes
        if kind == self.embeddings.kind:
            return self.embeddings
        if kind in self.extra_tables:
            return self.extra_tables[kind]
        raise ValueError(f"Archive has no '{kind}' table")

    def flow_series(self, basin: BasinId) -> pd.Series:
        if basin not in self.flow:
            raise ValueError(f"No flow series for basin {basin}")
        return self.flow[basin].data.iloc[:, 0]

    def forcing_frame(self, basin: BasinId) -> TimeSeriesFrame:
        if basin not in self.forcings:
            raise ValueError(f"No forcings for basin {basin}")
        return self.forcings[basin]

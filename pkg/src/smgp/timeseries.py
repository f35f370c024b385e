"""Univariate time series: data model, CSV I/O, splitting and scaling."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

_MONTH = re.compile(r"^(\d{4})-(\d{2})$")


def fmt_real(x: float) -> str:
    """Format a real with 17 significant digits (exact round trip)."""
    return format(float(x), ".17g")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    timestamps: np.ndarray
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        t = _frozen(self.timestamps)
        y = _frozen(self.values)
        if t.size == 0:
            raise DataError("time series must contain at least one observation")
        if t.size != y.size:
            raise DataError(f"timestamps ({t.size}) and values ({y.size}) differ in length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise DataError("time series contains NaN or infinite entries")
        if np.any(np.diff(t) <= 0):
            raise DataError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", y)

    def __len__(self):
        return self.timestamps.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.values, other.values))

    __hash__ = None

    @property
    def spacing(self) -> float:
        """Median spacing between consecutive timestamps (1.0 for a single point)."""
        if len(self) < 2:
            return 1.0
        return float(np.median(np.diff(self.timestamps)))


@dataclass(frozen=True)
class ScalingParams:
    """Affine maps between native and standardized units."""

    y_mean: float = 0.0
    y_std: float = 1.0
    x_origin: float = 0.0
    x_scale: float = 1.0

    def __post_init__(self):
        if not (self.y_std > 0 and self.x_scale > 0):
            raise DataError("scaling factors must be positive")

    def x_to_std(self, t):
        return (np.asarray(t, dtype=float) - self.x_origin) / self.x_scale

    def x_from_std(self, x):
        return np.asarray(x, dtype=float) * self.x_scale + self.x_origin

    def y_to_std(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def y_from_std(self, z):
        return np.asarray(z, dtype=float) * self.y_std + self.y_mean

    def to_dict(self) -> dict:
        return {"y_mean": self.y_mean, "y_std": self.y_std,
                "x_origin": self.x_origin, "x_scale": self.x_scale}


@dataclass(frozen=True)
class SplitSeries:
    train: TimeSeries
    test: TimeSeries | None

    @property
    def n_test(self) -> int:
        return 0 if self.test is None else len(self.test)


def _parse_time(field: str, line: int):
    m = _MONTH.match(field)
    if m:
        year, month = int(m.group(1)), int(m.group(2))
        if not 1 <= month <= 12:
            raise DataError(f"invalid month {field!r}", line)
        return "month", year * 12 + (month - 1)
    try:
        val = float(field)
    except ValueError:
        raise DataError(f"malformed timestamp {field!r}", line) from None
    return "real", val


def load_csv(path) -> TimeSeries:
    """Read a ``t,y`` CSV file.

    Timestamps are plain reals or ``YYYY-MM`` months; months map to
    consecutive integers with the first month at 0.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t", "y"]:
        raise DataError("expected header 't,y'", 1)

    kinds, ts, ys, lines = set(), [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DataError(f"expected 2 fields, got {len(row)}", lineno)
        kind, t = _parse_time(row[0].strip(), lineno)
        try:
            y = float(row[1])
        except ValueError:
            raise DataError(f"malformed value {row[1]!r}", lineno) from None
        if not (np.isfinite(t) and np.isfinite(y)):
            raise DataError("non-finite field", lineno)
        kinds.add(kind)
        if len(kinds) > 1:
            raise DataError("mixed month and numeric timestamps", lineno)
        if ts and t <= ts[-1]:
            raise DataError("timestamps unsorted or duplicated", lineno)
        ts.append(t)
        ys.append(y)
        lines.append(lineno)
    if not ts:
        raise DataError(f"no data rows in {path}")
    t = np.asarray(ts, dtype=float)
    if kinds == {"month"}:
        t = t - t[0]
    return TimeSeries(t, np.asarray(ys), name=path.stem)


def write_csv(series: TimeSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("t,y\n")
        for t, y in zip(series.timestamps, series.values):
            fh.write(f"{fmt_real(t)},{fmt_real(y)}\n")


def split(series: TimeSeries, n_train: int) -> SplitSeries:
    n = len(series)
    if not 1 <= n_train <= n:
        raise DataError(f"n_train must be in [1, {n}], got {n_train}")
    train = TimeSeries(series.timestamps[:n_train], series.values[:n_train], series.name)
    test = None
    if n_train < n:
        test = TimeSeries(series.timestamps[n_train:], series.values[n_train:], series.name)
    return SplitSeries(train, test)


def scaling_for(series: TimeSeries) -> ScalingParams:
    if len(series) < 2:
        raise DataError("standardization needs at least 2 observations")
    y_std = float(np.std(series.values, ddof=1))
    if not y_std > 0:
        raise DataError("series has zero variance; nothing to model")
    return ScalingParams(
        y_mean=float(np.mean(series.values)),
        y_std=y_std,
        x_origin=float(series.timestamps[0]),
        x_scale=series.spacing,
    )


def standardize(series: TimeSeries) -> tuple[TimeSeries, ScalingParams]:
    """Zero-mean, unit-sample-variance values; first timestamp at 0, median spacing 1."""
    sc = scaling_for(series)
    out = TimeSeries(sc.x_to_std(series.timestamps), sc.y_to_std(series.values), series.name)
    return out, sc


def unstandardize(series: TimeSeries, scaling: ScalingParams) -> TimeSeries:
    return TimeSeries(scaling.x_from_std(series.timestamps),
                      scaling.y_from_std(series.values), series.name)

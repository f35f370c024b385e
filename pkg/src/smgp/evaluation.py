"""Forecast accuracy metrics and model-comparison tables."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .timeseries import fmt_real


def _pair(actual, predicted):
    a = np.asarray(actual, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if a.size != p.size:
        raise DataError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if a.size == 0:
        raise DataError("metrics need at least one observation")
    return a, p


def rmse(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, in percent."""
    a, p = _pair(actual, predicted)
    zero = np.flatnonzero(a == 0)
    if zero.size:
        raise DataError(f"MAPE undefined: actual value is 0 at index {int(zero[0])}")
    return float(100.0 * np.mean(np.abs(a - p) / np.abs(a)))


def interval_coverage(actual, lo, hi) -> float:
    """Fraction of points inside the closed interval ``[lo, hi]``."""
    a = np.asarray(actual, dtype=float).reshape(-1)
    lo = np.asarray(lo, dtype=float).reshape(-1)
    hi = np.asarray(hi, dtype=float).reshape(-1)
    if not a.size == lo.size == hi.size:
        raise DataError("actual, lo and hi must have equal lengths")
    bad = np.flatnonzero(lo > hi)
    if bad.size:
        raise DataError(f"lower bound exceeds upper bound at index {int(bad[0])}")
    if a.size == 0:
        raise DataError("coverage needs at least one observation")
    return float(np.mean((lo <= a) & (a <= hi)))


@dataclass(frozen=True)
class MetricsReport:
    model_name: str
    rmse: float
    mape: float
    coverage95: float
    n_test: int

    def __post_init__(self):
        if self.rmse < 0 or self.mape < 0 or not 0 <= self.coverage95 <= 1:
            raise DataError(f"invalid metrics for {self.model_name}")


def evaluate_forecast(name: str, actual, forecast) -> MetricsReport:
    """Metrics for a ``PredictiveDistribution`` against held-out values."""
    a = np.asarray(actual, dtype=float)
    return MetricsReport(name, rmse(a, forecast.mean), mape(a, forecast.mean),
                         interval_coverage(a, forecast.lo95, forecast.hi95), int(a.size))


@dataclass(frozen=True)
class ComparisonRow:
    report: MetricsReport
    best_rmse: bool
    best_mape: bool


def compare_models(reports) -> list[ComparisonRow]:
    """One row per model; every model attaining the minimum RMSE/MAPE is flagged."""
    reports = list(reports)
    if not reports:
        raise DataError("nothing to compare")
    r_min = min(r.rmse for r in reports)
    m_min = min(r.mape for r in reports)
    return [ComparisonRow(r, r.rmse == r_min, r.mape == m_min) for r in reports]


def format_table(rows: list[ComparisonRow]) -> str:
    """Aligned plain-text table; ``*`` marks the best value in a column."""
    body = []
    for row in rows:
        r = row.report
        body.append([
            r.model_name,
            f"{r.rmse:.2f}" + ("*" if row.best_rmse else " "),
            f"{r.mape:.2f}%" + ("*" if row.best_mape else " "),
            f"{r.coverage95:.2f}",
            str(r.n_test),
        ])
    header = ["MODEL", "RMSE", "MAPE", "COVERAGE95", "N_TEST"]
    widths = [max(len(x[i]) for x in body + [header]) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w)
                       for i, (h, w) in enumerate(zip(header, widths)))]
    lines.append("  ".join("-" * w for w in widths))
    for x in body:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                               for i, (c, w) in enumerate(zip(x, widths))))
    return "\n".join(lines) + "\n"


def write_report_csv(reports, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "rmse", "mape", "coverage95", "n_test"])
        for r in reports:
            w.writerow([r.model_name, fmt_real(r.rmse), fmt_real(r.mape),
                        fmt_real(r.coverage95), r.n_test])

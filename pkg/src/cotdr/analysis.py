"""Measurement-series statistics and closed-form latency error budgets."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial

from .channel import FiberSpec, fiber_one_way_delay

SERIES_HEADER = ("t_seconds", "latency_seconds", "label")
OFFSET_GRID_POINTS = 100


class AnalysisError(ValueError):
    """Series that cannot be analysed as requested."""


@dataclass(frozen=True, eq=False)
class MeasurementSeries:
    timestamps: np.ndarray
    latencies: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        t = np.asarray(self.timestamps, dtype=np.float64)
        y = np.asarray(self.latencies, dtype=np.float64)
        if t.ndim != 1 or t.shape != y.shape:
            raise AnalysisError("timestamps and latencies must be 1-D and of equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise AnalysisError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "latencies", y)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.timestamps[0]), float(self.timestamps[-1])


@dataclass(frozen=True, eq=False)
class DetrendResult:
    """Polynomial trend over time normalised to [-1, 1].

    ``coefficients`` are in increasing degree for the normalised time and
    already include the series mean.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    residual_std: float
    domain: tuple[float, float]

    def normalize(self, t: np.ndarray) -> np.ndarray:
        lo, hi = self.domain
        return (2.0 * np.asarray(t, dtype=np.float64) - (lo + hi)) / (hi - lo)

    def trend(self, t: np.ndarray) -> np.ndarray:
        return np.polynomial.polynomial.polyval(self.normalize(t), self.coefficients)


def detrend_poly(series: MeasurementSeries, degree: int = 4) -> DetrendResult:
    """Least-squares polynomial trend and the residual scatter around it.

    ``residual_std`` uses the N-1 denominator.
    """
    n = len(series)
    if n < degree + 2:
        raise AnalysisError(f"degree-{degree} detrend needs at least {degree + 2} points, got {n}")
    t, y = series.timestamps, series.latencies
    mean = float(y.mean())
    # Polynomial.fit maps [t_first, t_last] onto [-1, 1] before solving
    poly = Polynomial.fit(t, y - mean, degree)
    coef = np.zeros(degree + 1)
    coef[: poly.coef.size] = poly.coef
    coef[0] += mean
    lo, hi = (float(v) for v in poly.domain)
    result = DetrendResult(coef, np.empty(0), 0.0, (lo, hi))
    residuals = y - result.trend(t)
    return DetrendResult(coef, residuals, float(np.std(residuals, ddof=1)), (lo, hi))


def series_offset(a: MeasurementSeries, b: MeasurementSeries, degree: int = 4) -> float:
    """Mean difference ``trend_a - trend_b`` over the shared time span."""
    lo = max(a.span[0], b.span[0])
    hi = min(a.span[1], b.span[1])
    if not hi > lo:
        raise AnalysisError(f"series {a.label!r} and {b.label!r} do not overlap in time")
    grid = np.linspace(lo, hi, OFFSET_GRID_POINTS)
    ta = detrend_poly(a, degree).trend(grid)
    tb = detrend_poly(b, degree).trend(grid)
    return float(np.mean(ta - tb))


def clock_latency_error(one_way_latency: float, clock_accuracy: float) -> float:
    """Latency error from a fractional timebase error."""
    if not one_way_latency > 0:
        raise AnalysisError("latency must be positive")
    return one_way_latency * clock_accuracy


def phase_latency_budget(rf_frequency: float, phase_error: float) -> float:
    """Differential delay that produces ``phase_error`` degrees at ``rf_frequency`` Hz."""
    if not rf_frequency > 0:
        raise AnalysisError("rf_frequency must be positive")
    return phase_error / 360.0 / rf_frequency


def thermal_sensitivity(fiber: FiberSpec) -> float:
    """One-way delay change per kelvin (s/K)."""
    return fiber_one_way_delay(fiber, 0.0) * fiber.thermal_coeff


def skew_improvement_factor(old_accuracy: float, new_accuracy: float) -> float:
    if not new_accuracy > 0:
        raise AnalysisError("new_accuracy must be positive")
    return old_accuracy / new_accuracy


# -- CSV ---------------------------------------------------------------------


def format_seconds(x: float) -> str:
    """Scientific notation, 12 significant digits."""
    return f"{x:.11e}"


def series_to_csv(series: MeasurementSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_HEADER)
    for t, y in zip(series.timestamps, series.latencies):
        w.writerow((format_seconds(t), format_seconds(y), series.label))
    return buf.getvalue()


def write_series_csv(path: str | Path, series: MeasurementSeries) -> None:
    Path(path).write_text(series_to_csv(series), encoding="utf-8", newline="")


def read_series_csv(path: str | Path) -> list[MeasurementSeries]:
    """Series keyed by the ``label`` column, in order of first appearance."""
    rows: dict[str, tuple[list[float], list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SERIES_HEADER:
            raise AnalysisError(f"expected header {','.join(SERIES_HEADER)}, got {reader.fieldnames}")
        for row in reader:
            ts, ys = rows.setdefault(row["label"], ([], []))
            ts.append(float(row["t_seconds"]))
            ys.append(float(row["latency_seconds"]))
    return [MeasurementSeries(np.array(ts), np.array(ys), label) for label, (ts, ys) in rows.items()]

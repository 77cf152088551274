"""
Time-series primitives shared by all models: seasonal decomposition,
cross-correlation, differencing, lagged design matrices and Fourier terms.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator

from .errors import DesignMatrixError, TimeSeriesError
from .indices import IndexSeries
from .ingest import WeeklySeries
from .io_utils import atomic_write_text

logger = logging.getLogger(__name__)

DEFAULT_PERIOD = 52
FOURIER_PERIOD = 365.25 / 7  # 52.18 weeks per year
DEFAULT_ITERATIONS = 2
DEFAULT_PEAK_WINDOW = 13


# --- Seasonal decomposition ---

@dataclass(frozen=True)
class Decomposition:
    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    profile: np.ndarray  # one seasonal value per week position
    start_position: int = 0

    @property
    def period(self) -> int:
        return len(self.profile)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": np.arange(1, len(self.observed) + 1),
            "observed": self.observed, "trend": self.trend,
            "seasonal": self.seasonal, "remainder": self.remainder,
        })


def centered_moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average (2 x window for even windows); the window shrinks at the ends."""
    if window % 2 == 0:
        weights = np.ones(window + 1)
        weights[0] = weights[-1] = 0.5
    else:
        weights = np.ones(window)
    num = np.convolve(x, weights, mode="same")
    den = np.convolve(np.ones(len(x)), weights, mode="same")
    return num / den


def seasonal_decompose(
    x: Sequence[float],
    period: int = DEFAULT_PERIOD,
    iterations: int = DEFAULT_ITERATIONS,
    start_position: int = 0,
) -> Decomposition:
    """
    Splits a series into trend, seasonal and remainder components.

    Each pass takes the mean of every weekly subseries of the detrended data
    as the seasonal profile, smooths the deseasonalized data with a centered
    moving average to get the trend, then moves the profile's level into the
    trend so the seasonal component has mean zero over any full period.

    Args:
        x: Observed series.
        period: Season length in observations.
        iterations: Number of passes (1-10).
        start_position: Week position (0-based) of the first observation.

    Raises:
        TimeSeriesError: If the series is shorter than two periods.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if period < 2:
        raise TimeSeriesError(f"Invalid period: {period} must be >= 2.")
    if n < 2 * period:
        raise TimeSeriesError(f"Series too short: {n} observations, need at least {2 * period}.")
    if not 1 <= iterations <= 10:
        raise TimeSeriesError(f"Invalid iterations: {iterations} must be between 1 and 10.")

    positions = (np.arange(n) + start_position) % period
    counts = np.bincount(positions, minlength=period)
    trend = np.zeros(n)
    profile = np.zeros(period)
    for _ in range(iterations):
        detrended = x - trend
        profile = np.bincount(positions, weights=detrended, minlength=period) / counts
        trend = centered_moving_average(x - profile[positions], period)
        level = profile.mean()
        profile = profile - level
        trend = trend + level

    seasonal = profile[positions]
    return Decomposition(x, trend, seasonal, x - trend - seasonal, profile, start_position)


def peak_week(decomposition: Decomposition, window: int = DEFAULT_PEAK_WINDOW) -> int:
    """
    Week-of-year (1-based) where the seasonal profile peaks, assuming position 0 is week 1.

    The profile is first smoothed with a circular centered moving average of
    ``window`` weeks (1 takes the raw profile); a mean over three or four
    years is too noisy to locate the peak week by itself.
    """
    if window < 1 or window % 2 == 0 or window > decomposition.period:
        raise TimeSeriesError(f"Invalid peak window: {window} must be odd and between 1 and {decomposition.period}.")
    profile = decomposition.profile
    half = window // 2
    wrapped = np.concatenate([profile[len(profile) - half:], profile, profile[:half]])
    smoothed = np.convolve(wrapped, np.ones(window) / window, mode="valid")
    return int(np.argmax(smoothed)) + 1


# --- Cross-correlation ---

def significance_bound(n: int) -> float:
    return 2.0 / np.sqrt(n)


def cross_correlation(a: Sequence[float], b: Sequence[float], max_lag: int) -> List[Tuple[int, float]]:
    """
    Correlation of (a_t, b_{t+k}) for k in [-max_lag, max_lag].

    Both series are centered on their full-sample means and scaled by their
    full-sample standard deviations; each lag averages over its overlapping
    window.

    Raises:
        TimeSeriesError: On unequal lengths, too short series or zero variance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    if len(b) != n:
        raise TimeSeriesError(f"Series lengths differ: {n} vs {len(b)}.")
    if max_lag < 0 or n <= max_lag + 2:
        raise TimeSeriesError(f"Invalid max_lag {max_lag} for series of length {n}.")
    a_c = a - a.mean()
    b_c = b - b.mean()
    sa = np.sqrt(np.mean(a_c ** 2))
    sb = np.sqrt(np.mean(b_c ** 2))
    if sa == 0 or sb == 0:
        raise TimeSeriesError("Cross-correlation is undefined for a constant series.")

    out = []
    for k in range(-max_lag, max_lag + 1):
        if k >= 0:
            total = np.dot(a_c[:n - k], b_c[k:])
        else:
            total = np.dot(a_c[-k:], b_c[:n + k])
        out.append((k, float(total / ((n - abs(k)) * sa * sb))))
    return out


def ccf_frame(correlations: List[Tuple[int, float]], n: int) -> pd.DataFrame:
    frame = pd.DataFrame(correlations, columns=["lag", "correlation"])
    frame["significance_bound"] = significance_bound(n)
    return frame


# --- Differencing ---

def differencing_polynomial(d: int, D: int, s: int) -> np.ndarray:
    """Coefficients of (1 - B)^d (1 - B^s)^D in increasing powers of B."""
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    seasonal = np.zeros(s + 1)
    seasonal[0], seasonal[s] = 1.0, -1.0
    for _ in range(D):
        poly = np.convolve(poly, seasonal)
    return poly


def difference(x: Sequence[float], d: int, D: int = 0, s: int = DEFAULT_PERIOD) -> np.ndarray:
    """
    Applies (1 - B)^d (1 - B^s)^D; the output is d + D*s shorter than the input.

    Raises:
        TimeSeriesError: If the series is not longer than d + D*s.
    """
    x = np.asarray(x, dtype=float)
    if min(d, D) < 0 or s < 1:
        raise TimeSeriesError(f"Invalid differencing orders d={d}, D={D}, s={s}.")
    if len(x) <= d + D * s:
        raise TimeSeriesError(f"Series too short: {len(x)} observations for d={d}, D={D}, s={s}.")
    for _ in range(d):
        x = x[1:] - x[:-1]
    for _ in range(D):
        x = x[s:] - x[:-s]
    return x


def undifference(diffs: Sequence[float], initial: Sequence[float], d: int, D: int = 0, s: int = DEFAULT_PERIOD) -> np.ndarray:
    """
    Inverts ``difference`` given the first d + D*s values of the original series.

    Returns:
        np.ndarray: The reconstructed series, initial values included.
    """
    poly = differencing_polynomial(d, D, s)
    m = len(poly) - 1
    initial = np.asarray(initial, dtype=float)
    if len(initial) != m:
        raise TimeSeriesError(f"Expected {m} initial values, got {len(initial)}.")
    diffs = np.asarray(diffs, dtype=float)
    out = np.concatenate([initial, np.zeros(len(diffs))])
    for i, u in enumerate(diffs):
        t = m + i
        out[t] = u - np.dot(poly[1:], out[t - 1::-1][:m])
    return out


# --- Design matrices ---

class LagSpec(BaseModel):
    """Which lagged and calendar predictors enter a design matrix."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    target_name: str = "hdi_sqrt"
    si_lags: List[int] = []
    hdi_lags: List[int] = []
    include_median_dom: bool = False
    include_week_number: bool = False

    @field_validator("si_lags", "hdi_lags")
    @classmethod
    def _distinct_sorted(cls, lags: List[int], info):
        if len(set(lags)) != len(lags):
            raise ValueError(f"{info.field_name} must be distinct, got {lags}")
        floor = 0 if info.field_name == "si_lags" else 1
        if any(lag < floor for lag in lags):
            raise ValueError(f"{info.field_name} must be >= {floor}, got {lags}")
        return sorted(lags)

    @field_validator("target_name")
    @classmethod
    def _known_target(cls, name: str):
        if name not in ("hdi_sqrt", "hdi"):
            raise ValueError(f"target_name must be 'hdi_sqrt' or 'hdi', got {name!r}")
        return name

    @property
    def max_lag(self) -> int:
        return max(self.si_lags + self.hdi_lags + [0])

    def column_names(self) -> List[str]:
        names = [f"SI-L{k}" for k in self.si_lags]
        if self.include_median_dom:
            names.append("median_dom")
        if self.include_week_number:
            names.append("week")
        names += [f"HDI-L{k}" for k in self.hdi_lags]
        return names


def short_term_lag_spec() -> LagSpec:
    """Two-week "heat index" design: the past ten weeks of market activity."""
    lags = list(range(2, 11))
    return LagSpec(si_lags=lags, hdi_lags=lags, include_median_dom=True, include_week_number=True)


def lasso_lag_spec() -> LagSpec:
    """The 35-predictor design: SI, SI lags 5-20, median DOM, week, HDI lags 5-20."""
    lags = list(range(5, 21))
    return LagSpec(si_lags=[0] + lags, hdi_lags=lags, include_median_dom=True, include_week_number=True)


def arimax_lag_spec() -> LagSpec:
    """Lagged SI (5-20 weeks) as exogenous predictors of the long-term model."""
    return LagSpec(si_lags=list(range(5, 21)))


@dataclass(frozen=True)
class DesignMatrix:
    column_names: Tuple[str, ...]
    rows: np.ndarray
    target: Optional[np.ndarray] = None
    positions: Optional[np.ndarray] = None  # series index of each row
    target_name: str = "hdi_sqrt"  # scale of target: "hdi_sqrt" or "hdi"

    def __post_init__(self):
        object.__setattr__(self, "column_names", tuple(self.column_names))
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1) if len(self.column_names) == 1 else rows.reshape(0, len(self.column_names))
        object.__setattr__(self, "rows", rows)
        if rows.shape[1] != len(self.column_names):
            raise DesignMatrixError(f"{rows.shape[1]} columns of data for {len(self.column_names)} names.")
        if self.target is not None and len(self.target) != rows.shape[0]:
            raise DesignMatrixError(f"Target length {len(self.target)} does not match {rows.shape[0]} rows.")
        if self.positions is None:
            object.__setattr__(self, "positions", np.arange(rows.shape[0]))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_cols(self) -> int:
        return self.rows.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.column_index(name)]

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DesignMatrixError(f"Missing column '{name}' in design matrix {list(self.column_names)}.")

    def select(self, names: Sequence[str]) -> "DesignMatrix":
        idx = [self.column_index(name) for name in names]
        return DesignMatrix(tuple(names), self.rows[:, idx], self.target, self.positions, self.target_name)

    def take(self, row_index: Sequence[int]) -> "DesignMatrix":
        row_index = np.asarray(row_index, dtype=int)
        target = None if self.target is None else self.target[row_index]
        return DesignMatrix(self.column_names, self.rows[row_index], target, self.positions[row_index], self.target_name)

    def hstack(self, other: "DesignMatrix") -> "DesignMatrix":
        if other.n_rows != self.n_rows:
            raise DesignMatrixError(f"Cannot join {self.n_rows} rows with {other.n_rows} rows.")
        return DesignMatrix(
            self.column_names + other.column_names, np.hstack([self.rows, other.rows]),
            self.target, self.positions, self.target_name,
        )

    def with_target(self, target: Optional[np.ndarray]) -> "DesignMatrix":
        return DesignMatrix(self.column_names, self.rows, target, self.positions, self.target_name)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=list(self.column_names))
        frame.insert(0, "t", self.positions + 1)
        if self.target is not None:
            frame["target"] = self.target
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "DesignMatrix":
        names = [c for c in frame.columns if c not in ("t", "target")]
        target = frame["target"].to_numpy(dtype=float) if "target" in frame.columns else None
        positions = frame["t"].to_numpy(dtype=int) - 1 if "t" in frame.columns else None
        return cls(tuple(names), frame[names].to_numpy(dtype=float), target, positions)


def build_design_matrix(idx: IndexSeries, weekly: Optional[WeeklySeries], spec: LagSpec) -> DesignMatrix:
    """
    Builds the lagged predictor matrix and its aligned target.

    Rows run from t = max_lag to n - 1 (0-based), so every cell has full lag
    history. "SI-L<k>" is SI at week t - k, "HDI-L<k>" is HDI at week t - k.

    Raises:
        DesignMatrixError: On an empty spec or a lag that does not fit the series.
    """
    names = spec.column_names()
    if not names:
        raise DesignMatrixError("Empty lag spec: at least one predictor is required.")
    n = len(idx)
    if weekly is None and spec.include_median_dom:
        raise DesignMatrixError("median_dom requires the weekly series.")
    if weekly is not None and len(weekly) != n:
        raise DesignMatrixError(f"Index series ({n}) and weekly series ({len(weekly)}) lengths differ.")
    max_lag = spec.max_lag
    if max_lag >= n:
        raise DesignMatrixError(f"Lag {max_lag} does not fit a series of length {n}.")

    t = np.arange(max_lag, n)
    columns = [idx.si[t - k] for k in spec.si_lags]
    if spec.include_median_dom:
        columns.append(weekly.median_dom[t])
    if spec.include_week_number:
        columns.append(idx.weeks[t].astype(float))
    columns += [idx.hdi[t - k] for k in spec.hdi_lags]
    target = idx.hdi_sqrt[t] if spec.target_name == "hdi_sqrt" else idx.hdi[t]
    return DesignMatrix(tuple(names), np.column_stack(columns), target.copy(), t, spec.target_name)


def fourier_terms(n: int, K: int, period: float = FOURIER_PERIOD, start: int = 1) -> DesignMatrix:
    """
    Fourier predictors sin(2*pi*j*t/period), cos(2*pi*j*t/period) for j = 1..K.

    Args:
        n: Number of rows.
        K: Number of harmonics (2K columns).
        period: Cycle length in observations.
        start: Value of t on the first row.

    Raises:
        DesignMatrixError: If K < 1 or 2K >= period.
    """
    if K < 1 or 2 * K >= period:
        raise DesignMatrixError(f"Invalid number of harmonics K={K} for period {period}.")
    t = np.arange(start, start + n, dtype=float)
    names, columns = [], []
    for j in range(1, K + 1):
        angle = 2.0 * np.pi * j * t / period
        names += [f"fourier_sin_{j}", f"fourier_cos_{j}"]
        columns += [np.sin(angle), np.cos(angle)]
    return DesignMatrix(tuple(names), np.column_stack(columns), None, np.arange(start - 1, start - 1 + n))


def write_frame_csv(frame: pd.DataFrame, path) -> None:
    atomic_write_text(path, frame.to_csv(index=False, float_format="%.10g", lineterminator="\n"))

"""
Housing Demand Index (HDI) and Showing Index (SI).

    HDI = sold / on_market          SI = showings / on_market

Models are fitted on sqrt(HDI); ``inverse_transform`` brings predictions back
to the HDI scale. SI enters the models untransformed.
"""
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import pandas as pd

from .errors import IndexComputationError
from .ingest import WeeklySeries
from .io_utils import atomic_write_text

logger = logging.getLogger(__name__)

INDEX_COLUMNS = ["year", "week", "hdi", "si", "hdi_sqrt"]


@dataclass(frozen=True)
class IndexSeries:
    years: np.ndarray
    weeks: np.ndarray
    hdi: np.ndarray
    si: np.ndarray
    hdi_sqrt: np.ndarray

    def __len__(self) -> int:
        return len(self.hdi)

    def slice(self, start: int, stop: int = None) -> "IndexSeries":
        return IndexSeries(
            self.years[start:stop], self.weeks[start:stop], self.hdi[start:stop],
            self.si[start:stop], self.hdi_sqrt[start:stop],
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "year": self.years, "week": self.weeks, "hdi": self.hdi,
            "si": self.si, "hdi_sqrt": self.hdi_sqrt,
        }, columns=INDEX_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "IndexSeries":
        hdi = frame["hdi"].to_numpy(dtype=float)
        return cls(
            frame["year"].to_numpy(dtype=int), frame["week"].to_numpy(dtype=int),
            hdi, frame["si"].to_numpy(dtype=float), np.sqrt(hdi),
        )


def compute_indices(series: WeeklySeries) -> IndexSeries:
    """
    Computes HDI, SI and sqrt(HDI) for every week of a weekly series.

    Raises:
        IndexComputationError: If any week has no properties on the market.
    """
    on_market = series.on_market
    empty = np.flatnonzero(on_market <= 0)
    if empty.size:
        rec = series.records[int(empty[0])]
        raise IndexComputationError(
            f"Undefined index for {rec.year} week {rec.week:02d}: on_market is 0.",
            year=rec.year, week=rec.week,
        )
    hdi = series.sold / on_market
    si = series.showings / on_market
    return IndexSeries(series.years, series.weeks, hdi, si, np.sqrt(hdi))


def inverse_transform(hdi_sqrt_value: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Maps a sqrt(HDI) value (or array) back to the HDI scale."""
    values = np.asarray(hdi_sqrt_value, dtype=float)
    if np.any(values < 0) or np.any(np.isnan(values)):
        raise IndexComputationError(f"Invalid transformed value: {hdi_sqrt_value!r} must be >= 0.")
    result = values * values
    return float(result) if result.ndim == 0 else result


def price_elasticity(dq_over_q: float, dp_over_p: float) -> float:
    """Elasticity of demand (dQ/Q) / (dP/P)."""
    if dp_over_p == 0:
        raise IndexComputationError("Invalid price change: dP/P must be non-zero.")
    return dq_over_q / dp_over_p


def write_index_csv(idx: IndexSeries, path) -> None:
    text = idx.to_frame().to_csv(index=False, float_format="%.10g", lineterminator="\n")
    atomic_write_text(path, text)


def read_index_csv(path) -> IndexSeries:
    return IndexSeries.from_frame(pd.read_csv(path))

"""
Seeded synthetic market corpora.

Weekly showings follow a trend and an annual cycle peaking in late summer.
Sales are a lagged, noisy fraction of past showings (a conversion kernel
peaking at lag 10) and the stock of homes on the market follows its own
annual cycle around a bounded random walk. Individual listings are then
simulated so the corpus can be emitted as dated property events whose
weekly aggregate equals the generated series exactly.
"""
import logging
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, Iterator, List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .ingest import (
    EVENT_COLUMNS, WEEKS_PER_YEAR, EventKind, PropertyClass, PropertyEvent, WeekCalendar,
    WeeklyRecord, WeeklySeries, dom_stats, write_events_csv, write_weekly_csv,
)
from .io_utils import write_json

logger = logging.getLogger(__name__)

DEFAULT_CONVERSION_LAGS = {9: 0.25, 10: 0.5, 11: 0.25}
SALE_AGE_SCALE_DAYS = 45.0
OPENING_STOCK_MAX_AGE_DAYS = 180
DELIST_RATE = 0.02


class SynthParams(BaseModel):
    """Generator settings; every output is a pure function of these values."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 0
    n_weeks: int = Field(156, ge=1)
    start_year: int = Field(2011, ge=1900, le=9000)
    showings_base: float = Field(12000.0, gt=0)
    trend_slope: float = 0.001
    seasonal_amplitude: float = Field(0.5, ge=0, lt=1)
    peak_week: int = Field(34, ge=1, le=WEEKS_PER_YEAR)
    conversion_lags: Dict[int, float] = Field(default_factory=lambda: dict(DEFAULT_CONVERSION_LAGS))
    conversion_rate: float = Field(0.006, gt=0, le=1)
    noise_sd: float = Field(0.2, ge=0)
    sold_noise_sd: float = Field(0.15, ge=0)
    on_market_base: float = Field(16000.0, gt=0)
    on_market_amplitude: float = Field(0.33, ge=0, lt=1)
    on_market_peak_week: int = Field(44, ge=1, le=WEEKS_PER_YEAR)
    on_market_step_sd: float = Field(0.005, ge=0)
    on_market_band: float = Field(0.05, ge=0, lt=1)

    @field_validator("conversion_lags")
    @classmethod
    def _valid_kernel(cls, lags: Dict[int, float]) -> Dict[int, float]:
        if not lags:
            raise ValueError("conversion_lags must not be empty")
        if min(lags) < 1:
            raise ValueError(f"conversion lags must be >= 1, got {sorted(lags)}")
        if min(lags.values()) < 0:
            raise ValueError("conversion weights must be non-negative")
        if sum(lags.values()) > 1.0 + 1e-12:
            raise ValueError(f"conversion weights sum to {sum(lags.values())}, must be <= 1")
        return dict(sorted(lags.items()))

    @model_validator(mode="after")
    def _positive_trend(self) -> "SynthParams":
        max_lag = max(self.conversion_lags)
        if min(1.0 - self.trend_slope * max_lag, 1.0 + self.trend_slope * (self.n_weeks - 1)) <= 0:
            raise ValueError(f"trend_slope {self.trend_slope} makes showings non-positive within the corpus")
        return self

    @property
    def max_lag(self) -> int:
        return max(self.conversion_lags)


@dataclass(frozen=True)
class SynthTruth:
    """Components behind a generated series, one value per week."""

    trend: np.ndarray
    seasonal: np.ndarray
    showings_expected: np.ndarray
    sold_expected: np.ndarray
    on_market_seasonal: np.ndarray
    on_market_walk: np.ndarray
    kernel: Dict[int, float]

    def to_dict(self) -> dict:
        return {
            "trend": self.trend.tolist(),
            "seasonal": self.seasonal.tolist(),
            "showings_expected": self.showings_expected.tolist(),
            "sold_expected": self.sold_expected.tolist(),
            "on_market_seasonal": self.on_market_seasonal.tolist(),
            "on_market_walk": self.on_market_walk.tolist(),
            "kernel": {str(lag): weight for lag, weight in self.kernel.items()},
        }


def _streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for weekly counts, listings and showing events."""
    counts, listings, showings = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(counts), np.random.default_rng(listings), np.random.default_rng(showings)


def _cycle(position: np.ndarray, peak: int) -> np.ndarray:
    return np.cos(2.0 * np.pi * (position - peak) / WEEKS_PER_YEAR)


def _weekly_counts(params: SynthParams, rng: np.random.Generator):
    n, max_lag = params.n_weeks, params.max_lag
    # positions 1..n are the corpus weeks; the max_lag weeks before feed the first sales
    position = np.arange(1 - max_lag, n + 1, dtype=float)
    trend = 1.0 + params.trend_slope * (position - 1.0)
    seasonal = 1.0 + params.seasonal_amplitude * _cycle(position, params.peak_week)
    expected = params.showings_base * trend * seasonal
    showings = np.round(expected * np.exp(params.noise_sd * rng.standard_normal(len(position))))

    sold_expected = np.zeros(n)
    for lag, weight in params.conversion_lags.items():
        sold_expected += weight * showings[max_lag - lag:max_lag - lag + n]
    sold_expected *= params.conversion_rate
    sold = np.maximum(np.round(sold_expected * np.exp(params.sold_noise_sd * rng.standard_normal(n))), 0.0)

    walk = np.zeros(n)
    steps = params.on_market_step_sd * rng.standard_normal(n)
    for t in range(1, n):
        walk[t] = np.clip(walk[t - 1] + steps[t], -params.on_market_band, params.on_market_band)
    om_seasonal = 1.0 + params.on_market_amplitude * _cycle(position[max_lag:], params.on_market_peak_week)
    on_market = np.maximum(np.round(params.on_market_base * om_seasonal * (1.0 + walk)), 1.0)
    sold = np.minimum(sold, on_market)

    truth = SynthTruth(
        trend=trend[max_lag:], seasonal=seasonal[max_lag:], showings_expected=expected[max_lag:],
        sold_expected=sold_expected, on_market_seasonal=om_seasonal, on_market_walk=walk,
        kernel=dict(params.conversion_lags),
    )
    return showings[max_lag:].astype(np.int64), sold.astype(np.int64), on_market.astype(np.int64), truth


@dataclass
class _ListingBook:
    """Lifecycle of every simulated listing; days are offsets from the calendar start."""

    listed_day: np.ndarray
    dom_origin: np.ndarray
    close_day: np.ndarray  # -1 while still on the market at the end
    close_kind: np.ndarray  # 0 open, 1 sold, 2 delisted
    close_week: np.ndarray
    active_by_week: List[np.ndarray]


def _week_days(calendar: WeekCalendar) -> List[Tuple[int, int]]:
    spans = []
    for year, week in calendar.weeks():
        first, last = WeekCalendar.week_range(year, week)
        spans.append(((first - calendar.start).days, (last - calendar.start).days))
    return spans


def _simulate_listings(sold: np.ndarray, on_market: np.ndarray, spans, rng: np.random.Generator) -> _ListingBook:
    """
    Opens and closes listings so that exactly on_market[t] listings are active
    in week t and sold[t] of them sell that week. Younger listings sell more
    readily; delistings are drawn uniformly from the rest.
    """
    n = len(sold)
    # every listing is either opening stock or replaces a closed one
    capacity = int(on_market[0] + on_market.sum())
    listed_day = np.zeros(capacity, dtype=np.int64)
    dom_origin = np.zeros(capacity, dtype=np.int64)
    close_day = np.full(capacity, -1, dtype=np.int64)
    close_kind = np.zeros(capacity, dtype=np.int8)
    close_week = np.full(capacity, -1, dtype=np.int64)
    active = np.zeros(0, dtype=np.int64)
    active_by_week = []
    next_id = 0

    for t in range(n):
        first, last = spans[t]
        new = int(on_market[t]) - len(active)
        ids = np.arange(next_id, next_id + new)
        next_id += new
        listed_day[ids] = rng.integers(first, last + 1, size=new)
        dom_origin[ids] = listed_day[ids]
        if t == 0:
            dom_origin[ids] -= rng.integers(0, OPENING_STOCK_MAX_AGE_DAYS + 1, size=new)
        active = np.concatenate([active, ids])
        active_by_week.append(active)

        age = np.maximum((first + last) / 2.0 - dom_origin[active], 0.0)
        weights = np.exp(-age / SALE_AGE_SCALE_DAYS)
        pick = rng.choice(len(active), size=int(sold[t]), replace=False, p=weights / weights.sum())
        rest = np.delete(active, pick)
        needed = len(rest) - int(on_market[t + 1]) if t + 1 < n else 0
        n_delist = min(len(rest), max(needed, int(round(DELIST_RATE * len(rest)))))
        drop = rng.choice(len(rest), size=n_delist, replace=False)

        for kind, closing in ((1, active[pick]), (2, rest[drop])):
            drawn = rng.integers(first, last + 1, size=len(closing))
            close_day[closing] = np.maximum(drawn, listed_day[closing])
            close_kind[closing] = kind
            close_week[closing] = t
        active = np.delete(rest, drop)

    return _ListingBook(
        listed_day[:next_id], dom_origin[:next_id], close_day[:next_id],
        close_kind[:next_id], close_week[:next_id], active_by_week,
    )


def _weekly_series(calendar: WeekCalendar, showings, sold, on_market, book: _ListingBook) -> WeeklySeries:
    sold_mask = book.close_kind == 1
    doms = book.close_day[sold_mask] - book.dom_origin[sold_mask]
    weeks_of_sale = book.close_week[sold_mask]
    records = []
    for t, (year, week) in enumerate(calendar.weeks()):
        median_dom, mean_dom, missing = dom_stats(doms[weeks_of_sale == t])
        records.append(WeeklyRecord(
            year=year, week=week, showings=int(showings[t]), sold=int(sold[t]),
            on_market=int(on_market[t]), median_dom=median_dom, mean_dom=mean_dom,
            dom_missing=missing,
        ))
    return WeeklySeries(tuple(records))


def _generate(params: SynthParams, with_events: bool):
    counts_rng, listing_rng, showing_rng = _streams(params.seed)
    calendar = WeekCalendar.for_years(params.start_year, params.n_weeks)
    spans = _week_days(calendar)
    showings, sold, on_market, truth = _weekly_counts(params, counts_rng)
    book = _simulate_listings(sold, on_market, spans, listing_rng)
    weekly = _weekly_series(calendar, showings, sold, on_market, book)
    frame = _event_frame(calendar, spans, showings, book, showing_rng) if with_events else None
    return weekly, truth, calendar, frame


def generate_weekly(params: SynthParams) -> Tuple[WeeklySeries, SynthTruth]:
    """Weekly series and its ground-truth components."""
    weekly, truth, _, _ = _generate(params, with_events=False)
    logger.info("Generated %d synthetic weeks (seed %d)", len(weekly), params.seed)
    return weekly, truth


# --- Events ---

_KIND_NAMES = np.array([EventKind.LISTED.value, EventKind.SHOWING.value, EventKind.SOLD.value, EventKind.DELISTED.value])
_LISTED, _SHOWING, _SOLD, _DELISTED = range(4)


def _event_frame(calendar: WeekCalendar, spans, showings: np.ndarray, book: _ListingBook,
                 rng: np.random.Generator) -> pd.DataFrame:
    n_listings = len(book.listed_day)
    ids = [np.arange(n_listings)]
    days = [book.listed_day]
    kinds = [np.full(n_listings, _LISTED)]
    doms = [np.full(n_listings, -1)]

    for t, (first, last) in enumerate(spans):
        active = book.active_by_week[t]
        count = int(showings[t])
        ids.append(active[rng.integers(0, len(active), size=count)])
        days.append(rng.integers(first, last + 1, size=count))
        kinds.append(np.full(count, _SHOWING))
        doms.append(np.full(count, -1))

    closed = np.flatnonzero(book.close_kind > 0)
    ids.append(closed)
    days.append(book.close_day[closed])
    kinds.append(np.where(book.close_kind[closed] == 1, _SOLD, _DELISTED))
    doms.append(np.where(book.close_kind[closed] == 1, book.close_day[closed] - book.dom_origin[closed], -1))

    ids, days, kinds, doms = (np.concatenate(part) for part in (ids, days, kinds, doms))
    order = np.lexsort((ids, kinds, days))
    ids, days, kinds, doms = ids[order], days[order], kinds[order], doms[order]

    n_days = (calendar.end - calendar.start).days + 1
    date_text = np.array([(calendar.start + timedelta(days=d)).isoformat() for d in range(n_days)])
    width = max(6, len(str(n_listings)))
    listing_text = np.char.add("L", np.char.zfill(ids.astype(str), width))
    dom_text = np.where(doms >= 0, doms.astype(str), "")
    return pd.DataFrame({
        "listing_id": listing_text,
        "event_kind": _KIND_NAMES[kinds],
        "date": date_text[days],
        "property_class": PropertyClass.RESIDENTIAL.value,
        "days_on_market": dom_text,
    }, columns=EVENT_COLUMNS)


@dataclass(frozen=True)
class EventCorpus:
    """Dated property events together with the weekly series they aggregate to."""

    frame: pd.DataFrame
    weekly: WeeklySeries
    truth: SynthTruth
    calendar: WeekCalendar
    params: SynthParams

    def __len__(self) -> int:
        return len(self.frame)

    def events(self) -> Iterator[PropertyEvent]:
        for listing_id, kind, day, prop_class, dom in self.frame.itertuples(index=False, name=None):
            yield PropertyEvent(
                listing_id, EventKind(kind), date.fromisoformat(day), PropertyClass(prop_class),
                int(dom) if dom else None,
            )

    def counts(self) -> Dict[str, int]:
        return {kind: int(count) for kind, count in self.frame["event_kind"].value_counts().sort_index().items()}


def generate_events(params: SynthParams) -> EventCorpus:
    """
    Expands the weekly series of ``generate_weekly(params)`` into listing,
    showing, sale and delisting events.

    Aggregating the events over the corpus calendar reproduces the weekly
    series field for field; events are ordered by date, kind and listing.
    """
    weekly, truth, calendar, frame = _generate(params, with_events=True)
    logger.info("Generated %d synthetic events over %d weeks (seed %d)", len(frame), len(weekly), params.seed)
    return EventCorpus(frame, weekly, truth, calendar, params)


def write_corpus(corpus: EventCorpus, out_dir) -> Dict[str, Path]:
    """Writes events.csv, weekly.csv and truth.json (components and params) into out_dir."""
    out = Path(out_dir)
    paths = {"events": out / "events.csv", "weekly": out / "weekly.csv", "truth": out / "truth.json"}
    write_events_csv(corpus.frame, paths["events"])
    write_weekly_csv(corpus.weekly, paths["weekly"])
    write_json(paths["truth"], {
        "params": corpus.params.model_dump(mode="json"),
        "calendar": {"start": corpus.calendar.start.isoformat(), "end": corpus.calendar.end.isoformat()},
        "components": corpus.truth.to_dict(),
        "event_counts": corpus.counts(),
    })
    logger.info("Wrote synthetic corpus to %s", out)
    return paths

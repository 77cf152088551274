"""
Raw property-event ingestion and weekly aggregation.

Events arrive as a CSV with the header
``listing_id,event_kind,date,property_class,days_on_market``. They are parsed
into ``PropertyEvent`` values, filtered to residential showings and listing
lifecycle events, and reduced to a ``WeeklySeries`` on a fixed 52-week
calendar (week 1 starts on January 1; the trailing 1-2 days of a year fold
into week 52).
"""
import io
import logging
import re
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from typing import BinaryIO, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .errors import AggregationError, IngestError
from .io_utils import atomic_write_text

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ["listing_id", "event_kind", "date", "property_class", "days_on_market"]
WEEKLY_COLUMNS = ["year", "week", "showings", "sold", "on_market", "median_dom", "mean_dom", "dom_missing"]
WEEKS_PER_YEAR = 52
WEEKLY_FIELD_TYPES = {
    "year": int, "week": int, "showings": int, "sold": int, "on_market": int,
    "median_dom": float, "mean_dom": float,
}


class EventKind(str, Enum):
    SHOWING = "showing"
    INSPECTION = "inspection"
    OPEN_HOUSE = "open_house"
    LISTED = "listed"
    DELISTED = "delisted"
    SOLD = "sold"
    OTHER = "other"


class PropertyClass(str, Enum):
    RESIDENTIAL = "residential"
    RENTAL = "rental"
    RETAIL = "retail"
    BUNDLE = "bundle"


KEPT_KINDS = frozenset({EventKind.SHOWING, EventKind.LISTED, EventKind.DELISTED, EventKind.SOLD})
# same-day ordering of lifecycle events for one listing
_LIFECYCLE_RANK = {EventKind.LISTED: 0, EventKind.SOLD: 1, EventKind.DELISTED: 2}


@dataclass(frozen=True)
class PropertyEvent:
    listing_id: str
    event_kind: EventKind
    date: date
    property_class: PropertyClass
    days_on_market: Optional[int] = None


@dataclass(frozen=True)
class WeeklyRecord:
    year: int
    week: int
    showings: int
    sold: int
    on_market: int
    median_dom: float
    mean_dom: float
    dom_missing: bool = False

    def __post_init__(self):
        if not 1 <= self.week <= WEEKS_PER_YEAR:
            raise AggregationError(f"Invalid week: {self.week} is outside 1..{WEEKS_PER_YEAR}.")
        if min(self.showings, self.sold, self.on_market) < 0:
            raise AggregationError(f"Invalid counts in {self.year} week {self.week:02d}: counts must be >= 0.")
        if self.sold > self.on_market:
            raise AggregationError(
                f"Corrupt input in {self.year} week {self.week:02d}: "
                f"sold ({self.sold}) exceeds on_market ({self.on_market})."
            )


def next_week(year: int, week: int) -> Tuple[int, int]:
    """Returns the (year, week) following the given one, rolling 52 -> 1."""
    if week == WEEKS_PER_YEAR:
        return year + 1, 1
    return year, week + 1


@dataclass(frozen=True)
class WeeklySeries:
    """Contiguous weekly market records."""

    records: Tuple[WeeklyRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise AggregationError("A weekly series must contain at least one week.")
        for prev, cur in zip(self.records, self.records[1:]):
            if next_week(prev.year, prev.week) != (cur.year, cur.week):
                raise AggregationError(
                    f"Weeks are not consecutive: {prev.year} week {prev.week:02d} "
                    f"is followed by {cur.year} week {cur.week:02d}."
                )

    def __len__(self) -> int:
        return len(self.records)

    def _column(self, name: str, dtype=float) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=dtype)

    @property
    def showings(self) -> np.ndarray:
        return self._column("showings")

    @property
    def sold(self) -> np.ndarray:
        return self._column("sold")

    @property
    def on_market(self) -> np.ndarray:
        return self._column("on_market")

    @property
    def median_dom(self) -> np.ndarray:
        return self._column("median_dom")

    @property
    def mean_dom(self) -> np.ndarray:
        return self._column("mean_dom")

    @property
    def weeks(self) -> np.ndarray:
        return self._column("week", dtype=int)

    @property
    def years(self) -> np.ndarray:
        return self._column("year", dtype=int)

    def slice(self, start: int, stop: Optional[int] = None) -> "WeeklySeries":
        return WeeklySeries(self.records[start:stop])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([r.__dict__ for r in self.records], columns=WEEKLY_COLUMNS)
        frame["dom_missing"] = frame["dom_missing"].astype(int)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "WeeklySeries":
        missing = [c for c in WEEKLY_COLUMNS[:7] if c not in frame.columns]
        if missing:
            raise AggregationError(f"Weekly table is missing columns: {missing}")
        dom_missing = frame["dom_missing"] if "dom_missing" in frame.columns else frame["sold"] == 0
        records = []
        for row_no, (row, flag) in enumerate(zip(frame.to_dict("records"), dom_missing), start=1):
            values = {}
            for name, convert in WEEKLY_FIELD_TYPES.items():
                try:
                    values[name] = convert(row[name])
                except (TypeError, ValueError):
                    raise IngestError(f"Invalid value {row[name]!r}.", row=row_no, field=name)
            records.append(WeeklyRecord(**values, dom_missing=bool(flag)))
        return cls(tuple(records))


@dataclass(frozen=True)
class WeekCalendar:
    """
    Fixed 52-week calendar over an inclusive corpus date range.

    Week boundaries start on January 1 and advance in 7-day blocks; days past
    the end of week 52 (Dec 24 onwards in a common year) belong to week 52.
    """

    start: date
    end: date

    def __post_init__(self):
        if self.end < self.start:
            raise AggregationError(f"Invalid calendar: end {self.end} precedes start {self.start}.")

    @staticmethod
    def week_of(day: date) -> Tuple[int, int]:
        week = (day.timetuple().tm_yday - 1) // 7 + 1
        return day.year, min(week, WEEKS_PER_YEAR)

    @staticmethod
    def week_range(year: int, week: int) -> Tuple[date, date]:
        if not 1 <= week <= WEEKS_PER_YEAR:
            raise AggregationError(f"Invalid week: {week} is outside 1..{WEEKS_PER_YEAR}.")
        first = date(year, 1, 1) + timedelta(days=7 * (week - 1))
        last = date(year, 12, 31) if week == WEEKS_PER_YEAR else first + timedelta(days=6)
        return first, last

    @staticmethod
    def week_position(year: int, week: int) -> int:
        """Absolute week counter, consecutive across year boundaries."""
        return year * WEEKS_PER_YEAR + (week - 1)

    def weeks(self) -> List[Tuple[int, int]]:
        first = self.week_of(self.start)
        last = self.week_of(self.end)
        out = [first]
        while out[-1] != last:
            out.append(next_week(*out[-1]))
        return out

    def contains(self, day: date) -> bool:
        return self.start <= day <= self.end

    @classmethod
    def spanning(cls, events: Sequence[PropertyEvent]) -> "WeekCalendar":
        if not events:
            raise AggregationError("Cannot derive a calendar from an empty event list.")
        days = [e.date for e in events]
        first_year, first_week = cls.week_of(min(days))
        last_year, last_week = cls.week_of(max(days))
        return cls(cls.week_range(first_year, first_week)[0], cls.week_range(last_year, last_week)[1])

    @classmethod
    def for_years(cls, first_year: int, n_weeks: int) -> "WeekCalendar":
        year, week = first_year, 1
        for _ in range(n_weeks - 1):
            year, week = next_week(year, week)
        return cls(date(first_year, 1, 1), cls.week_range(year, week)[1])


# --- Parsing ---

def _is_blank(value) -> bool:
    return value is None or (isinstance(value, float) and np.isnan(value)) or str(value).strip() == ""


def _parse_rows(rows: List[tuple], offset: int, date_cache: Dict[str, date]) -> List[PropertyEvent]:
    events = []
    for i, (listing_id, kind_raw, date_raw, class_raw, dom_raw) in enumerate(rows):
        row_no = offset + i + 1
        if _is_blank(listing_id):
            raise IngestError("listing_id must not be empty.", row=row_no, field="listing_id")
        if _is_blank(kind_raw):
            raise IngestError("event_kind must not be empty.", row=row_no, field="event_kind")
        try:
            kind = EventKind(str(kind_raw).strip().lower())
        except ValueError:
            kind = EventKind.OTHER

        if _is_blank(date_raw):
            raise IngestError("date must not be empty.", row=row_no, field="date")
        date_str = str(date_raw).strip()
        day = date_cache.get(date_str)
        if day is None:
            try:
                day = date.fromisoformat(date_str)
            except ValueError:
                raise IngestError(f"Invalid date '{date_str}': expected YYYY-MM-DD.", row=row_no, field="date")
            date_cache[date_str] = day

        try:
            prop_class = PropertyClass(str(class_raw).strip().lower())
        except ValueError:
            raise IngestError(f"Unknown property_class '{class_raw}'.", row=row_no, field="property_class")

        dom = None
        if not _is_blank(dom_raw):
            dom_str = str(dom_raw).strip()
            if not dom_str.isdigit():
                raise IngestError(
                    f"Invalid days_on_market '{dom_str}': must be a non-negative integer.",
                    row=row_no, field="days_on_market",
                )
            dom = int(dom_str)
        if kind is EventKind.SOLD and dom is None:
            raise IngestError("sold events require days_on_market.", row=row_no, field="days_on_market")
        if kind is not EventKind.SOLD and dom is not None:
            raise IngestError("days_on_market is only allowed on sold events.", row=row_no, field="days_on_market")

        events.append(PropertyEvent(str(listing_id).strip(), kind, day, prop_class, dom))
    return events


def parse_events(
    source: Union[BinaryIO, bytes],
    chunk_size: int = 200_000,
    n_jobs: int = 1,
) -> List[PropertyEvent]:
    """
    Parses an event CSV byte stream into property events.

    Args:
        source: UTF-8 CSV bytes (or a binary file object) with the event header.
        chunk_size: Rows validated per chunk; chunks may be validated in parallel.
        n_jobs: Worker threads for chunk validation.

    Returns:
        List[PropertyEvent]: One event per data row, input order preserved.

    Raises:
        IngestError: On a bad header or the first malformed row (1-based data row number).
    """
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        row = int(match.group(1)) - 1 if match else None
        raise IngestError(f"Malformed CSV: {exc}", row=row)
    except pd.errors.EmptyDataError:
        raise IngestError("Event CSV is empty; expected a header row.")
    except UnicodeDecodeError as exc:
        raise IngestError(f"Event CSV is not valid UTF-8: {exc}")

    if list(frame.columns) != EVENT_COLUMNS:
        raise IngestError(f"Invalid header {list(frame.columns)}: expected {EVENT_COLUMNS}.")

    rows = list(frame.itertuples(index=False, name=None))
    chunks = [(start, rows[start:start + chunk_size]) for start in range(0, len(rows), chunk_size)]
    if n_jobs == 1 or len(chunks) <= 1:
        cache: Dict[str, date] = {}
        parsed = [_parse_rows(chunk, start, cache) for start, chunk in chunks]
    else:
        parsed = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_parse_rows)(chunk, start, {}) for start, chunk in chunks
        )
    events = [event for chunk in parsed for event in chunk]
    logger.info("Parsed %d events", len(events))
    return events


def filter_events(events: Iterable[PropertyEvent]) -> List[PropertyEvent]:
    """Keeps residential showings and listing lifecycle events (listed, delisted, sold)."""
    return [
        e for e in events
        if e.property_class is PropertyClass.RESIDENTIAL and e.event_kind in KEPT_KINDS
    ]


# --- Aggregation ---

def dom_stats(values: Sequence[float]) -> Tuple[float, float, bool]:
    """Returns (median, mean, missing) of a week's days-on-market values; zeros when empty."""
    if len(values) == 0:
        return 0.0, 0.0, True
    ordered = np.sort(np.asarray(values, dtype=float))
    return float(np.median(ordered)), float(np.mean(ordered)), False


def _merge_intervals(intervals: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
    """Unions inclusive week intervals; intervals sharing a week are joined."""
    merged: List[Tuple[int, int]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def aggregate_weekly(
    events: Sequence[PropertyEvent],
    calendar: Optional[WeekCalendar] = None,
) -> WeeklySeries:
    """
    Aggregates filtered events into a weekly market series.

    on_market counts listings whose active interval (listed .. first of
    delisted/sold) overlaps the week; a listing sold and relisted later has two
    intervals, and is counted once in a week both of them touch. Intervals
    still open at the end of the calendar stay active.

    Raises:
        AggregationError: On events outside the calendar, sold events without
            days on market, or a week with sold > on_market.
    """
    events = list(events)
    if calendar is None:
        calendar = WeekCalendar.spanning(events)
    week_list = calendar.weeks()
    n = len(week_list)
    base = WeekCalendar.week_position(*week_list[0])

    showings = np.zeros(n, dtype=np.int64)
    sold = np.zeros(n, dtype=np.int64)
    active_delta = np.zeros(n + 1, dtype=np.int64)
    doms: List[List[int]] = [[] for _ in range(n)]
    lifecycle: Dict[str, List[Tuple[date, int, int]]] = {}

    for e in events:
        if not calendar.contains(e.date):
            raise AggregationError(f"Event dated {e.date} for listing {e.listing_id} is outside the calendar range.")
        idx = WeekCalendar.week_position(*WeekCalendar.week_of(e.date)) - base
        kind = e.event_kind
        if kind is EventKind.SHOWING:
            showings[idx] += 1
        elif kind in _LIFECYCLE_RANK:
            if kind is EventKind.SOLD:
                if e.days_on_market is None:
                    raise AggregationError(f"Sold event for listing {e.listing_id} on {e.date} lacks days_on_market.")
                sold[idx] += 1
                doms[idx].append(e.days_on_market)
            lifecycle.setdefault(e.listing_id, []).append((e.date, _LIFECYCLE_RANK[kind], idx))

    for listing_id in sorted(lifecycle):
        intervals: List[Tuple[int, int]] = []
        open_at: Optional[int] = None
        for _, rank, idx in sorted(lifecycle[listing_id]):
            if rank == 0:
                if open_at is None:
                    open_at = idx
                continue
            # a close without a prior listing is treated as a one-week interval
            intervals.append((idx if open_at is None else open_at, idx))
            open_at = None
        if open_at is not None:
            intervals.append((open_at, n - 1))
        # a listing closed and relisted within one week is on the market once that week
        for start, end in _merge_intervals(intervals):
            active_delta[start] += 1
            active_delta[end + 1] -= 1

    on_market = np.cumsum(active_delta[:n])
    records = []
    for i, (year, week) in enumerate(week_list):
        median_dom, mean_dom, missing = dom_stats(doms[i])
        records.append(WeeklyRecord(
            year=year, week=week, showings=int(showings[i]), sold=int(sold[i]),
            on_market=int(on_market[i]), median_dom=median_dom, mean_dom=mean_dom,
            dom_missing=missing,
        ))
    logger.info("Aggregated %d events into %d weeks", len(events), n)
    return WeeklySeries(tuple(records))


# --- CSV files ---

def events_to_frame(events: Iterable[PropertyEvent]) -> pd.DataFrame:
    rows = [
        (e.listing_id, e.event_kind.value, e.date.isoformat(), e.property_class.value,
         "" if e.days_on_market is None else str(e.days_on_market))
        for e in events
    ]
    return pd.DataFrame(rows, columns=EVENT_COLUMNS)


def write_events_csv(events: Union[Iterable[PropertyEvent], pd.DataFrame], path) -> None:
    frame = events if isinstance(events, pd.DataFrame) else events_to_frame(events)
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))


def read_events_csv(path, n_jobs: int = 1) -> List[PropertyEvent]:
    with open(path, "rb") as handle:
        return parse_events(handle, n_jobs=n_jobs)


def write_weekly_csv(series: WeeklySeries, path) -> None:
    text = series.to_frame().to_csv(index=False, float_format="%.10g", lineterminator="\n")
    atomic_write_text(path, text)


def read_weekly_csv(path) -> WeeklySeries:
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise IngestError(f"Weekly CSV {path} is empty; expected a header row.")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestError(f"Malformed weekly CSV {path}: {exc}")
    return WeeklySeries.from_frame(frame)

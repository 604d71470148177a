"""Loading and alignment of raw daily price files.

Builds a unified trading calendar from per-ticker CSV files, drops tickers
with quote gaps longer than two consecutive trading days, and materializes
the survivors onto an aligned price grid. Missing days are kept as
unquoted flags; they are resolved later by the returns module, not by
carrying prices forward here.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .errors import DataError

MAX_GAP_DAYS = 2


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered set of days on which at least one instrument traded."""

    dates: tuple[date, ...]

    def __post_init__(self):
        if not self.dates:
            raise DataError("calendar is empty")
        for a, b in zip(self.dates, self.dates[1:]):
            if a >= b:
                raise DataError(f"calendar dates not strictly increasing: {a} >= {b}")

    def __len__(self):
        return len(self.dates)


@dataclass
class RawQuoteSeries:
    """Daily adjusted-close series for one ticker, as parsed from disk."""

    ticker: str
    dates: list[date]
    prices: np.ndarray
    skipped_rows: list[str] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.dates, self.dates[1:]):
            if a >= b:
                raise DataError(f"{self.ticker}: non-monotone dates ({a} then {b})")
        if len(self.prices) and np.min(self.prices) <= 0:
            raise DataError(f"{self.ticker}: non-positive price")


@dataclass
class PriceTable:
    """Aligned N x T price grid over a shared calendar.

    ``quoted[i, t]`` is False on calendar days where ticker i had no quote;
    ``prices`` holds NaN there. The reference index row is quoted on every
    calendar day by construction.
    """

    calendar: TradingCalendar
    tickers: tuple[str, ...]
    index_ticker: str
    prices: np.ndarray
    quoted: np.ndarray
    exclusions: dict[str, str] = field(default_factory=dict)


def load_quotes(path, ticker=None) -> RawQuoteSeries:
    """Parse one ticker CSV (Date, Adj Close; extra columns ignored).

    Rows whose price cannot be parsed are skipped with a diagnostic and the
    day stays unquoted. The ticker id defaults to the filename stem.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"price file not found: {path}")
    if ticker is None:
        ticker = path.stem

    dates: list[date] = []
    prices: list[float] = []
    skipped: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "Date" not in cols or "Adj Close" not in cols:
            raise DataError(f"{path}: missing required column (need Date, Adj Close)")
        for lineno, row in enumerate(reader, start=2):
            raw_date = (row.get("Date") or "").strip()
            raw_price = (row.get("Adj Close") or "").strip()
            try:
                day = date.fromisoformat(raw_date)
            except ValueError:
                skipped.append(f"line {lineno}: bad date {raw_date!r}")
                continue
            try:
                price = float(raw_price)
            except ValueError:
                skipped.append(f"line {lineno}: unparseable price {raw_price!r}")
                continue
            if math.isnan(price):
                skipped.append(f"line {lineno}: NaN price")
                continue
            dates.append(day)
            prices.append(price)

    return RawQuoteSeries(ticker, dates, np.asarray(prices, dtype=float), skipped)


def build_calendar(series_set, horizon) -> TradingCalendar:
    """Union of all quote dates clipped to [start, end], sorted ascending."""
    start, end = horizon
    if start >= end:
        raise DataError(f"horizon start {start} not before end {end}")
    if not series_set:
        raise DataError("no quote series given")
    days = set()
    for series in series_set:
        days.update(d for d in series.dates if start <= d <= end)
    if not days:
        raise DataError("no trading days in horizon")
    return TradingCalendar(tuple(sorted(days)))


def _max_unquoted_run(quoted_row) -> int:
    worst = run = 0
    for q in quoted_row:
        if q:
            run = 0
        else:
            run += 1
            worst = max(worst, run)
    return worst


def filter_universe(series_set, calendar: TradingCalendar, index_ticker: str) -> PriceTable:
    """Keep tickers quoted on the horizon edges with no gap longer than 2 days.

    The index ticker must be quoted on every calendar day. Excluded tickers
    are recorded with a reason. Rows are ordered lexicographically by ticker
    so that the result does not depend on load order.
    """
    date_index = {d: t for t, d in enumerate(calendar.dates)}
    T = len(calendar)
    by_ticker = {s.ticker: s for s in sorted(series_set, key=lambda s: s.ticker)}
    if index_ticker not in by_ticker:
        raise DataError(f"index ticker {index_ticker!r} not in input set")

    kept: list[str] = []
    rows: list[np.ndarray] = []
    flags: list[np.ndarray] = []
    exclusions: dict[str, str] = {}

    for ticker, series in by_ticker.items():
        price_row = np.full(T, np.nan)
        quoted_row = np.zeros(T, dtype=bool)
        for day, price in zip(series.dates, series.prices):
            t = date_index.get(day)
            if t is not None:
                price_row[t] = price
                quoted_row[t] = True

        if not quoted_row[0]:
            exclusions[ticker] = "not quoted on first horizon day"
        elif not quoted_row[-1]:
            exclusions[ticker] = "not quoted on last horizon day"
        else:
            gap = _max_unquoted_run(quoted_row)
            if gap > MAX_GAP_DAYS:
                exclusions[ticker] = f"gap of {gap} consecutive unquoted days"
            else:
                kept.append(ticker)
                rows.append(price_row)
                flags.append(quoted_row)

    if index_ticker in exclusions:
        raise DataError(
            f"index ticker {index_ticker!r} excluded: {exclusions[index_ticker]}"
        )
    idx = kept.index(index_ticker)
    if not flags[idx].all():
        raise DataError(f"index ticker {index_ticker!r} has unquoted calendar days")
    if not kept:
        raise DataError("no tickers survive the gap filter")

    return PriceTable(
        calendar=calendar,
        tickers=tuple(kept),
        index_ticker=index_ticker,
        prices=np.vstack(rows),
        quoted=np.vstack(flags),
        exclusions=exclusions,
    )


def load_universe(data_dir, index_ticker: str, horizon) -> PriceTable:
    """Load every ``*.csv`` in ``data_dir`` and build an aligned PriceTable."""
    data_dir = Path(data_dir)
    files = sorted(data_dir.glob("*.csv"))
    if not files:
        raise DataError(f"no CSV files in {data_dir}")
    series_set = [load_quotes(f) for f in files]
    calendar = build_calendar(series_set, horizon)
    return filter_universe(series_set, calendar, index_ticker)


def write_ingest_manifest(table: PriceTable, path) -> None:
    """Write the calendar, retained and excluded tickers as JSON."""
    manifest = {
        "calendar": [d.isoformat() for d in table.calendar.dates],
        "index_ticker": table.index_ticker,
        "tickers": list(table.tickers),
        "excluded": table.exclusions,
    }
    Path(path).write_text(json.dumps(manifest, indent=2))

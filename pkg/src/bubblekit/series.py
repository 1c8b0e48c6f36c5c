"""Dated OHLC price series on a trading calendar.

The analysis time axis is the trading-day ordinal (0, 1, 2, ...) of each
row, not calendar days: gaps over weekends and holidays carry no weight.
"""

from __future__ import annotations

import bisect
import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = ("date", "open", "high", "low", "close")


class CsvFormatError(ValueError):
    """A malformed input row; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Ordered daily OHLC observations.

    Dates must be strictly increasing and every price strictly positive
    (logs are taken downstream). Arrays are read-only after construction.
    """

    dates: tuple
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    _index: dict = field(repr=False, default=None)

    def __post_init__(self):
        n = len(self.dates)
        for name in ("open", "high", "low", "close"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} length {arr.shape} != {n} dates")
            if not np.all(arr > 0.0):
                raise ValueError(f"non-positive {name} price (log undefined)")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        for a, b in zip(self.dates, self.dates[1:]):
            if a >= b:
                raise ValueError(f"dates not strictly increasing at {b}")
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(self.dates)})

    def __len__(self) -> int:
        return len(self.dates)

    def log_close(self) -> np.ndarray:
        return np.log(self.close)

    def ordinal_of(self, day: dt.date, side: str = "exact") -> int:
        """Map a calendar date to its trading-day ordinal.

        side='exact' requires the date to be a trading day; side='right'
        returns the last trading day <= day (used to normalize calendar
        dates that fall on weekends/holidays); side='left' the first >= day.
        """
        if side == "exact":
            try:
                return self._index[day]
            except KeyError:
                raise ValueError(f"{day} is not a trading day of this series") from None
        pos = bisect.bisect_right(self.dates, day)
        if side == "right":
            if pos == 0:
                raise ValueError(f"no trading day on or before {day}")
            return pos - 1
        if side == "left":
            if pos > 0 and self.dates[pos - 1] == day:
                return pos - 1
            if pos == len(self.dates):
                raise ValueError(f"no trading day on or after {day}")
            return pos
        raise ValueError(f"unknown side {side!r}")

    def date_of(self, ordinal: int) -> dt.date:
        if not 0 <= ordinal < len(self.dates):
            raise IndexError(f"ordinal {ordinal} outside series of length {len(self)}")
        return self.dates[ordinal]

    def date_of_real(self, t: float) -> dt.date:
        """Calendar date for a real-valued trading-day ordinal.

        Fractional ordinals round up (the event happens no earlier than the
        next close). Ordinals beyond the loaded calendar are extrapolated
        with Mon-Fri business days; holidays past the data are unknown.
        """
        k = int(np.ceil(t))
        if k < 0:
            raise ValueError(f"ordinal {t} before series start")
        if k < len(self.dates):
            return self.dates[k]
        last = np.datetime64(self.dates[-1], "D")
        out = np.busday_offset(last, k - (len(self.dates) - 1), roll="forward")
        return out.astype(dt.date)

    def slice(self, start: int, stop: int) -> "PriceSeries":
        """Sub-series over ordinals [start, stop], both inclusive."""
        if not (0 <= start < stop < len(self.dates)):
            raise ValueError(f"bad slice [{start}, {stop}] of length {len(self)}")
        sl = np.s_[start : stop + 1]
        return PriceSeries(
            self.dates[sl], self.open[sl].copy(), self.high[sl].copy(),
            self.low[sl].copy(), self.close[sl].copy(),
        )


def load_csv(path) -> PriceSeries:
    """Read `date,open,high,low,close` CSV (ISO dates) into a PriceSeries.

    Raises CsvFormatError naming the offending line for malformed rows,
    duplicated or out-of-order dates, and non-positive prices.
    """
    dates, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(1, "empty file") from None
        if tuple(h.strip().lower() for h in header) != CSV_HEADER:
            raise CsvFormatError(1, f"expected header {','.join(CSV_HEADER)}")
        seen = set()
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 5:
                raise CsvFormatError(line_no, f"expected 5 fields, got {len(row)}")
            try:
                day = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise CsvFormatError(line_no, f"bad ISO date {row[0]!r}") from None
            if day in seen:
                raise CsvFormatError(line_no, f"duplicate date {day}")
            seen.add(day)
            try:
                prices = [float(v) for v in row[1:]]
            except ValueError:
                raise CsvFormatError(line_no, f"non-numeric price in {row[1:]}") from None
            if not all(np.isfinite(prices)):
                raise CsvFormatError(line_no, "non-finite price")
            if any(p <= 0 for p in prices):
                raise CsvFormatError(line_no, "non-positive price (log undefined)")
            dates.append(day)
            rows.append(prices)
    if len(dates) < 2:
        raise CsvFormatError(len(dates) + 1, "need at least 2 rows")
    order = sorted(range(len(dates)), key=lambda i: dates[i])
    dates = tuple(dates[i] for i in order)
    arr = np.array([rows[i] for i in order], dtype=float)
    return PriceSeries(dates, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def save_csv(series: PriceSeries, path) -> None:
    """Write the canonical CSV schema; floats use shortest round-trip repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i, day in enumerate(series.dates):
            writer.writerow(
                [
                    day.isoformat(),
                    repr(float(series.open[i])),
                    repr(float(series.high[i])),
                    repr(float(series.low[i])),
                    repr(float(series.close[i])),
                ]
            )


def fetch_stub(symbol: str, dest) -> None:
    """Placeholder for index data retrieval.

    Historical index files are user-supplied (licensing); this stub only
    documents the expected schema. Point `load_csv` at your own export with
    columns date,open,high,low,close and ISO-8601 dates.
    """
    raise NotImplementedError(
        f"no downloader is bundled; save {symbol} data to {dest} as "
        "date,open,high,low,close CSV and load it with load_csv()"
    )

"""Close-open change-of-regime statistic.

The fraction of trading days with close below open inside a trailing
window jumps when the market flips from a rising to a falling regime;
an abrupt switch shows up as a monotone ramp exactly one window long.
"""

from __future__ import annotations

import csv
import warnings

import numpy as np

DEFAULT_WINDOW_LENGTHS = (10, 20, 30)


def close_open_fraction(series, window_length: int) -> list:
    """Trailing fraction of days with close - open < 0.

    Returns (date, fraction) pairs for every day from ordinal
    window_length - 1 on; days with close == open count as non-negative.
    A series shorter than the window yields an empty result with a warning.
    """
    if window_length < 1:
        raise ValueError("window length must be >= 1")
    n = len(series)
    if n < window_length:
        warnings.warn(
            f"series of length {n} shorter than window {window_length}; no output",
            stacklevel=2,
        )
        return []
    down = (series.close - series.open < 0.0).astype(float)
    counts = np.convolve(down, np.ones(window_length), mode="valid")
    fractions = counts / window_length
    return [
        (series.date_of(i + window_length - 1), float(fractions[i]))
        for i in range(fractions.size)
    ]


def save_fractions(path, pairs) -> None:
    """CSV export (date, fraction) for plotting alongside the index."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "fraction"])
        for day, frac in pairs:
            writer.writerow([day.isoformat(), repr(float(frac))])

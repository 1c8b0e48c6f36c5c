"""Window families, ensemble fitting, and critical-time forecast intervals.

A scan fixes one endpoint of the fit interval and steps the other in
increments of `step` trading days, fits every window, filters the fits by
the bubble condition, and summarizes the surviving critical times as
empirical quantile intervals.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from ._seeds import derive_seed
from .calibrate import SearchSpace, TabooConfig, UnfittableWindowError, fit_window
from .model import WindowSpec

DEFAULT_QUANTILE_LEVELS = (0.05, 0.20, 0.80, 0.95)


class NoForecastError(RuntimeError):
    """No filter-surviving fits: there is nothing to forecast from."""


@dataclass
class ScanResult:
    """Ensemble outcome over one window family.

    fits is aligned with windows (None where the window was unfittable);
    survivors are the converged fits passing the bubble filter; p_lppl is
    |survivors| / |converged fits|. tc_quantiles maps quantile level to a
    calendar date, or is None when there are no survivors.
    """

    windows: list
    fits: list
    failures: dict
    survivors: list
    p_lppl: float
    tc_quantiles: dict | None

    @property
    def n_converged(self) -> int:
        return sum(1 for f in self.fits if f is not None and f.converged)


def gen_shrinking_windows(t1_first: int, t1_last: int, t2_fixed: int, step: int) -> list:
    """Windows [t1, t2_fixed] with t1 stepping from t1_first to t1_last."""
    if step < 1:
        raise ValueError("step must be >= 1 trading day")
    if t1_last >= t2_fixed:
        raise ValueError(f"t1_last={t1_last} must precede t2_fixed={t2_fixed}")
    return [WindowSpec(t1, t2_fixed) for t1 in range(t1_first, t1_last + 1, step)]


def gen_expanding_windows(t1_fixed: int, t2_first: int, t2_last: int, step: int) -> list:
    """Windows [t1_fixed, t2] with t2 stepping from t2_first to t2_last."""
    if step < 1:
        raise ValueError("step must be >= 1 trading day")
    if t2_first <= t1_fixed:
        raise ValueError(f"t2_first={t2_first} must follow t1_fixed={t1_fixed}")
    return [WindowSpec(t1_fixed, t2) for t2 in range(t2_first, t2_last + 1, step)]


def tc_quantile_ordinals(tc_values, levels) -> dict:
    """Empirical quantiles (linear interpolation of order statistics)."""
    tcs = np.asarray(sorted(tc_values), dtype=float)
    if tcs.size == 0:
        raise NoForecastError("no surviving fits")
    return {float(q): float(np.quantile(tcs, q, method="linear")) for q in levels}


def tc_quantiles(survivors, levels, series) -> dict:
    """Quantiles of surviving critical times, as calendar dates."""
    ords = tc_quantile_ordinals([f.params.tc for f in survivors], levels)
    return {q: series.date_of_real(v) for q, v in ords.items()}


def _fit_one(args):
    series, window, space, cfg, n_repeats, seed = args
    if callable(space):
        space = space(window)
    try:
        return fit_window(series, window, space=space, cfg=cfg, n_repeats=n_repeats, seed=seed), None
    except UnfittableWindowError as exc:
        return None, str(exc)


def scan(series, windows, space: SearchSpace = None, cfg: TabooConfig = None,
         n_repeats: int = 3, seed: int = 0,
         quantile_levels=DEFAULT_QUANTILE_LEVELS, n_jobs: int = 1) -> ScanResult:
    """Fit every window and summarize the surviving critical times.

    Per-window failures are recorded, not raised. Seeds derive from
    (seed, window index), so results do not depend on worker scheduling.
    `space` may be a fixed SearchSpace, a callable window -> SearchSpace
    (picklable, for parallel runs), or None for per-window defaults.
    """
    if not windows:
        raise ValueError("windows must be nonempty")
    if cfg is None:
        cfg = TabooConfig()
    tasks = [
        (series, w, space, cfg, n_repeats, derive_seed(seed, "window", i))
        for i, w in enumerate(windows)
    ]
    if n_jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(_fit_one, tasks, chunksize=1))
    else:
        outcomes = [_fit_one(t) for t in tasks]

    fits = [fit for fit, _ in outcomes]
    failures = {i: reason for i, (_, reason) in enumerate(outcomes) if reason is not None}
    survivors = [f for f in fits if f is not None and f.converged and f.passes_filter]
    n_converged = sum(1 for f in fits if f is not None and f.converged)
    p_lppl = len(survivors) / n_converged if n_converged else 0.0
    try:
        quantiles = tc_quantiles(survivors, quantile_levels, series)
    except NoForecastError:
        quantiles = None
    return ScanResult(
        windows=list(windows), fits=fits, failures=failures,
        survivors=survivors, p_lppl=p_lppl, tc_quantiles=quantiles,
    )

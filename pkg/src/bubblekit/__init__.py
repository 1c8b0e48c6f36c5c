"""Bubble diagnosis for daily price series.

Calibrates the log-periodic power law model over families of time
windows, turns the surviving critical times into probabilistic forecast
intervals, and validates the diagnosis with Lomb spectral analysis,
(H, q)-derivatives, unit-root tests of the fit residuals, and a
close-open change-of-regime statistic.
"""

__version__ = "0.1.0"

from .calibrate import (
    Candidate,
    CandidateRejected,
    SearchSpace,
    SingularLinearSystem,
    TabooConfig,
    UnfittableWindowError,
    fit_window,
    passes_lppl_filter,
    refine,
    solve_linear_params,
    taboo_candidates,
)
from .lomb import (
    HqCell,
    HqSettings,
    LogTimeSignal,
    LombPeak,
    classify_harmonics,
    default_frequency_grid,
    detrended_residuals,
    false_alarm_probability,
    hq_derivative,
    hq_grid_scan,
    lomb_peak,
    lomb_periodogram,
)
from .model import LpplFit, LpplParams, WindowSpec, lppl_log_price, residuals, sse
from .pipeline import AnalysisConfig, ScanRange, load_config, run
from .regime import close_open_fraction
from .series import CsvFormatError, PriceSeries, load_csv, save_csv
from .stationarity import (
    Ar1Estimate,
    StationarityTable,
    UnitRootResult,
    dickey_fuller,
    fit_ar1,
    phillips_perron,
    stationarity_table,
)
from .synth import Ar1Noise, SynthSpec, WhiteNoise, generate
from .windows import (
    NoForecastError,
    ScanResult,
    gen_expanding_windows,
    gen_shrinking_windows,
    scan,
    tc_quantile_ordinals,
    tc_quantiles,
)

__all__ = [name for name in dir() if not name.startswith("_")]

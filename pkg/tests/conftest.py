"""Shared fixtures: synthetic series with known ground truth."""

import datetime as dt

import numpy as np
import pytest

from bubblekit import Ar1Noise, LpplParams, PriceSeries, SynthSpec, generate

# Canonical bubble-like truth used across tests: super-exponential rise
# with visible oscillations, singularity 30 days past the sample.
TRUE_PARAMS = LpplParams(A=6.0, B=-0.8, C=0.08, m=0.5, omega=8.0, phi=1.0, tc=430.0)
N_DAYS = 400


def series_from_log(log_close, start=dt.date(2005, 1, 3)):
    """Wrap a log-close path into a PriceSeries with flat open/high/low."""
    close = np.exp(np.asarray(log_close, dtype=float))
    n = close.size
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    dates = tuple(d.astype(dt.date) for d in np.busday_offset(first, np.arange(n)))
    return PriceSeries(dates, close, close * 1.001, close * 0.999, close)


def series_from_open_close(open_, close, start=dt.date(2005, 1, 3)):
    open_ = np.asarray(open_, dtype=float)
    close = np.asarray(close, dtype=float)
    n = close.size
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    dates = tuple(d.astype(dt.date) for d in np.busday_offset(first, np.arange(n)))
    high = np.maximum(open_, close) * 1.001
    low = np.minimum(open_, close) * 0.999
    return PriceSeries(dates, open_, high, low, close)


def bubble_series(seed=0, noise_sigma=0.01, noise_a=0.9, params=TRUE_PARAMS, n_days=N_DAYS):
    noise = Ar1Noise(a=noise_a, sigma=noise_sigma) if noise_sigma else None
    return generate(SynthSpec(params=params, n_days=n_days, seed=seed, residual_model=noise))


@pytest.fixture
def clean_bubble():
    """Noise-free path: the model interpolates the close exactly."""
    return bubble_series(seed=1, noise_sigma=0.0)


@pytest.fixture
def noisy_bubble():
    return bubble_series(seed=2)

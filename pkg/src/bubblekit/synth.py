"""Synthetic price paths: deterministic log-periodic trend plus noise.

Ground-truth fixtures for validation and power studies. The log-close
follows the model exactly, optionally decorated by white or AR(1)
residuals; daily AR(1) is the exact discretization of a mean-reverting
Ornstein-Uhlenbeck process, matching the residual structure the
stationarity tests are meant to detect.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from ._seeds import derive_seed
from .model import LpplParams, lppl_log_price
from .series import PriceSeries


@dataclass(frozen=True)
class WhiteNoise:
    sigma: float


@dataclass(frozen=True)
class Ar1Noise:
    a: float
    sigma: float  # innovation scale

    def __post_init__(self):
        if not abs(self.a) < 1.0:
            raise ValueError(f"AR(1) needs |a| < 1, got {self.a}")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic series."""

    params: LpplParams
    n_days: int
    seed: int
    residual_model: WhiteNoise | Ar1Noise | None = None
    start_date: dt.date = dt.date(2005, 1, 3)
    open_noise: float = 0.002  # log-scale gap between previous close and open

    def __post_init__(self):
        if self.n_days < 10:
            raise ValueError("need n_days >= 10")
        if self.params.tc <= self.n_days:
            raise ValueError(
                f"tc={self.params.tc} inside the sample of {self.n_days} days; "
                "the singularity must lie beyond the generated range"
            )


def _residual_path(spec: SynthSpec, rng) -> np.ndarray:
    model = spec.residual_model
    n = spec.n_days
    if model is None:
        return np.zeros(n)
    if isinstance(model, WhiteNoise):
        return rng.normal(0.0, model.sigma, n)
    # AR(1), started from its stationary distribution
    r = np.empty(n)
    r[0] = rng.normal(0.0, model.sigma / np.sqrt(1.0 - model.a * model.a))
    eps = rng.normal(0.0, model.sigma, n)
    for i in range(1, n):
        r[i] = model.a * r[i - 1] + eps[i]
    return r


def generate(spec: SynthSpec) -> PriceSeries:
    """Build the series: close = exp(model + residual), open near prior close.

    Dates advance over Mon-Fri business days from start_date. Independent
    substreams drive the residuals and the open/high/low decoration, so the
    close path is unchanged by the open-noise setting. Deterministic given
    the seed.
    """
    n = spec.n_days
    t = np.arange(n, dtype=float)
    log_close = lppl_log_price(spec.params, t) + _residual_path(
        spec, np.random.default_rng(derive_seed(spec.seed, "residuals"))
    )
    close = np.exp(log_close)

    rng_open = np.random.default_rng(derive_seed(spec.seed, "open"))
    prev_close = np.concatenate([[close[0]], close[:-1]])
    open_ = prev_close * np.exp(rng_open.normal(0.0, spec.open_noise, n))
    wiggle = np.abs(rng_open.normal(0.0, spec.open_noise, (2, n)))
    high = np.maximum(open_, close) * np.exp(wiggle[0])
    low = np.minimum(open_, close) * np.exp(-wiggle[1])

    start = np.busday_offset(np.datetime64(spec.start_date, "D"), 0, roll="forward")
    days = np.busday_offset(start, np.arange(n))
    dates = tuple(d.astype(dt.date) for d in days)
    return PriceSeries(dates, open_, high, low, close)

"""Log-periodic power law model evaluation.

The model for the log-price is

    ln p(t) = A + B*x^m + C*x^m*cos(omega*ln(x) + phi),   x = tc - t,

defined for t < tc. With B < 0 and 0 < m < 1 the power-law term gives a
super-exponential rise of the log-price whose slope diverges at the
critical time tc; the cosine term decorates it with oscillations that
accelerate as t approaches tc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LpplParams:
    """One parameter set. phi is normalized into [0, 2*pi) on construction."""

    A: float
    B: float
    C: float
    m: float
    omega: float
    tc: float
    phi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.tc) and math.isfinite(self.m)):
            raise ValueError("tc and m must be finite")
        if not self.omega >= 0.0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)

    def as_dict(self) -> dict:
        return {
            "A": self.A, "B": self.B, "C": self.C,
            "m": self.m, "omega": self.omega, "phi": self.phi, "tc": self.tc,
        }


@dataclass(frozen=True, order=True)
class WindowSpec:
    """Closed interval [t1, t2] of trading-day ordinals."""

    t1: int
    t2: int

    def __post_init__(self):
        if not self.t1 < self.t2:
            raise ValueError(f"window needs t1 < t2, got [{self.t1}, {self.t2}]")

    @property
    def n_points(self) -> int:
        return self.t2 - self.t1 + 1

    def times(self) -> np.ndarray:
        return np.arange(self.t1, self.t2 + 1, dtype=float)


@dataclass(frozen=True, eq=False)
class LpplFit:
    """A calibrated window: parameters plus fit diagnostics."""

    params: LpplParams
    window: WindowSpec
    sse: float
    n_points: int
    rng_seed: int
    passes_filter: bool
    converged: bool = True


def lppl_log_price(params: LpplParams, t):
    """Model log-price at trading-day ordinal(s) t; requires t < tc."""
    t_arr = np.asarray(t, dtype=float)
    x = params.tc - t_arr
    if np.any(x <= 0.0):
        raise ValueError(f"t >= tc ({params.tc}): time-to-critical must stay positive")
    lx = np.log(x)
    xm = np.exp(params.m * lx)
    out = params.A + params.B * xm + params.C * xm * np.cos(params.omega * lx + params.phi)
    return float(out) if np.isscalar(t) else out


def residuals(series, params: LpplParams, window: WindowSpec) -> np.ndarray:
    """Per-day residuals ln p(t) - model(t) over the window.

    Returns an (n, 2) array of (t, residual) rows in time order.
    """
    if params.tc <= window.t2:
        raise ValueError(f"tc={params.tc} must exceed window end {window.t2}")
    if window.t2 >= len(series):
        raise ValueError(f"window end {window.t2} outside series of length {len(series)}")
    t = window.times()
    y = series.log_close()[window.t1 : window.t2 + 1]
    r = y - lppl_log_price(params, t)
    return np.column_stack([t, r])


def sse(series, params: LpplParams, window: WindowSpec) -> float:
    """Sum of squared log-price residuals; 0 iff the model interpolates."""
    r = residuals(series, params, window)[:, 1]
    return float(r @ r)

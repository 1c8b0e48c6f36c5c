"""Unit-root tests of fit residuals and the conditional summary table.

Mean-reverting residuals around the calibrated trend behave like a
discrete-time AR(1) with |a| < 1, so stationarity is checked with
Dickey-Fuller and Phillips-Perron tests on each window's residuals. The
regression is constant-only with no lagged differences or trend: the
residuals are already detrended by the fitted model.

Null hypothesis: unit root (non-stationary). Rejection supports the
mean-reversion picture. Critical values at the 1/5/10% levels come from
the MacKinnon response surface; the 0.1% level is not tabulated in
standard sources, so it is read from a seeded million-replication
simulation cached in data/unit_root_critical_values.json.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .model import residuals as model_residuals

# MacKinnon (2010) response surface for the tau statistic, constant-only
# regression, one I(1) variable: cv = b0 + b1/n + b2/n^2 + b3/n^3 with n
# the regression sample size.
_MACKINNON_CONST = {
    0.01: (-3.43035, -6.5393, -16.786, -79.433),
    0.05: (-2.86154, -2.8903, -4.234, -40.040),
    0.10: (-2.56677, -1.5384, -2.809, 0.0),
}

_CRITICAL_VALUES_RESOURCE = "unit_root_critical_values.json"
_simulated_surface_cache = None


class DegenerateSeriesError(ValueError):
    """Constant or too-short residual series: the test is undefined."""


@dataclass(frozen=True)
class Ar1Estimate:
    a: float
    sigma: float


@dataclass(frozen=True)
class UnitRootResult:
    """Outcome of one test: statistic plus per-level decisions."""

    test: str
    statistic: float
    reject_at: dict
    n: int
    spec: str = "constant-only"
    lag_or_bandwidth: int = 0


def fit_ar1(residuals) -> Ar1Estimate:
    """Least-squares AR(1) coefficient and innovation scale.

    r_{t+1} = a * r_t + eps; |a| < 1 indicates mean reversion (the
    discrete-time signature of an Ornstein-Uhlenbeck process).
    """
    r = np.asarray(residuals, dtype=float)
    if r.size < 20:
        raise DegenerateSeriesError(f"need >= 20 residuals, got {r.size}")
    if np.ptp(r) == 0.0:
        raise DegenerateSeriesError("constant residuals")
    x, y = r[:-1], r[1:]
    sxx = float(x @ x)
    if sxx <= 0.0:
        raise DegenerateSeriesError("zero lagged energy")
    a = float(x @ y) / sxx
    innov = y - a * x
    sigma = float(np.sqrt(innov @ innov / max(innov.size - 1, 1)))
    return Ar1Estimate(a=a, sigma=sigma)


def _level_regression(r):
    """OLS of r_t on (1, r_{t-1}); returns rho, its s.e., residuals, s^2.

    A zero-residual regression (perfect mean reversion, e.g. a strict
    +1/-1 alternation) gives se == 0; callers treat that as an infinitely
    negative statistic rather than an error.
    """
    y, ylag = r[1:], r[:-1]
    n = y.size
    xc = ylag - ylag.mean()
    sxx = float(xc @ xc)
    if sxx <= 0.0:
        raise DegenerateSeriesError("constant residuals")
    rho = float(xc @ (y - y.mean())) / sxx
    u = (y - y.mean()) - rho * xc
    rss = float(u @ u)
    s2 = rss / (n - 2)
    se = math.sqrt(s2 / sxx)
    return rho, se, u, s2


def newey_west_bandwidth(n: int) -> int:
    """Standard floor(4 * (n/100)^(2/9)) rule."""
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def _prepare(residuals):
    r = np.asarray(residuals, dtype=float)
    if r.size < 20:
        raise DegenerateSeriesError(f"need >= 20 residuals, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise DegenerateSeriesError("non-finite residuals")
    return r


def dickey_fuller(residuals, alpha_levels=(0.01, 0.001)) -> UnitRootResult:
    """Simple (unaugmented) test: t-ratio of gamma in dr_t = c + gamma*r_{t-1}."""
    r = _prepare(residuals)
    rho, se, _, _ = _level_regression(r)
    stat = (rho - 1.0) / se if se > 0.0 else -math.inf
    n_reg = r.size - 1
    reject = {float(a): bool(stat < critical_value("dickey_fuller", a, n_reg)) for a in alpha_levels}
    return UnitRootResult(test="dickey_fuller", statistic=float(stat), reject_at=reject,
                          n=r.size, lag_or_bandwidth=0)


def phillips_perron(residuals, alpha_levels=(0.01, 0.001)) -> UnitRootResult:
    """Z-tau statistic: the t-ratio corrected by the Newey-West long-run variance."""
    r = _prepare(residuals)
    rho, se, u, s2 = _level_regression(r)
    n = u.size
    bw = newey_west_bandwidth(n)
    if se == 0.0:
        stat = -math.inf
    else:
        gamma0 = float(u @ u) / n
        lam2 = gamma0
        for j in range(1, bw + 1):
            gj = float(u[j:] @ u[:-j]) / n
            lam2 += 2.0 * (1.0 - j / (bw + 1.0)) * gj
        if lam2 <= 0.0:
            raise DegenerateSeriesError("non-positive long-run variance")
        tstat = (rho - 1.0) / se
        stat = math.sqrt(gamma0 / lam2) * tstat \
            - n * se * (lam2 - gamma0) / (2.0 * math.sqrt(lam2) * math.sqrt(s2))
    reject = {float(a): bool(stat < critical_value("phillips_perron", a, n)) for a in alpha_levels}
    return UnitRootResult(test="phillips_perron", statistic=float(stat), reject_at=reject,
                          n=r.size, lag_or_bandwidth=bw)


def _load_simulated_surface():
    global _simulated_surface_cache
    if _simulated_surface_cache is None:
        ref = resources.files("bubblekit").joinpath("data", _CRITICAL_VALUES_RESOURCE)
        try:
            _simulated_surface_cache = json.loads(ref.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise RuntimeError(
                f"{_CRITICAL_VALUES_RESOURCE} missing; regenerate it with "
                "bubblekit.stationarity.simulate_null_quantiles and write_critical_values"
            ) from None
    return _simulated_surface_cache


def critical_value(test: str, alpha: float, n_reg: int) -> float:
    """Left-tail critical value for the given test at regression size n_reg.

    1/5/10% use the MacKinnon response surface (identical for both tests,
    whose asymptotic null distributions coincide); 0.1% uses the cached
    simulated surface, which is test-specific.
    """
    alpha = float(alpha)
    if alpha in _MACKINNON_CONST:
        b0, b1, b2, b3 = _MACKINNON_CONST[alpha]
        inv = 1.0 / n_reg
        return b0 + b1 * inv + b2 * inv * inv + b3 * inv ** 3
    if alpha == 0.001:
        surface = _load_simulated_surface()
        coeffs = surface["tests"][test]["surface"]["0.001"]
        inv = 1.0 / n_reg
        return coeffs[0] + coeffs[1] * inv + coeffs[2] * inv * inv
    raise ValueError(f"no critical values embedded for alpha={alpha}")


def simulate_null_quantiles(sample_sizes=(25, 50, 100, 250, 500, 1000),
                            n_replications: int = 1_000_000,
                            alphas=(0.05, 0.01, 0.001),
                            seed: int = 20090731,
                            batch: int = 25_000,
                            progress=None) -> dict:
    """Monte Carlo left-tail quantiles of both statistics under a random walk.

    Returns a document with per-test per-alpha quantiles at each size and
    a response surface cv = b0 + b1/m + b2/m^2 in the regression size
    m = n - 1, ready for write_critical_values. This is a one-time job;
    the repository ships its output.
    """
    rng = np.random.default_rng(seed)
    tests = {"dickey_fuller": {}, "phillips_perron": {}}
    reg_sizes = []
    for n in sample_sizes:
        m = n - 1
        reg_sizes.append(m)
        bw = newey_west_bandwidth(m)
        df_stats = np.empty(n_replications)
        pp_stats = np.empty(n_replications)
        done = 0
        while done < n_replications:
            b = min(batch, n_replications - done)
            y = rng.standard_normal((b, n)).cumsum(axis=1)
            ynow, ylag = y[:, 1:], y[:, :-1]
            xc = ylag - ylag.mean(axis=1, keepdims=True)
            yc = ynow - ynow.mean(axis=1, keepdims=True)
            sxx = np.einsum("ij,ij->i", xc, xc)
            rho = np.einsum("ij,ij->i", xc, yc) / sxx
            u = yc - rho[:, None] * xc
            rss = np.einsum("ij,ij->i", u, u)
            s2 = rss / (m - 2)
            se = np.sqrt(s2 / sxx)
            tstat = (rho - 1.0) / se
            gamma0 = rss / m
            lam2 = gamma0.copy()
            for j in range(1, bw + 1):
                gj = np.einsum("ij,ij->i", u[:, j:], u[:, :-j]) / m
                lam2 += 2.0 * (1.0 - j / (bw + 1.0)) * gj
            lam2 = np.maximum(lam2, 1e-300)
            pp = np.sqrt(gamma0 / lam2) * tstat \
                - m * se * (lam2 - gamma0) / (2.0 * np.sqrt(lam2) * np.sqrt(s2))
            df_stats[done : done + b] = tstat
            pp_stats[done : done + b] = pp
            done += b
        for name, stats in (("dickey_fuller", df_stats), ("phillips_perron", pp_stats)):
            q = {str(a): float(np.quantile(stats, a)) for a in alphas}
            tests[name][str(n)] = q
        if progress is not None:
            progress(n)

    inv = 1.0 / np.asarray(reg_sizes, dtype=float)
    design = np.column_stack([np.ones_like(inv), inv, inv * inv])
    for name in tests:
        surface = {}
        for a in alphas:
            qs = np.array([tests[name][str(n)][str(a)] for n in sample_sizes])
            coef, *_ = np.linalg.lstsq(design, qs, rcond=None)
            surface[str(a)] = [float(c) for c in coef]
        tests[name] = {"quantiles": tests[name], "surface": surface}
    return {
        "version": 1,
        "seed": seed,
        "n_replications": n_replications,
        "sample_sizes": list(sample_sizes),
        "regression": "constant-only",
        "tests": tests,
    }


def write_critical_values(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class StationarityRow:
    """One index/range entry of the summary table."""

    index: str
    calibrating_range: str
    n_windows: int
    p_lppl: float
    rejection_pct: dict          # alpha -> {test -> % over all converged windows}
    p_stationary_given_lppl: dict  # alpha -> % of survivors with both tests rejecting
    decisions: list              # per-window records backing the percentages


@dataclass
class StationarityTable:
    rows: list
    alpha_levels: tuple

    def to_json_obj(self) -> list:
        return [
            {
                "index": row.index,
                "calibrating_range": row.calibrating_range,
                "n_windows": row.n_windows,
                "p_lppl_pct": row.p_lppl * 100.0,
                "rejection_pct": {str(a): row.rejection_pct[a] for a in self.alpha_levels},
                "p_stationary_given_lppl_pct": {
                    str(a): row.p_stationary_given_lppl[a] for a in self.alpha_levels
                },
            }
            for row in self.rows
        ]

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["index", "calibrating_range", "n_windows", "p_lppl_pct", "alpha",
                 "phillips_perron_reject_pct", "dickey_fuller_reject_pct",
                 "p_stationary_given_lppl_pct"]
            )
            for row in self.rows:
                for a in self.alpha_levels:
                    writer.writerow(
                        [row.index, row.calibrating_range, row.n_windows,
                         f"{row.p_lppl * 100.0:.1f}", a,
                         f"{row.rejection_pct[a]['phillips_perron']:.1f}",
                         f"{row.rejection_pct[a]['dickey_fuller']:.1f}",
                         f"{row.p_stationary_given_lppl[a]:.1f}"]
                    )


def stationarity_table(entries, alpha_levels=(0.01, 0.001)) -> StationarityTable:
    """Summarize unit-root decisions over completed scans.

    `entries` is an iterable of (index_label, range_label, series,
    scan_result). Marginal rejection percentages run over all converged
    windows; the conditional stationarity rate runs over filter survivors
    and requires both tests to reject at the given level.
    """
    rows = []
    for index_label, range_label, series, scan_result in entries:
        fits = [f for f in scan_result.fits if f is not None and f.converged]
        decisions = []
        for fit in fits:
            r = model_residuals(series, fit.params, fit.window)[:, 1]
            try:
                df = dickey_fuller(r, alpha_levels)
                pp = phillips_perron(r, alpha_levels)
            except DegenerateSeriesError:
                # window too short or residuals constant: no decision
                continue
            decisions.append(
                {
                    "window": (fit.window.t1, fit.window.t2),
                    "passes_filter": fit.passes_filter,
                    "dickey_fuller": df.reject_at,
                    "phillips_perron": pp.reject_at,
                }
            )
        n_windows = len(decisions)
        rejection = {}
        conditional = {}
        for a in alpha_levels:
            a = float(a)
            rejection[a] = {
                test: (100.0 * sum(d[test][a] for d in decisions) / n_windows if n_windows else 0.0)
                for test in ("phillips_perron", "dickey_fuller")
            }
            survivors = [d for d in decisions if d["passes_filter"]]
            both = sum(d["dickey_fuller"][a] and d["phillips_perron"][a] for d in survivors)
            conditional[a] = 100.0 * both / len(survivors) if survivors else 0.0
        rows.append(
            StationarityRow(
                index=index_label, calibrating_range=range_label,
                n_windows=n_windows, p_lppl=scan_result.p_lppl,
                rejection_pct=rejection, p_stationary_given_lppl=conditional,
                decisions=decisions,
            )
        )
    return StationarityTable(rows=rows, alpha_levels=tuple(float(a) for a in alpha_levels))

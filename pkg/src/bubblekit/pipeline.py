"""End-to-end analysis: scan, forecast, spectra, unit roots, regime.

A single mandatory seed drives every stochastic stage through derived
sub-seeds, so a report is a pure function of (input file, config, seed);
reruns are byte-identical apart from the generated_at timestamp. All
files are written only after the full computation succeeds.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import functools
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, lomb, regime
from .calibrate import SearchSpace, TabooConfig
from .series import load_csv
from .stationarity import stationarity_table
from .windows import gen_expanding_windows, gen_shrinking_windows, scan

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "BUBBLEKIT_OUTPUT_DIR"

EXIT_OK = 0
EXIT_UNFITTABLE = 3


@dataclass
class ScanRange:
    """Date endpoints of one window family; None fields take defaults."""

    t2: dt.date | None = None        # shrinking: fixed end
    t1_first: dt.date | None = None
    t1_last: dt.date | None = None
    t1: dt.date | None = None        # expanding: fixed start
    t2_first: dt.date | None = None
    t2_last: dt.date | None = None


@dataclass
class AnalysisConfig:
    """Everything `run` needs; mirrors the CLI flags and the config file."""

    input_path: str
    seed: int
    output_dir: str = "bubblekit-out"
    mode: str = "shrinking"              # shrinking | expanding | both
    step: int = 5                        # trading days between windows
    scan_range: ScanRange = field(default_factory=ScanRange)
    n_repeats: int = 3
    m_range: tuple = (0.01, 1.2)
    omega_range: tuple = (2.0, 25.0)
    tc_horizon_frac: float = 0.5
    taboo: TabooConfig = field(default_factory=TabooConfig)
    quantile_levels: tuple = (0.05, 0.20, 0.80, 0.95)
    lomb_omega_range: tuple = (0.2, 40.0)
    lomb_oversample: int = 4
    harmonic_rel_tol: float = 0.15
    hq_tc: dt.date | None = None         # default: median surviving tc
    hq_enabled: bool = True
    unit_root_alphas: tuple = (0.01, 0.001)
    regime_window_lengths: tuple = (10, 20, 30)
    diagnosis_threshold: float = 0.5
    n_jobs: int = 1

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is mandatory; wall-clock seeding is not supported")
        if self.mode not in ("shrinking", "expanding", "both"):
            raise ValueError(f"unknown scan mode {self.mode!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "AnalysisConfig":
        data = dict(raw)
        if "scan_range" in data and isinstance(data["scan_range"], dict):
            data["scan_range"] = ScanRange(
                **{k: _parse_date(v) for k, v in data["scan_range"].items()}
            )
        if "taboo" in data and isinstance(data["taboo"], dict):
            data["taboo"] = TabooConfig(**data["taboo"])
        if "hq_tc" in data:
            data["hq_tc"] = _parse_date(data["hq_tc"])
        for key in ("m_range", "omega_range", "quantile_levels", "lomb_omega_range",
                    "unit_root_alphas", "regime_window_lengths"):
            if key in data and data[key] is not None:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_json_obj(self) -> dict:
        def encode(value):
            if isinstance(value, dt.date):
                return value.isoformat()
            if isinstance(value, tuple):
                return list(value)
            if dataclasses.is_dataclass(value) and not isinstance(value, type):
                return {k: encode(v) for k, v in dataclasses.asdict(value).items()}
            return value

        return {f.name: encode(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _parse_date(value):
    if value is None or isinstance(value, dt.date):
        return value
    return dt.date.fromisoformat(value)


def load_config(path, overrides: dict | None = None) -> AnalysisConfig:
    """Read a JSON config file; explicit overrides win over file values."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    return AnalysisConfig.from_dict(raw)


def build_windows(series, config: AnalysisConfig) -> list:
    """Translate the configured date ranges into window families.

    Start-like dates snap to the first trading day on or after them,
    end-like dates to the last trading day on or before them (so calendar
    dates falling on weekends or holidays are usable).
    """
    r = config.scan_range
    last = len(series) - 1
    out = []
    if config.mode in ("shrinking", "both"):
        t2 = series.ordinal_of(r.t2, "right") if r.t2 else last
        t1_first = series.ordinal_of(r.t1_first, "left") if r.t1_first else 0
        t1_last = series.ordinal_of(r.t1_last, "right") if r.t1_last else t2 - 30
        out.extend(gen_shrinking_windows(t1_first, t1_last, t2, config.step))
    if config.mode in ("expanding", "both"):
        t1 = series.ordinal_of(r.t1, "left") if r.t1 else 0
        t2_first = series.ordinal_of(r.t2_first, "left") if r.t2_first else t1 + 30
        t2_last = series.ordinal_of(r.t2_last, "right") if r.t2_last else last
        out.extend(gen_expanding_windows(t1, t2_first, t2_last, config.step))
    return out


def run(config: AnalysisConfig):
    """Execute the full analysis; returns (report dict, exit code).

    The report is always produced: when every window fails to fit it
    carries an empty forecast and the exit code is nonzero.
    """
    series = load_csv(config.input_path)
    windows = build_windows(series, config)
    space_factory = functools.partial(
        SearchSpace.default_for,
        tc_horizon_frac=config.tc_horizon_frac,
        m_range=config.m_range,
        omega_range=config.omega_range,
    )
    result = scan(
        series, windows,
        space=space_factory,
        cfg=dataclasses.replace(config.taboo, seed=config.seed),
        n_repeats=config.n_repeats, seed=config.seed,
        quantile_levels=config.quantile_levels, n_jobs=config.n_jobs,
    )

    report = {
        "schema_version": SCHEMA_VERSION,
        "software_version": __version__,
        "generated_at": dt.datetime.now(dt.timezone.utc).isoformat(),
        "seed": config.seed,
        "config": config.to_json_obj(),
        "windows": _window_records(series, result),
        "n_windows": len(result.windows),
        "n_converged": result.n_converged,
        "n_survivors": len(result.survivors),
        "survivors": [
            i for i, f in enumerate(result.fits)
            if f is not None and f.converged and f.passes_filter
        ],
        "p_lppl": result.p_lppl,
        "lppl_diagnosis": result.p_lppl >= config.diagnosis_threshold,
        "no_forecast": result.tc_quantiles is None,
        "tc_forecast": (
            {f"{q:g}": d.isoformat() for q, d in result.tc_quantiles.items()}
            if result.tc_quantiles is not None else None
        ),
    }

    periodograms, residual_peaks = _residual_lomb(series, result, config)
    report["lomb"] = {"residual_peaks": residual_peaks}
    report["hq"] = _hq_section(series, result, config) if config.hq_enabled else None

    table = stationarity_table(
        [(Path(config.input_path).stem, _range_label(series, result), series, result)],
        config.unit_root_alphas,
    )
    report["unit_root"] = table.to_json_obj()

    regime_series = {
        int(T): regime.close_open_fraction(series, int(T))
        for T in config.regime_window_lengths
    }
    report["regime"] = {
        str(T): [[day.isoformat(), frac] for day, frac in pairs]
        for T, pairs in regime_series.items()
    }

    _check_finite(report, "report")
    exit_code = EXIT_OK if result.n_converged > 0 else EXIT_UNFITTABLE
    _write_outputs(config, series, result, report, table, periodograms, regime_series)
    return report, exit_code


def _range_label(series, result) -> str:
    t1 = min(w.t1 for w in result.windows)
    t2 = max(w.t2 for w in result.windows)
    return f"{series.date_of(t1).isoformat()}..{series.date_of(t2).isoformat()}"


def _window_records(series, result) -> list:
    records = []
    for i, (window, fit) in enumerate(zip(result.windows, result.fits)):
        rec = {
            "index": i,
            "t1": window.t1,
            "t2": window.t2,
            "t1_date": series.date_of(window.t1).isoformat(),
            "t2_date": series.date_of(window.t2).isoformat(),
        }
        if fit is None:
            rec["failure"] = result.failures.get(i, "unfittable")
        else:
            rec.update(
                converged=fit.converged,
                passes_filter=fit.passes_filter,
                sse=fit.sse,
                n_points=fit.n_points,
                rng_seed=fit.rng_seed,
                params=fit.params.as_dict(),
                tc_date=series.date_of_real(fit.params.tc).isoformat(),
            )
        records.append(rec)
    return records


def _residual_lomb(series, result, config: AnalysisConfig):
    """Residual periodograms and peak records for every survivor."""
    periodograms = {}
    peaks = []
    for i, fit in enumerate(result.fits):
        if fit is None or not (fit.converged and fit.passes_filter):
            continue
        try:
            signal = lomb.detrended_residuals(series, fit)
            omegas, n_indep = lomb.default_frequency_grid(
                signal, config.lomb_omega_range, config.lomb_oversample
            )
            power = lomb.lomb_periodogram(signal, omegas)
        except ValueError as exc:
            peaks.append({"window_index": i, "skip_reason": str(exc)})
            continue
        peak = lomb.lomb_peak(signal, omegas, n_indep)
        label = lomb.classify_harmonics(
            [(fit.params.omega, peak.omega)], config.harmonic_rel_tol, signal.span
        )[0]
        periodograms[i] = (omegas, power)
        peaks.append(
            {
                "window_index": i,
                "omega_fit": fit.params.omega,
                "omega_lomb": peak.omega,
                "power": peak.power,
                "false_alarm": peak.false_alarm,
                "label": label,
            }
        )
    return periodograms, peaks


def _hq_section(series, result, config: AnalysisConfig):
    if config.hq_tc is not None:
        tc_ord = float(series.ordinal_of(config.hq_tc, "right"))
        tc_date = config.hq_tc
    else:
        survivors = result.survivors
        if not survivors:
            return None
        tcs = sorted(f.params.tc for f in survivors)
        tc_ord = tcs[len(tcs) // 2]
        tc_date = series.date_of_real(tc_ord)
    lo = min(w.t1 for w in result.windows)
    hi = max(w.t2 for w in result.windows)
    view = series.slice(lo, hi)
    cells = lomb.hq_grid_scan(
        view, tc_ord - lo,
        omega_range=config.lomb_omega_range, oversample=config.lomb_oversample,
    )
    return {
        "tc_date": tc_date.isoformat(),
        "tc_ordinal": tc_ord,
        "cells": [
            {"H": c.H, "q": c.q, "omega": c.peak.omega,
             "power": c.peak.power, "false_alarm": c.peak.false_alarm}
            for c in cells if c.peak is not None
        ],
        "skipped": [
            {"H": c.H, "q": c.q, "reason": c.skip_reason}
            for c in cells if c.peak is None
        ],
    }


def _check_finite(node, path: str):
    """Reject NaN/inf anywhere in the report tree before writing."""
    if isinstance(node, dict):
        for k, v in node.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(node, (list, tuple)):
        for i, v in enumerate(node):
            _check_finite(v, f"{path}[{i}]")
    elif isinstance(node, float) and not math.isfinite(node):
        raise ValueError(f"non-finite value at {path}")


def resolve_output_dir(config: AnalysisConfig) -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, config.output_dir))


def _write_outputs(config, series, result, report, table, periodograms, regime_series):
    out = resolve_output_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_fits_csv(out / "fits.csv", report["windows"])
    for i, (omegas, power) in periodograms.items():
        lomb.save_periodogram(out / f"periodogram_w{i:03d}.csv", omegas, power)
    table.write_csv(out / "unitroot_table.csv")
    table.write_json(out / "unitroot_table.json")
    for T, pairs in regime_series.items():
        regime.save_fractions(out / f"regime_T{T}.csv", pairs)


def write_fits_csv(path, window_records) -> None:
    cols = ["index", "t1_date", "t2_date", "t1", "t2", "converged", "passes_filter",
            "A", "B", "C", "m", "omega", "phi", "tc", "tc_date", "sse",
            "n_points", "rng_seed", "failure"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rec in window_records:
            params = rec.get("params", {})
            writer.writerow(
                [
                    rec["index"], rec["t1_date"], rec["t2_date"], rec["t1"], rec["t2"],
                    rec.get("converged", ""), rec.get("passes_filter", ""),
                    *[params.get(k, "") for k in ("A", "B", "C", "m", "omega", "phi", "tc")],
                    rec.get("tc_date", ""), rec.get("sse", ""),
                    rec.get("n_points", ""), rec.get("rng_seed", ""),
                    rec.get("failure", ""),
                ]
            )

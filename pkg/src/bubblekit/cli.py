"""Command-line entry points.

Every stochastic subcommand requires an explicit --seed; there is no
wall-clock fallback, so runs are reproducible by construction. The
`report` subcommand orchestrates the full analysis from a JSON config
file, with flags overriding file values.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
from pathlib import Path

from . import __version__, lomb, regime
from .calibrate import SearchSpace, TabooConfig, UnfittableWindowError, fit_window
from .model import LpplParams, WindowSpec
from .pipeline import (
    EXIT_UNFITTABLE,
    OUTPUT_DIR_ENV,
    AnalysisConfig,
    load_config,
    resolve_output_dir,
    run,
    write_fits_csv,
)
from .series import CsvFormatError, load_csv, save_csv
from .stationarity import dickey_fuller, phillips_perron
from .synth import Ar1Noise, SynthSpec, WhiteNoise, generate
from .windows import gen_expanding_windows, gen_shrinking_windows, scan


def _date(text: str) -> dt.date:
    return dt.date.fromisoformat(text)


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _outdir(args) -> Path:
    """--output-dir, overridable by the environment (and nothing else is)."""
    out = Path(os.environ.get(OUTPUT_DIR_ENV, args.output_dir))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True, help="global RNG seed (mandatory)")
    p.add_argument("--n-repeats", type=int, default=3,
                   help="independent calibration passes per window")
    p.add_argument("--n-candidates", type=int, default=10, help="taboo candidates per pass")
    p.add_argument("--n-iterations", type=int, default=2000, help="taboo iterations")
    p.add_argument("--m-range", type=float, nargs=2, default=[0.01, 1.2],
                   metavar=("LO", "HI"), help="power-law exponent search box")
    p.add_argument("--omega-range", type=float, nargs=2, default=[2.0, 25.0],
                   metavar=("LO", "HI"), help="angular log-frequency search box")
    p.add_argument("--tc-horizon-frac", type=float, default=0.5,
                   help="tc search horizon past t2, as a fraction of the window span")


def _taboo_from(args) -> TabooConfig:
    return TabooConfig(
        n_candidates=args.n_candidates, n_iterations=args.n_iterations, seed=args.seed
    )


def _space_for(args, window: WindowSpec) -> SearchSpace:
    return SearchSpace.default_for(
        window, tc_horizon_frac=args.tc_horizon_frac,
        m_range=tuple(args.m_range), omega_range=tuple(args.omega_range),
    )


def _window_from(series, args) -> WindowSpec:
    return WindowSpec(
        series.ordinal_of(args.t1, "left"), series.ordinal_of(args.t2, "right")
    )


def _fit_record(series, fit) -> dict:
    return {
        "t1_date": series.date_of(fit.window.t1).isoformat(),
        "t2_date": series.date_of(fit.window.t2).isoformat(),
        "params": fit.params.as_dict(),
        "tc_date": series.date_of_real(fit.params.tc).isoformat(),
        "sse": fit.sse,
        "n_points": fit.n_points,
        "rng_seed": fit.rng_seed,
        "converged": fit.converged,
        "passes_filter": fit.passes_filter,
    }


def cmd_fit(args) -> int:
    series = load_csv(args.input)
    window = _window_from(series, args)
    try:
        fit = fit_window(series, window, space=_space_for(args, window),
                         cfg=_taboo_from(args), n_repeats=args.n_repeats, seed=args.seed)
    except UnfittableWindowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNFITTABLE
    _emit(_fit_record(series, fit))
    return 0


def cmd_scan(args) -> int:
    series = load_csv(args.input)
    last = len(series) - 1
    if args.mode == "shrinking":
        t2 = series.ordinal_of(args.t2, "right") if args.t2 else last
        t1_first = series.ordinal_of(args.t1_first, "left") if args.t1_first else 0
        t1_last = series.ordinal_of(args.t1_last, "right") if args.t1_last else t2 - 30
        windows = gen_shrinking_windows(t1_first, t1_last, t2, args.step)
    else:
        t1 = series.ordinal_of(args.t1, "left") if args.t1 else 0
        t2_first = series.ordinal_of(args.t2_first, "left") if args.t2_first else t1 + 30
        t2_last = series.ordinal_of(args.t2_last, "right") if args.t2_last else last
        windows = gen_expanding_windows(t1, t2_first, t2_last, args.step)
    result = scan(series, windows, space=None, cfg=_taboo_from(args),
                  n_repeats=args.n_repeats, seed=args.seed, n_jobs=args.jobs)
    out = _outdir(args)
    records = []
    for i, (w, fit) in enumerate(zip(result.windows, result.fits)):
        rec = {"index": i, "t1": w.t1, "t2": w.t2,
               "t1_date": series.date_of(w.t1).isoformat(),
               "t2_date": series.date_of(w.t2).isoformat()}
        if fit is None:
            rec["failure"] = result.failures.get(i, "unfittable")
        else:
            rec.update(converged=fit.converged, passes_filter=fit.passes_filter,
                       sse=fit.sse, n_points=fit.n_points, rng_seed=fit.rng_seed,
                       params=fit.params.as_dict(),
                       tc_date=series.date_of_real(fit.params.tc).isoformat())
        records.append(rec)
    write_fits_csv(out / "fits.csv", records)
    _emit(
        {
            "n_windows": len(windows),
            "n_converged": result.n_converged,
            "n_survivors": len(result.survivors),
            "p_lppl": result.p_lppl,
            "tc_quantiles": (
                {f"{q:g}": d.isoformat() for q, d in result.tc_quantiles.items()}
                if result.tc_quantiles else None
            ),
            "fits_csv": str(out / "fits.csv"),
        }
    )
    return 0 if result.n_converged else EXIT_UNFITTABLE


def cmd_lomb(args) -> int:
    series = load_csv(args.input)
    window = _window_from(series, args)
    fit = fit_window(series, window, space=_space_for(args, window),
                     cfg=_taboo_from(args), n_repeats=args.n_repeats, seed=args.seed)
    signal = lomb.detrended_residuals(series, fit)
    omegas, n_indep = lomb.default_frequency_grid(
        signal, tuple(args.lomb_omega_range), args.lomb_oversample
    )
    power = lomb.lomb_periodogram(signal, omegas)
    peak = lomb.lomb_peak(signal, omegas, n_indep)
    out = _outdir(args)
    pg_path = out / "periodogram_residual.csv"
    lomb.save_periodogram(pg_path, omegas, power)
    label = lomb.classify_harmonics(
        [(fit.params.omega, peak.omega)], args.rel_tol, signal.span
    )[0]
    _emit(
        {
            "fit": _fit_record(series, fit),
            "omega_lomb": peak.omega,
            "power": peak.power,
            "false_alarm": peak.false_alarm,
            "n_independent": n_indep,
            "label": label,
            "periodogram_csv": str(pg_path),
        }
    )
    return 0


def cmd_hq(args) -> int:
    series = load_csv(args.input)
    if args.start or args.end:
        lo = series.ordinal_of(args.start, "left") if args.start else 0
        hi = series.ordinal_of(args.end, "right") if args.end else len(series) - 1
        view = series.slice(lo, hi)
    else:
        lo, view = 0, series
    tc_ord = series.ordinal_of(args.tc, "right") - lo
    cells = lomb.hq_grid_scan(view, float(tc_ord),
                              omega_range=tuple(args.lomb_omega_range),
                              oversample=args.lomb_oversample)
    out = _outdir(args)
    path = out / "hq_peaks.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("H,q,omega,power,false_alarm,skip_reason\n")
        for c in cells:
            if c.peak is None:
                fh.write(f"{c.H:g},{c.q:g},,,,{c.skip_reason}\n")
            else:
                fh.write(f"{c.H:g},{c.q:g},{c.peak.omega:.10g},"
                         f"{c.peak.power:.10g},{c.peak.false_alarm:.10g},\n")
    done = [c for c in cells if c.peak is not None]
    _emit(
        {
            "tc_date": args.tc.isoformat(),
            "n_cells": len(cells),
            "n_done": len(done),
            "n_skipped": len(cells) - len(done),
            "peaks_csv": str(path),
        }
    )
    return 0


def cmd_unitroot(args) -> int:
    series = load_csv(args.input)
    window = _window_from(series, args)
    fit = fit_window(series, window, space=_space_for(args, window),
                     cfg=_taboo_from(args), n_repeats=args.n_repeats, seed=args.seed)
    from .model import residuals as model_residuals

    r = model_residuals(series, fit.params, fit.window)[:, 1]
    alphas = [float(a) for a in args.alphas.split(",")]
    out = {"fit": _fit_record(series, fit)}
    for res in (dickey_fuller(r, alphas), phillips_perron(r, alphas)):
        out[res.test] = {
            "statistic": res.statistic,
            "reject_at": {f"{a:g}": v for a, v in res.reject_at.items()},
            "lag_or_bandwidth": res.lag_or_bandwidth,
            "n": res.n,
        }
    _emit(out)
    return 0


def cmd_regime(args) -> int:
    series = load_csv(args.input)
    out = _outdir(args)
    paths = {}
    for T in args.T:
        pairs = regime.close_open_fraction(series, T)
        path = out / f"regime_T{T}.csv"
        regime.save_fractions(path, pairs)
        paths[str(T)] = str(path)
    _emit({"written": paths})
    return 0


def cmd_synth(args) -> int:
    params = LpplParams(A=args.A, B=args.B, C=args.C, m=args.m,
                        omega=args.omega, phi=args.phi, tc=args.tc)
    noise = None
    if args.noise != "none":
        kind, *vals = args.noise.split(":")
        if kind == "white":
            noise = WhiteNoise(sigma=float(vals[0]))
        elif kind == "ar1":
            noise = Ar1Noise(a=float(vals[0]), sigma=float(vals[1]))
        else:
            raise SystemExit(f"unknown noise spec {args.noise!r}; use none, white:S or ar1:A:S")
    spec = SynthSpec(params=params, n_days=args.n_days, seed=args.seed,
                     residual_model=noise, start_date=args.start_date)
    series = generate(spec)
    save_csv(series, args.output)
    _emit({"written": args.output, "n_days": len(series),
           "first_date": series.dates[0].isoformat(),
           "last_date": series.dates[-1].isoformat()})
    return 0


def cmd_report(args) -> int:
    overrides = {
        "input_path": args.input,
        "seed": args.seed,
        "output_dir": args.output_dir,
        "mode": args.mode,
        "n_jobs": args.jobs,
    }
    if args.config:
        config = load_config(args.config, overrides)
    else:
        missing = [k for k in ("input_path", "seed") if overrides.get(k) is None]
        if missing:
            raise SystemExit(f"--config or explicit {missing} required")
        config = AnalysisConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    report, code = run(config)
    _emit(
        {
            "report_json": str(resolve_output_dir(config) / "report.json"),
            "p_lppl": report["p_lppl"],
            "lppl_diagnosis": report["lppl_diagnosis"],
            "tc_forecast": report["tc_forecast"],
            "exit_code": code,
        }
    )
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bubblekit",
        description="Diagnose bubbles in daily price series and forecast the critical time.",
    )
    parser.add_argument("--version", action="version", version=f"bubblekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("fit", help="calibrate one window", formatter_class=fmt)
    p.add_argument("--input", required=True, help="CSV with date,open,high,low,close")
    p.add_argument("--t1", type=_date, required=True, help="window start (ISO date)")
    p.add_argument("--t2", type=_date, required=True, help="window end (ISO date)")
    _add_fit_options(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scan", help="fit a family of windows and forecast tc",
                       formatter_class=fmt)
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=["shrinking", "expanding"], default="shrinking")
    p.add_argument("--t2", type=_date, help="fixed end date (shrinking mode)")
    p.add_argument("--t1-first", type=_date, help="earliest start date (shrinking)")
    p.add_argument("--t1-last", type=_date, help="latest start date (shrinking)")
    p.add_argument("--t1", type=_date, help="fixed start date (expanding mode)")
    p.add_argument("--t2-first", type=_date, help="earliest end date (expanding)")
    p.add_argument("--t2-last", type=_date, help="latest end date (expanding)")
    p.add_argument("--step", type=int, default=5, help="trading days between windows")
    p.add_argument("--output-dir", default="bubblekit-out")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    _add_fit_options(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("lomb", help="spectral check of one window's detrended residuals",
                       formatter_class=fmt)
    p.add_argument("--input", required=True)
    p.add_argument("--t1", type=_date, required=True)
    p.add_argument("--t2", type=_date, required=True)
    p.add_argument("--rel-tol", type=float, default=0.15,
                   help="relative tolerance for harmonic labels")
    p.add_argument("--lomb-omega-range", type=float, nargs=2, default=[0.2, 40.0],
                   metavar=("LO", "HI"), help="periodogram frequency grid bounds")
    p.add_argument("--lomb-oversample", type=int, default=4,
                   help="grid oversampling relative to the natural resolution")
    p.add_argument("--output-dir", default="bubblekit-out")
    _add_fit_options(p)
    p.set_defaults(func=cmd_lomb)

    p = sub.add_parser("hq", help="(H,q)-derivative grid scan at a supplied tc",
                       formatter_class=fmt)
    p.add_argument("--input", required=True)
    p.add_argument("--tc", type=_date, required=True, help="anchor critical time (ISO date)")
    p.add_argument("--start", type=_date, help="restrict analysis range start")
    p.add_argument("--end", type=_date, help="restrict analysis range end")
    p.add_argument("--lomb-omega-range", type=float, nargs=2, default=[0.2, 40.0],
                   metavar=("LO", "HI"), help="periodogram frequency grid bounds")
    p.add_argument("--lomb-oversample", type=int, default=4,
                   help="grid oversampling relative to the natural resolution")
    p.add_argument("--output-dir", default="bubblekit-out")
    p.set_defaults(func=cmd_hq)

    p = sub.add_parser("unitroot", help="stationarity tests of one window's fit residuals",
                       formatter_class=fmt)
    p.add_argument("--input", required=True)
    p.add_argument("--t1", type=_date, required=True)
    p.add_argument("--t2", type=_date, required=True)
    p.add_argument("--alphas", default="0.01,0.001", help="comma-separated significance levels")
    _add_fit_options(p)
    p.set_defaults(func=cmd_unitroot)

    p = sub.add_parser("regime", help="close-open change-of-regime statistic",
                       formatter_class=fmt)
    p.add_argument("--input", required=True)
    p.add_argument("--T", type=_int_list, default=[10, 20, 30],
                   help="comma-separated trailing window lengths")
    p.add_argument("--output-dir", default="bubblekit-out")
    p.set_defaults(func=cmd_regime)

    p = sub.add_parser("synth", help="generate a synthetic fixture series",
                       formatter_class=fmt)
    p.add_argument("--output", required=True, help="destination CSV")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-days", type=int, default=400)
    p.add_argument("--tc", type=float, default=430.0, help="critical time (trading-day ordinal)")
    p.add_argument("--m", type=float, default=0.5)
    p.add_argument("--omega", type=float, default=8.0)
    p.add_argument("--phi", type=float, default=1.0)
    p.add_argument("--A", type=float, default=6.0)
    p.add_argument("--B", type=float, default=-0.8)
    p.add_argument("--C", type=float, default=0.08)
    p.add_argument("--noise", default="ar1:0.9:0.01",
                   help="none | white:SIGMA | ar1:A:SIGMA")
    p.add_argument("--start-date", type=_date, default=dt.date(2005, 1, 3))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="full analysis from a config file",
                       formatter_class=fmt)
    p.add_argument("--config", help="JSON config mirroring AnalysisConfig")
    p.add_argument("--input", help="overrides input_path")
    p.add_argument("--seed", type=int, help="overrides seed")
    p.add_argument("--output-dir", help="overrides output_dir")
    p.add_argument("--mode", choices=["shrinking", "expanding", "both"],
                   help="overrides scan mode")
    p.add_argument("--jobs", type=int, help="overrides n_jobs")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CsvFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

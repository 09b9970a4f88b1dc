"""``cotdr`` command line: measure, series, clock-cal, budget, golay.

Exit codes: 0 success, 2 configuration error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    AnalysisError,
    clock_latency_error,
    detrend_poly,
    format_seconds,
    phase_latency_budget,
    series_offset,
    skew_improvement_factor,
    thermal_sensitivity,
)
from .channel import ChannelError, FiberSpec
from .estimator import EstimatorError, count_periods, estimate_clock_skew, synthesize_reference
from .frontend import FrontendError
from .golay import GolayError, generate_golay_pair
from .pipeline import Measurement, PipelineError, SeriesResult, Simulator
from .probe import ProbeError
from .scenario import ConfigError, Scenario, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 2, 3
DEFAULT_OUT = "cotdr-out"
MIN_SERIES_COUNT = 7
# each measurement type is detrended separately and a quartic needs six points
MIN_COMPARE_COUNT = 12

MEASURE_HEADER = (
    "row", "label", "t0_seconds", "t0_ps", "amplitude", "fwhm_seconds", "fwhm_ps", "baseline",
    "residual_rms", "valid", "iterations", "round_trip_seconds", "one_way_seconds", "one_way_ps",
    "truth_one_way_seconds", "error_ps",
)
PROFILE_EXPORT_HALF_WINDOW = 64
SERIES_HEADER = ("index", "t_seconds", "one_way_seconds", "round_trip_seconds", "residual_ps")


def _ps(x: float) -> str:
    return f"{x * 1e12:.6f}"


def _num(x: float) -> str:
    return f"{x:.12g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_manifest(out: Path, command: str, scn: Scenario | None, extra: dict[str, str] | None = None) -> None:
    lines = ["[manifest]", f"command = {command}", f"version = {__version__}"]
    if scn is not None:
        lines.append(f"master_seed = {scn.master_seed}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    lines.append("")
    if scn is not None:
        lines.append(scn.to_config_text())
    (out / "run-manifest.ini").write_text("\n".join(lines), encoding="utf-8", newline="\n")


def _parse_set(items: list[str]) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for item in items:
        key, eq, value = item.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not eq or not dot:
            raise ConfigError([f"--set {item!r}: expected section.key=value"])
        out.setdefault(sec, {})[name] = value.strip()
    return out


def _scenario(args) -> Scenario:
    overrides = _parse_set(args.set or [])
    if args.seed is not None:
        overrides.setdefault("scenario", {})["master_seed"] = str(args.seed)
    if args.max_samples is not None:
        overrides.setdefault("limits", {})["max_samples"] = str(args.max_samples)
    if getattr(args, "workers", None) is not None:
        overrides.setdefault("frontend", {})["workers"] = str(args.workers)
    if getattr(args, "mode", None) is not None:
        overrides.setdefault("scenario", {})["mode"] = args.mode
    if getattr(args, "count", None) is not None:
        overrides.setdefault("series", {})["count"] = str(args.count)
    if getattr(args, "interleave", None) is not None:
        overrides.setdefault("series", {})["interleave"] = args.interleave
        overrides["series"]["compare"] = "true"
    if args.config is None and args.preset is None:
        args.preset = "desk-10km"
    return load_scenario(preset=args.preset, config=args.config, overrides=overrides)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("COTDR_OUT") or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- measure -----------------------------------------------------------------


def measure_rows(m: Measurement) -> list[list[str]]:
    est = m.estimate
    labels = ("reference", "end") if est.reflective else ("back-to-back", "single-pass")
    rows = []
    for label, fit in zip(labels, (est.ref_fit, est.end_fit)):
        rows.append([
            "peak", label, format_seconds(fit.t0), _ps(fit.t0), _num(fit.amplitude),
            format_seconds(fit.half_width), _ps(fit.half_width), _num(fit.baseline),
            _num(fit.residual_rms), "true" if fit.valid else "false", str(fit.iterations),
            "", "", "", "", "",
        ])
    rows.append([
        "summary", m.mode, "", "", "", "", "", "", "", "", "",
        format_seconds(est.round_trip), format_seconds(est.one_way), _ps(est.one_way),
        format_seconds(m.truth_one_way), _ps(m.error),
    ])
    return rows


def profile_rows(m: Measurement, half_window: int = PROFILE_EXPORT_HALF_WINDOW) -> list[list[str]]:
    """Correlation samples around each located peak; the full profile is tens of MB."""
    pr = m.profile
    keep = np.zeros(len(pr), dtype=bool)
    for k in m.peak_indices:
        keep[max(0, k - half_window) : k + half_window + 1] = True
    idx = np.flatnonzero(keep)
    return [[format_seconds(i / pr.sample_rate), _num(float(pr.values[i]))] for i in idx]


def fit_rows(m: Measurement) -> list[list[str]]:
    est = m.estimate
    labels = ("reference", "end") if est.reflective else ("back_to_back", "single_pass")
    rows = []
    for label, fit in zip(labels, (est.ref_fit, est.end_fit)):
        rows += [
            [f"{label}_t0", format_seconds(fit.t0)],
            [f"{label}_amplitude", _num(fit.amplitude)],
            [f"{label}_half_width", format_seconds(fit.half_width)],
            [f"{label}_baseline", _num(fit.baseline)],
            [f"{label}_residual_rms", _num(fit.residual_rms)],
            [f"{label}_iterations", str(fit.iterations)],
        ]
    rows += [
        ["skew_ppm_applied", _num(est.skew_ppm_applied)],
        ["demarc_round_trip", format_seconds(est.demarc_round_trip)],
        ["round_trip", format_seconds(est.round_trip)],
        ["one_way", format_seconds(est.one_way)],
    ]
    return rows


def _measure_plots(out: Path, m: Measurement) -> None:
    from .plots import Curve, write_plot

    tr = m.trace
    t_us = np.arange(len(tr)) / tr.sample_rate * 1e6
    write_plot(out / "trace.svg", [Curve(t_us, tr.samples)], f"Averaged trace ({tr.n_averages} acquisitions)",
               "time (us)", "ADC code")
    pr = m.profile
    write_plot(out / "profile.svg", [Curve(np.arange(len(pr)) / pr.sample_rate * 1e6, pr.values)],
               "Golay correlation profile", "lag (us)", "correlation")


def cmd_measure(args) -> int:
    scn = _scenario(args)
    out = _out_dir(args)
    m = Simulator(scn).measure(0, 0.0)
    _write_csv(out / "measure.csv", MEASURE_HEADER, measure_rows(m))
    _write_manifest(out, "measure", scn)
    if args.export_profile:
        _write_csv(out / "profile.csv", ("lag_seconds", "value"), profile_rows(m))
        _write_csv(out / "fit.csv", ("param", "value"), fit_rows(m))
    if args.svg:
        _measure_plots(out, m)
    e = m.estimate
    print(f"mode        {m.mode}")
    print(f"round_trip  {format_seconds(e.round_trip)} s")
    print(f"one_way     {format_seconds(e.one_way)} s")
    print(f"truth       {format_seconds(m.truth_one_way)} s")
    print(f"error       {m.error * 1e12:.3f} ps")
    return EXIT_OK


# -- series ------------------------------------------------------------------


def series_rows(result: SeriesResult, mode: str) -> tuple[list[list[str]], float]:
    s = result.series(mode)
    det = detrend_poly(s)
    rows = []
    for m, r in zip(result.select(mode), det.residuals):
        rows.append([str(m.index), format_seconds(m.t), format_seconds(m.estimate.one_way),
                     format_seconds(m.estimate.round_trip), f"{r * 1e12:.6f}"])
    return rows, det.residual_std


def cmd_series(args) -> int:
    scn = _scenario(args)
    if scn.series.count < MIN_SERIES_COUNT:
        raise ConfigError([f"series.count: a series needs at least {MIN_SERIES_COUNT} measurements"])
    if scn.series.compare and scn.series.count < MIN_COMPARE_COUNT:
        raise ConfigError([f"series.count: an interleaved series needs at least {MIN_COMPARE_COUNT} measurements"])
    out = _out_dir(args)
    result = Simulator(scn).run_series()
    modes = ["reflective", "transmissive"] if scn.series.compare else [scn.scenario.mode]
    extra = {}
    plot_curves = []
    for mode in modes:
        name = "series.csv" if mode == modes[0] else f"series-{mode}.csv"
        rows, std = series_rows(result, mode)
        _write_csv(out / name, SERIES_HEADER, rows)
        s = result.series(mode)
        y = s.latencies
        print(f"{mode:12s} n={len(s)} residual_std={std * 1e12:.3f} ps "
              f"peak_to_peak={(y.max() - y.min()) * 1e12:.3f} ps")
        extra[f"residual_std_ps_{mode}"] = f"{std * 1e12:.6f}"
        det = detrend_poly(s)
        tt = np.linspace(s.timestamps[0], s.timestamps[-1], 200)
        base = float(y.mean())
        plot_curves.append(_curve(s.timestamps / 60, (y - base) * 1e12, f"{mode} measurements", True))
        plot_curves.append(_curve(tt / 60, (det.trend(tt) - base) * 1e12, f"{mode} quartic trend", False))
    if scn.series.compare:
        off = series_offset(result.series("reflective"), result.series("transmissive"))
        print(f"offset reflective - transmissive: {off * 1e12:.3f} ps")
        extra["offset_ps"] = f"{off * 1e12:.6f}"
    _write_manifest(out, "series", scn, extra)
    if args.svg:
        from .plots import write_plot

        write_plot(out / "series.svg", plot_curves, "One-way latency series", "time (min)",
                   "one-way latency - mean (ps)")
    return EXIT_OK


def _curve(x, y, label, markers):
    from .plots import Curve

    return Curve(np.asarray(x), np.asarray(y), label, markers)


# -- clock-cal ---------------------------------------------------------------


def cmd_clock_cal(args) -> int:
    if args.periods < 1000:
        raise ConfigError([f"periods: at least 1000 periods are required, got {args.periods}"])
    if not abs(args.skew_ppm) < 100:
        raise ConfigError(["skew_ppm: |skew| must be < 100 ppm"])
    if not (args.freq > 0 and args.sample_rate > 2 * args.freq):
        raise ConfigError(["sample_rate: must exceed twice the reference frequency"])
    x = synthesize_reference(args.freq, args.periods, args.sample_rate, args.skew_ppm,
                             noise_rms=args.noise_rms, seed=args.seed or 0)
    n, duration = count_periods(x, args.sample_rate)
    ppm = estimate_clock_skew(x, args.freq, args.sample_rate)
    out = _out_dir(args)
    _write_csv(
        out / "clock-cal.csv",
        ("skew_ppm_applied", "nominal_hz", "periods", "duration_seconds", "estimated_ppm"),
        [[_num(args.skew_ppm), _num(args.freq), str(n), format_seconds(duration), f"{ppm:.6f}"]],
    )
    _write_manifest(out, "clock-cal", None, {
        "skew_ppm": repr(args.skew_ppm), "nominal_hz": repr(args.freq), "periods": str(args.periods),
        "sample_rate": repr(args.sample_rate), "noise_rms": repr(args.noise_rms), "seed": str(args.seed or 0),
    })
    print(f"periods    {n}")
    print(f"duration   {format_seconds(duration)} s ({duration * 1e3:.7f} ms)")
    print(f"estimate   {ppm:+.4f} ppm")
    return EXIT_OK


# -- budget ------------------------------------------------------------------


def budget_rows(args) -> list[tuple[str, float, str]]:
    fiber = FiberSpec(args.length_km * 1e3, args.group_index, thermal_coeff=args.thermal_ppm * 1e-6)
    latency = args.latency_us * 1e-6
    return [
        ("phase_latency_budget", phase_latency_budget(args.rf_ghz * 1e9, args.deg), "s"),
        ("thermal_sensitivity", thermal_sensitivity(fiber), "s/K"),
        ("clock_latency_error_ppm", clock_latency_error(latency, args.ppm * 1e-6), "s"),
        ("clock_latency_error_ppb", clock_latency_error(latency, args.ppb * 1e-9), "s"),
        ("skew_improvement_factor", skew_improvement_factor(args.old_ppm * 1e-6, args.new_ppb * 1e-9), ""),
    ]


def cmd_budget(args) -> int:
    rows = budget_rows(args)
    for name, value, unit in rows:
        if unit == "s":
            shown = f"{value * 1e12:.3f} ps"
        elif unit == "s/K":
            shown = f"{value * 1e9:.3f} ns/K"
        else:
            shown = f"x{value:.6g}"
        print(f"{name:26s} {shown}")
    target = args.out or os.environ.get("COTDR_OUT")
    if target:
        out = _out_dir(args)
        _write_csv(out / "budget.csv", ("quantity", "value", "unit"),
                   [(n, format_seconds(v) if u else _num(v), u) for n, v, u in rows])
        _write_manifest(out, "budget", None, {k: repr(getattr(args, k)) for k in (
            "rf_ghz", "deg", "latency_us", "ppm", "ppb", "old_ppm", "new_ppb",
            "length_km", "group_index", "thermal_ppm")})
    return EXIT_OK


def cmd_golay(args) -> int:
    if args.order < 0:
        raise ConfigError([f"order: must be >= 0, got {args.order}"])
    pair = generate_golay_pair(args.order)
    print(",".join(str(v) for v in pair.a.to_list()))
    print(",".join(str(v) for v in pair.b.to_list()))
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario config file")
    p.add_argument("--preset", help="desk-10km or paper-100km")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory (default: $COTDR_OUT or ./cotdr-out)")
    p.add_argument("--svg", action=argparse.BooleanOptionalAction, default=True, help="write SVG plots")
    p.add_argument("--max-samples", type=int, help="memory guard override, samples per waveform")
    p.add_argument("--workers", type=int, help="threads for trace averaging")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cotdr", description="Correlation OTDR fibre-latency simulator")
    ap.add_argument("--version", action="version", version=f"cotdr {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="one latency measurement")
    _add_common(p)
    p.add_argument("--mode", choices=("reflective", "transmissive"))
    p.add_argument("--export-profile", action="store_true",
                   help="also write profile.csv (samples around each peak) and fit.csv")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("series", help="repeated measurements with detrending")
    _add_common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--mode", choices=("reflective", "transmissive"))
    p.add_argument("--interleave", choices=("strict", "pairs"),
                   help="alternate reflective and single-pass runs")
    p.set_defaults(func=cmd_series)

    p = sub.add_parser("clock-cal", help="timebase skew from a recorded reference tone")
    p.add_argument("--skew-ppm", type=float, default=2.44)
    p.add_argument("--freq", type=float, default=10e6)
    p.add_argument("--periods", type=int, default=100_000)
    p.add_argument("--sample-rate", type=float, default=1e9)
    p.add_argument("--noise-rms", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_clock_cal)

    p = sub.add_parser("budget", help="latency error budget table")
    p.add_argument("--rf-ghz", type=float, default=26.0)
    p.add_argument("--deg", type=float, default=30.0)
    p.add_argument("--latency-us", type=float, default=500.0)
    p.add_argument("--ppm", type=float, default=1.0)
    p.add_argument("--ppb", type=float, default=5.0)
    p.add_argument("--old-ppm", type=float, default=2.5)
    p.add_argument("--new-ppb", type=float, default=5.0)
    p.add_argument("--length-km", type=float, default=100.0)
    p.add_argument("--group-index", type=float, default=1.4682)
    p.add_argument("--thermal-ppm", type=float, default=7.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("golay", help="print a Golay pair")
    p.add_argument("--order", type=int, required=True)
    p.set_defaults(func=cmd_golay)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except GolayError as exc:
        print(f"config error: golay: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (EstimatorError, ChannelError, FrontendError, ProbeError, AnalysisError) as exc:
        origin = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"pipeline error: {origin}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())

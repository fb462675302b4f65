"""Command-line runner: simulate links, analyze tag files and offsets, fit beta, plan links.

Exit codes: 0 success, 1 usage error, 2 data error (bad config, corrupt
file, degenerate input).  Every file written is accompanied by a
``<file>.manifest.json`` (``manifest.json`` for ``simulate``) holding the
resolved parameters needed to re-run the command.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, tagfile
from .analysis import AnalysisError, car_estimate, drift_stats, histogram, linear_fit
from .channel import ETA_S, QUANTUM_WAVELENGTH, RamanContext, beta_from_slope
from .config import ConfigError, ScenarioConfig, load_config
from .photonics import PS_PER_S
from .planner import PLAN_COLUMNS, CarModel, plan_csv, sweep
from .sync import ClockSpec, OffsetSeries, simulate_offsets
from .topology import TopologyError, scenario_build
from .units import dbm_to_watts, photon_energy

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

_UNITS_PS = {"ps": 1.0, "ns": 1e3, "us": 1e6, "ms": 1e9, "s": 1e12, "min": 6e13, "h": 3.6e15}
_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([a-z]*)\s*$")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class DataError(Exception):
    pass


def _time(default_unit: str):
    """argparse type: a number with optional ps/ns/us/ms/s/min/h suffix, returned in `default_unit`."""

    def parse(text: str) -> float:
        m = _QUANTITY.match(text)
        if not m or (m.group(2) and m.group(2) not in _UNITS_PS):
            raise argparse.ArgumentTypeError(f"not a time: {text!r}")
        try:
            value = float(m.group(1))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a time: {text!r}") from None
        unit = m.group(2) or default_unit
        return value * _UNITS_PS[unit] / _UNITS_PS[default_unit]

    return parse


def _lengths(text: str) -> list[float]:
    """Comma list ``1,2,5`` or linear range ``start:stop:count``."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return [float(x) for x in np.linspace(float(start), float(stop), int(count))]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad length list {text!r}") from None


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _versions() -> dict:
    return {"qcoexist": __version__, "numpy": np.__version__, "python": platform.python_version()}


def _write_manifest(path: Path, command: str, params: dict, outputs: dict[str, bytes]) -> None:
    doc = {
        "command": command,
        "parameters": params,
        "outputs": {name: {"sha256": _sha256(data), "bytes": len(data)} for name, data in outputs.items()},
        "versions": _versions(),
    }
    tagfile.atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _emit(path: str | None, text: str, command: str, params: dict) -> None:
    """Write `text` to `path` plus its manifest, or to stdout when no path is given."""
    if path is None:
        sys.stdout.write(text)
        return
    data = text.encode()
    tagfile.atomic_write(path, data)
    _write_manifest(Path(f"{path}.manifest.json"), command, params, {Path(path).name: data})


def _load(args) -> ScenarioConfig:
    return load_config(args.config)


def _config_params(args) -> dict:
    if args.config is None:
        return {"config": None}
    return {"config": str(args.config), "config_sha256": _sha256(Path(args.config).read_bytes())}


# ---------------------------------------------------------------- simulate

def _route_names(cfg: ScenarioConfig) -> dict[str, tuple[str, str]]:
    routes = (cfg.raw.get("topology") or {}).get("routes") or {}
    return {name: (r["from"], r["to"]) for name, r in routes.items()}


def _resolve_target(cfg: ScenarioConfig, target: str):
    """Scenario preset, route name, or ``FROM:TO`` node pair."""
    if target in cfg.scenarios:
        return cfg.scenarios[target].route, cfg.scenarios[target]
    names = _route_names(cfg)
    if target in names:
        return names[target], None
    for sep in ("->", ":"):
        if sep in target:
            src, dst = target.split(sep, 1)
            return (src, dst), None
    raise DataError(f"unknown scenario or route {target!r}; presets: {sorted(cfg.scenarios)}, routes: {sorted(names)}")


def _resolve_clock(cfg: ScenarioConfig, route, choice: str):
    if choice == "off":
        return False
    if choice == "on":
        return True
    return cfg.clock_for(route, choice)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    (src, dst), preset = _resolve_target(cfg, args.route)
    route = cfg.route(src, dst)
    clock_choice = args.clock or (preset.clock if preset else "off")
    duration_s = args.duration if args.duration is not None else (preset.duration_s if preset else 60.0)
    seed = args.seed if args.seed is not None else (preset.seed if preset else 0)
    if duration_s < 0:
        raise DataError("--duration must be non-negative")
    node = cfg.topology.node(dst)
    if len(node.detectors) < 2:
        raise DataError(f"node {dst!r} has fewer than two detectors")
    scenario = scenario_build(
        route,
        cfg.source,
        _resolve_clock(cfg, route, clock_choice),
        duration_s * PS_PER_S,
        seed,
        detectors=(node.detectors[0], node.detectors[1]),
        tagger=node.tagger,
        delta_lambda=cfg.delta_lambda_nm,
    )
    a, b = scenario.run()
    out = Path(args.out_dir)
    outputs = {}
    for name, stream in (("detector_a.qtt", a), ("detector_b.qtt", b)):
        data = tagfile.encode(tagfile.TagFile(1, tagfile.make_records({0: stream})))
        tagfile.atomic_write(out / name, data)
        outputs[name] = data
    params = {
        **_config_params(args),
        "target": args.route,
        "route": [src, dst],
        "clock": clock_choice,
        "duration_s": duration_s,
        "seed": seed,
        "scenario": scenario.describe(),
        "predicted_car": scenario.predicted_car(cfg.analysis.window_ps),
        "counts": {"detector_a.qtt": int(a.size), "detector_b.qtt": int(b.size)},
    }
    _write_manifest(out / "manifest.json", "simulate", params, outputs)
    print(f"wrote {a.size} + {b.size} tags to {out} (route {src}->{dst}, clock {clock_choice}, "
          f"{duration_s:g} s, seed {seed})")
    return EXIT_OK


def cmd_simulate_offsets(args) -> int:
    cfg = _load(args)
    if args.clock is None:
        clk = ClockSpec()
    elif args.clock in cfg.clocks:
        clk = cfg.clocks[args.clock]
    else:
        raise DataError(f"unknown clock {args.clock!r}; known: {sorted(cfg.clocks)}")
    series = simulate_offsets(clk, cfg.drift, args.duration, args.sample_period, args.seed)
    params = {**_config_params(args), "clock": args.clock, "duration_s": args.duration,
              "sample_period_s": args.sample_period, "seed": args.seed}
    _emit(args.out, series.to_csv(), "simulate-offsets", params)
    return EXIT_OK


# ---------------------------------------------------------------- analyze

def cmd_analyze_car(args) -> int:
    ta, tb = tagfile.read(args.a), tagfile.read(args.b)
    h = histogram(ta.channel(args.channel_a), tb.channel(args.channel_b), args.bin_width, args.range)
    res = car_estimate(h, args.window, args.period, args.peaks, args.center)
    if args.json:
        print(res.to_json())
    else:
        print(f"CAR = {res.car:.4g} +/- {res.sigma_car:.2g}  (C = {res.C}, A = {res.A:.4g}, "
              f"window {res.window:g} ps at {res.center_offset:g} ps, {res.peaks_used} accidental windows)")
    if args.csv:
        params = {"a": str(args.a), "b": str(args.b), "a_sha256": _sha256(Path(args.a).read_bytes()),
                  "b_sha256": _sha256(Path(args.b).read_bytes()), "channel_a": args.channel_a,
                  "channel_b": args.channel_b, "bin_width_ps": args.bin_width, "range_ps": args.range,
                  "window_ps": args.window, "period_ps": args.period, "peaks": args.peaks, "center_ps": args.center,
                  "result": json.loads(res.to_json())}
        _emit(args.csv, h.to_csv(), "analyze car", params)
    return EXIT_OK


def cmd_analyze_sync(args) -> int:
    series = OffsetSeries.from_csv(Path(args.offsets).read_text())
    stats = drift_stats(series, args.bin)
    print(f"sigma = {stats.sigma:.4g} ps, peak-to-peak of {args.bin:g} s means = {stats.peak_to_peak:.4g} ps "
          f"over {stats.means.size} bins", file=sys.stderr if args.csv is None else sys.stdout)
    params = {"offsets": str(args.offsets), "offsets_sha256": _sha256(Path(args.offsets).read_bytes()),
              "bin_s": args.bin, "sigma_ps": stats.sigma, "peak_to_peak_ps": stats.peak_to_peak}
    _emit(args.csv, stats.to_csv(), "analyze sync", params)
    return EXIT_OK


# ---------------------------------------------------------------- fit-beta

def read_points(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Parse ``P0_mW,rate_hz[,rate_sigma_hz]`` rows; a header row is optional."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    if len(rows) < 2:
        raise DataError("fit-beta needs at least two points")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() not in (2, 3):
        raise DataError("points must have 2 or 3 columns: P0_mW, rate_hz[, rate_sigma_hz]")
    try:
        arr = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"bad number in points: {exc}") from None
    return arr[:, 0], arr[:, 1], arr[:, 2] if arr.shape[1] == 3 else None


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def fit_beta(p0_mw, rate_hz, rate_sigma, fiber, band: str, delta_lambda: float, eta_s: float | None = None):
    """Recover beta from a launch-power sweep of detected Raman count rates."""
    e = photon_energy(QUANTUM_WAVELENGTH)
    x = np.asarray(p0_mw) * 1e-3
    fit = linear_fit(x, np.asarray(rate_hz) * e, None if rate_sigma is None else np.asarray(rate_sigma) * e)
    slope_sigma = fit.slope_sigma if math.isfinite(fit.slope_sigma) else 0.0
    ctx = RamanContext(delta_lambda, ETA_S[band] if eta_s is None else eta_s)
    beta = beta_from_slope(max(fit.slope, 0.0), ctx, fiber.length_km, fiber.alpha("C"), fiber.alpha(band), slope_sigma)
    return beta, fit


def cmd_fit_beta(args) -> int:
    cfg = _load(args)
    if args.link not in cfg.catalog:
        raise DataError(f"unknown catalog link {args.link!r}; known: {sorted(cfg.catalog)}")
    fiber = cfg.catalog[args.link]
    if args.length is not None:
        fiber = fiber.with_length(args.length)
    p0, rate, sigma = read_points(Path(args.points).read_text())
    beta, fit = fit_beta(p0, rate, sigma, fiber, args.band, args.delta_lambda or cfg.delta_lambda_nm, args.eta_s)
    out = {"beta": beta.beta, "beta_sigma": beta.uncertainty, "slope": fit.slope, "slope_sigma": fit.slope_sigma,
           "intercept_W": fit.intercept, "r_squared": fit.r_squared, "link": args.link, "band": args.band,
           "length_km": fiber.length_km, "points": int(p0.size)}
    if args.json:
        print(json.dumps(out, sort_keys=True))
    else:
        print(f"beta = {beta.beta:.4e} +/- {beta.uncertainty:.2e} nm^-1 km^-1  "
              f"({args.link}, {args.band}-band pump, {p0.size} points, r^2 = {fit.r_squared:.5f})")
    return EXIT_OK


# ---------------------------------------------------------------- plan

def cmd_plan(args) -> int:
    cfg = _load(args)
    pl = cfg.planner
    lengths = args.lengths if args.lengths is not None else list(pl.lengths_km)
    rx_min = dbm_to_watts(args.rx_min) if args.rx_min is not None else pl.rx_min
    duty = args.duty if args.duty is not None else pl.duty_cycle
    link = args.link or pl.link
    bands = [b.strip() for b in args.band.split(",") if b.strip()]
    for b in bands:
        if b not in ("O", "L"):
            raise DataError(f"unknown pump band {b!r}")
    det = next(iter(cfg.detectors.values())) if cfg.detectors else None
    jitter = math.hypot(det.jitter_sigma if det else 0.0, cfg.tagger.jitter_sigma)
    model = CarModel(
        mu=cfg.source.mean_pairs_per_pulse, eta1=pl.eta1, eta2=pl.eta2,
        dark1=pl.dark_rate_hz, dark2=pl.dark_rate_hz, window=cfg.analysis.window_ps,
        peak_sigma=math.sqrt(2 * cfg.source.photon_sigma**2 + 2 * jitter**2),
    )

    def run(band):
        return sweep(lengths, link, band, rx_min, pl.delta_lambda_nm, model=model, duty_cycle=duty)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(run, bands))
    points = sorted((p for r in results for p in r), key=lambda p: (p.length_km, bands.index(p.band)))
    params = {**_config_params(args), "link": link, "bands": bands, "lengths_km": lengths,
              "rx_min_dbm": rx_min.dbm, "duty_cycle": duty, "model": vars(model)}
    _emit(args.csv, plan_csv(points), "plan", params)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qcoexist", description=__doc__.split("\n")[0],
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", type=Path, help="YAML overlay on the bundled defaults")

    s = sub.add_parser("simulate", help="simulate a route and write one tag file per detector",
                       description="Writes detector_a.qtt (coexistence arm), detector_b.qtt and manifest.json.")
    with_config(s)
    s.add_argument("--route", "--scenario", dest="route", required=True,
                   help="scenario preset (e.g. anl-o-band), route name, or FROM:TO node pair")
    s.add_argument("--clock", choices=("on", "off", "O", "L"),
                   help="clock state; 'on' uses the route default, O/L pick a band (default: preset's, else off)")
    s.add_argument("--duration", type=_time("s"), help="simulated time, s unless suffixed (default: preset's)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("simulate-offsets", help="simulate recovered-clock offsets",
                       description="CSV columns: time_s, offset_ps.")
    with_config(s)
    s.add_argument("--clock", help="named clock from the config (default: built-in clock)")
    s.add_argument("--duration", type=_time("s"), default=14 * 3600.0)
    s.add_argument("--sample-period", type=_time("s"), default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output CSV (default stdout)")
    s.set_defaults(func=cmd_simulate_offsets)

    a = sub.add_parser("analyze", help="analyze tag files or offset series")
    asub = a.add_subparsers(dest="analysis", required=True)
    c = asub.add_parser("car", help="coincidence-to-accidental ratio of two tag files",
                        description="Histogram CSV columns: bin_center_ps, counts.")
    c.add_argument("--a", required=True, help="tag file of the reference arm")
    c.add_argument("--b", required=True, help="tag file of the other arm")
    c.add_argument("--channel-a", type=int, default=0)
    c.add_argument("--channel-b", type=int, default=0)
    c.add_argument("--window", type=_time("ps"), default=450.0)
    c.add_argument("--period", type=_time("ps"), default=5000.0)
    c.add_argument("--peaks", type=int, default=10, help="accidental peaks per side")
    c.add_argument("--center", type=_time("ps"), help="main-peak position (default: located automatically)")
    c.add_argument("--bin-width", type=int, default=10, help="ps")
    c.add_argument("--range", type=int, default=60_000, help="ps either side of zero")
    c.add_argument("--csv", help="write the histogram here")
    c.add_argument("--json", action="store_true", help="print the result as JSON")
    c.set_defaults(func=cmd_analyze_car)
    y = asub.add_parser("sync", help="drift statistics of an offset series",
                        description="Input CSV: time_s, offset_ps.  Output CSV: bin_start_s, mean_ps, rms_ps.")
    y.add_argument("--offsets", required=True)
    y.add_argument("--bin", type=_time("s"), default=100.0)
    y.add_argument("--csv", help="output CSV (default stdout)")
    y.set_defaults(func=cmd_analyze_sync)

    f = sub.add_parser("fit-beta", help="fit the Raman coefficient from a launch-power sweep",
                       description="Points CSV: P0_mW, rate_hz[, rate_sigma_hz]; header optional.")
    with_config(f)
    f.add_argument("--points", required=True)
    f.add_argument("--link", required=True, help="catalog fiber")
    f.add_argument("--band", required=True, choices=("O", "L"), help="pump band")
    f.add_argument("--length", type=float, help="override fiber length, km")
    f.add_argument("--delta-lambda", type=float, help="filter bandwidth, nm")
    f.add_argument("--eta-s", type=float, help="excess-loss factor (default: per band)")
    f.add_argument("--json", action="store_true")
    f.set_defaults(func=cmd_fit_beta)

    pl = sub.add_parser("plan", help="minimum clock power, Raman noise and CAR versus length",
                        description="CSV columns: " + ", ".join(PLAN_COLUMNS) + ".")
    with_config(pl)
    pl.add_argument("--link", help="catalog link (default: planner.link)")
    pl.add_argument("--lengths", type=_lengths, help="'1,2,5' or 'start:stop:count' km")
    pl.add_argument("--band", default="O,L", help="pump bands, comma separated")
    pl.add_argument("--rx-min", type=float, help="receiver sensitivity, dBm")
    pl.add_argument("--duty", type=float, help="clock duty cycle")
    pl.add_argument("--csv", help="output CSV (default stdout)")
    pl.add_argument("--jobs", type=int, default=1, help="parallel sweeps")
    pl.set_defaults(func=cmd_plan)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ConfigError, tagfile.CodecError, AnalysisError, TopologyError,
            ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"qcoexist: error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Scenario configuration.

The bundled ``default.yaml`` holds every physical default and the named
presets.  A user file is an overlay: its mappings are merged key by key on
top of the defaults, and any key the schema does not know is rejected with
the line it appears on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping

import yaml

from .channel import FiberSpec, RamanCoefficient
from .photonics import DetectorSpec, PairSourceSpec, TaggerSpec
from .sync import ClockSpec, DriftModel
from .topology import Node, Route, Topology, TopologyError, resolve_route
from .units import Attenuation, Power, Wavelength, dbm_to_watts


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.source = source
        self.line = line


# ---------------------------------------------------------------- yaml + marks

def _compose(text: str, source: str) -> tuple[Any, dict]:
    """Parse YAML keeping the 1-based line of every mapping key."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", source,
                          mark.line + 1 if mark else None) from None
    lines: dict[tuple, int] = {}
    if node is None:
        return {}, lines

    def walk(n, path):
        if isinstance(n, yaml.MappingNode):
            out = {}
            for k, v in n.value:
                key = k.value
                lines[path + (key,)] = k.start_mark.line + 1
                out[key] = walk(v, path + (key,))
            return out
        if isinstance(n, yaml.SequenceNode):
            lines.setdefault(path, n.start_mark.line + 1)
            return [walk(v, path + (i,)) for i, v in enumerate(n.value)]
        loader = yaml.SafeLoader("")
        try:
            return loader.construct_object(n, deep=True)
        finally:
            loader.dispose()

    return walk(node, ()), lines


def _merge(base: Any, over: Any) -> Any:
    if isinstance(base, dict) and isinstance(over, dict):
        out = dict(base)
        for k, v in over.items():
            out[k] = _merge(base[k], v) if k in base else v
        return out
    return over


# ---------------------------------------------------------------- typed views

@dataclass(frozen=True)
class AnalysisConfig:
    bin_width_ps: int = 10
    range_ps: int = 60_000
    window_ps: float = 450.0
    accidental_peaks: int = 10
    drift_bin_s: float = 100.0


@dataclass(frozen=True)
class PlannerConfig:
    link: str = "ANL"
    rx_min: Power = field(default_factory=lambda: dbm_to_watts(-40.0))
    delta_lambda_nm: float = 0.03
    lengths_km: tuple[float, ...] = (1.0, 100.0)
    duty_cycle: float = 0.5
    eta1: float = 0.8
    eta2: float = 0.8
    dark_rate_hz: float = 0.0


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    route: tuple[str, str]
    clock: str  # "off", "on", or a band label "O" / "L"
    duration_s: float = 60.0
    seed: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    source: PairSourceSpec
    detectors: Mapping[str, DetectorSpec]
    tagger: TaggerSpec
    clocks: Mapping[str, ClockSpec]
    drift: DriftModel
    catalog: Mapping[str, FiberSpec]
    topology: Topology
    route_clocks: Mapping[tuple[str, str], Mapping[str, ClockSpec]]
    analysis: AnalysisConfig
    planner: PlannerConfig
    scenarios: Mapping[str, ScenarioPreset]
    delta_lambda_nm: float
    raw: dict = field(repr=False, default_factory=dict)

    def route(self, source: str, destination: str) -> Route:
        return resolve_route(self.topology, source, destination)

    def clock_for(self, route: Route, band: str) -> ClockSpec:
        """The route's configured clock for a pump band."""
        clocks = self.route_clocks.get((route.source, route.destination), {})
        if band not in clocks:
            raise TopologyError(f"route {route.source}->{route.destination} has no {band}-band clock configured")
        return clocks[band]


# ---------------------------------------------------------------- schema

def _num(v, lo=None, hi=None, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    if integer and not float(v).is_integer():
        raise ValueError(f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {v!r}")
    if lo is not None and v < lo:
        raise ValueError(f"must be >= {lo}, got {v!r}")
    if hi is not None and v > hi:
        raise ValueError(f"must be <= {hi}, got {v!r}")
    return int(v) if integer else float(v)


def _str(v):
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


SCHEMAS: dict[str, dict[str, Callable]] = {
    "source": {
        "pulse_period_ps": lambda v: _num(v, 0),
        "mean_pairs_per_pulse": lambda v: _num(v, 0, 1),
        "photon_sigma_ps": lambda v: _num(v, 0),
        "wavelength_nm": lambda v: _num(v, 0),
    },
    "detector": {
        "efficiency": lambda v: _num(v, 0, 1),
        "jitter_sigma_ps": lambda v: _num(v, 0),
        "dark_rate_hz": lambda v: _num(v, 0),
        "dead_time_ps": lambda v: _num(v, 0),
    },
    "tagger": {
        "jitter_sigma_ps": lambda v: _num(v, 0),
        "resolution_ps": lambda v: _num(v, 1, integer=True),
    },
    "clock": {
        "band_nm": lambda v: _num(v, 0),
        "average_power_mw": lambda v: _num(v, 0),
        "peak_power_mw": lambda v: _num(v, 0),
        "duty_cycle": lambda v: _num(v, 0, 1),
        "frequency_hz": lambda v: _num(v, 0),
        "pulse_width_ps": lambda v: _num(v, 0),
        "rx_min_dbm": lambda v: _num(v),
        "jitter_sigma_ps": lambda v: _num(v, 0),
    },
    "drift": {
        "random_walk_sigma_ps_per_sqrt_s": lambda v: _num(v, 0),
        "sinusoid_amplitude_ps": lambda v: _num(v, 0),
        "sinusoid_period_s": lambda v: _num(v, 0),
        "sinusoid_phase_rad": lambda v: None if v is None else _num(v),
    },
    "fiber": {
        "length_km": lambda v: _num(v, 0),
        "alpha_per_km": dict,
        "beta_per_nm_km": dict,
        "group_index": lambda v: _num(v, 1),
    },
    "node": {
        "role": _str,
        "detectors": list,
    },
    "route": {
        "from": _str,
        "to": _str,
        "quantum_fiber": _str,
        "coexistence_fiber": _str,
        "clocks": dict,
        "default_clock": _str,
        "insertion_loss_db": lambda v: _num(v, 0),
        "coexistence_extra_loss_db": lambda v: _num(v, 0),
    },
    "analysis": {
        "bin_width_ps": lambda v: _num(v, 1, integer=True),
        "range_ps": lambda v: _num(v, 1, integer=True),
        "window_ps": lambda v: _num(v, 0),
        "accidental_peaks": lambda v: _num(v, 1, integer=True),
        "drift_bin_s": lambda v: _num(v, 0),
    },
    "planner": {
        "link": _str,
        "rx_min_dbm": lambda v: _num(v),
        "lengths_km": list,
        "duty_cycle": lambda v: _num(v, 0, 1),
        "eta1": lambda v: _num(v, 0, 1),
        "eta2": lambda v: _num(v, 0, 1),
        "dark_rate_hz": lambda v: _num(v, 0),
    },
    "scenario": {
        "route": list,
        "clock": _str,
        "duration_s": lambda v: _num(v, 0),
        "seed": lambda v: _num(v, 0, integer=True),
    },
}

TOP_LEVEL = {
    "source": "source",
    "detectors": "detector*",
    "tagger": "tagger",
    "clocks": "clock*",
    "drift": "drift",
    "catalog": "fiber*",
    "topology": None,
    "analysis": "analysis",
    "planner": "planner",
    "scenarios": "scenario*",
    "delta_lambda_nm": None,
}


class _Checker:
    def __init__(self, lines: dict, source: str):
        self.lines = lines
        self.source = source

    def line(self, path) -> tuple[str, int | None]:
        path = tuple(path)
        while path:
            if path in self.lines:
                mark = self.lines[path]
                return mark if isinstance(mark, tuple) else (self.source, mark)
            path = path[:-1]
        return self.source, None

    def fail(self, path, msg):
        raise ConfigError(msg, *self.line(path))

    def section(self, data, path, schema_name) -> dict:
        if not isinstance(data, dict):
            self.fail(path, f"section {'.'.join(map(str, path))} must be a mapping")
        schema = SCHEMAS[schema_name]
        out = {}
        for key, value in data.items():
            if key not in schema:
                self.fail(path + (key,), f"unknown key {key!r} in {'.'.join(map(str, path))}")
            conv = schema[key]
            try:
                if conv in (dict, list):
                    if not isinstance(value, conv):
                        raise ValueError(f"expected a {conv.__name__}")
                    out[key] = value
                else:
                    out[key] = conv(value)
            except ValueError as exc:
                self.fail(path + (key,), f"{'.'.join(map(str, path + (key,)))}: {exc}")
        return out


def _bundled_text() -> str:
    return resources.files("qcoexist").joinpath("data/default.yaml").read_text()


def load_config(path: str | Path | None = None, text: str | None = None) -> ScenarioConfig:
    """Defaults plus an optional overlay from `path` (or literal `text`)."""
    base, base_lines = _compose(_bundled_text(), "<bundled default.yaml>")
    raw = base
    lines = dict(base_lines)
    source = "<bundled default.yaml>"
    if path is not None or text is not None:
        source = str(path) if path is not None else "<config>"
        if text is None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc.strerror}", source) from None
        over, over_lines = _compose(text, source)
        if not isinstance(over, dict):
            raise ConfigError("config file must be a mapping of sections", source, 1)
        chk = _Checker(over_lines, source)
        for key in over:
            if key not in TOP_LEVEL:
                chk.fail((key,), f"unknown top-level section {key!r}")
        raw = _merge(base, over)
        lines = {k: ("<bundled default.yaml>", v) for k, v in lines.items()}
        lines.update({k: (source, v) for k, v in over_lines.items()})
    return _build(raw, _Checker(lines, source))


def _build(raw: dict, chk: _Checker) -> ScenarioConfig:
    for key in raw:
        if key not in TOP_LEVEL:
            chk.fail((key,), f"unknown top-level section {key!r}")

    s = chk.section(raw.get("source", {}), ("source",), "source")
    try:
        source = PairSourceSpec(
            pulse_period=s.get("pulse_period_ps", 5000.0),
            mean_pairs_per_pulse=s.get("mean_pairs_per_pulse", 0.02),
            photon_sigma=s.get("photon_sigma_ps", PairSourceSpec().photon_sigma),
            wavelength=Wavelength(s.get("wavelength_nm", 1536.0)),
        )
    except ValueError as exc:
        chk.fail(("source",), str(exc))

    detectors = {}
    for name, d in (raw.get("detectors") or {}).items():
        d = chk.section(d, ("detectors", name), "detector")
        detectors[name] = _make(chk, ("detectors", name), DetectorSpec,
                                efficiency=d.get("efficiency", 0.8),
                                jitter_sigma=d.get("jitter_sigma_ps", DetectorSpec().jitter_sigma),
                                dark_rate=d.get("dark_rate_hz", 100.0),
                                dead_time=d.get("dead_time_ps", 0.0))

    t = chk.section(raw.get("tagger", {}), ("tagger",), "tagger")
    tagger = _make(chk, ("tagger",), TaggerSpec,
                   jitter_sigma=t.get("jitter_sigma_ps", TaggerSpec().jitter_sigma),
                   resolution=t.get("resolution_ps", 1))

    clocks = {}
    for name, c in (raw.get("clocks") or {}).items():
        path = ("clocks", name)
        c = chk.section(c, path, "clock")
        duty = c.get("duty_cycle", 0.5)
        if ("average_power_mw" in c) == ("peak_power_mw" in c):
            chk.fail(path, f"clock {name!r} needs exactly one of average_power_mw / peak_power_mw")
        peak = c["peak_power_mw"] if "peak_power_mw" in c else c["average_power_mw"] / duty
        clocks[name] = _make(chk, path, ClockSpec,
                             peak_power=Power.from_mw(peak),
                             band=Wavelength(c.get("band_nm", 1310.0)),
                             frequency=c.get("frequency_hz", 2e8),
                             pulse_width=c.get("pulse_width_ps", 2500.0),
                             duty_cycle=duty,
                             rx_min_power=dbm_to_watts(c.get("rx_min_dbm", -40.0)),
                             jitter_sigma=c.get("jitter_sigma_ps", 2.2))

    dr = chk.section(raw.get("drift", {}), ("drift",), "drift")
    default_drift = DriftModel()
    drift = _make(chk, ("drift",), DriftModel,
                  random_walk_sigma=dr.get("random_walk_sigma_ps_per_sqrt_s", default_drift.random_walk_sigma),
                  sinusoid_amplitude=dr.get("sinusoid_amplitude_ps", default_drift.sinusoid_amplitude),
                  sinusoid_period=dr.get("sinusoid_period_s", default_drift.sinusoid_period),
                  sinusoid_phase=dr.get("sinusoid_phase_rad"))

    catalog = {}
    for name, f in (raw.get("catalog") or {}).items():
        path = ("catalog", name)
        f = chk.section(f, path, "fiber")
        alphas, betas = {}, {}
        for band, a in (f.get("alpha_per_km") or {}).items():
            alphas[band] = _make(chk, path + ("alpha_per_km", band), Attenuation, alpha_natural=_conv(chk, path + ("alpha_per_km", band), a, lambda v: _num(v, 0)))
        for band, b in (f.get("beta_per_nm_km") or {}).items():
            bp = path + ("beta_per_nm_km", band)
            if not (isinstance(b, list) and len(b) == 2):
                chk.fail(bp, "beta entries are [value, uncertainty] pairs")
            betas[band] = _make(chk, bp, RamanCoefficient,
                                beta=_conv(chk, bp, b[0], lambda v: _num(v, 0)),
                                uncertainty=_conv(chk, bp, b[1], lambda v: _num(v, 0)))
        if "length_km" not in f:
            chk.fail(path, f"fiber {name!r} needs length_km")
        catalog[name] = _make(chk, path, FiberSpec, length_km=f["length_km"], alpha_by_band=alphas,
                              beta_by_pump=betas, group_index=f.get("group_index", 1.468), name=name)

    topology, route_clocks = _build_topology(raw.get("topology") or {}, chk, detectors, tagger, clocks, catalog)

    a = chk.section(raw.get("analysis", {}), ("analysis",), "analysis")
    analysis = AnalysisConfig(**{k: v for k, v in a.items()})
    if analysis.range_ps % analysis.bin_width_ps:
        chk.fail(("analysis", "range_ps"), "analysis.range_ps must be a multiple of bin_width_ps")

    p = chk.section(raw.get("planner", {}), ("planner",), "planner")
    lengths = tuple(_conv(chk, ("planner", "lengths_km"), x, lambda v: _num(v, 0)) for x in p.get("lengths_km", [1.0, 100.0]))
    planner = PlannerConfig(
        link=p.get("link", "ANL"),
        rx_min=dbm_to_watts(p.get("rx_min_dbm", -40.0)),
        lengths_km=lengths,
        delta_lambda_nm=float(raw.get("delta_lambda_nm", 0.03)),
        duty_cycle=p.get("duty_cycle", 0.5),
        eta1=p.get("eta1", 0.8),
        eta2=p.get("eta2", 0.8),
        dark_rate_hz=p.get("dark_rate_hz", 0.0),
    )

    scenarios = {}
    for name, sc in (raw.get("scenarios") or {}).items():
        path = ("scenarios", name)
        sc = chk.section(sc, path, "scenario")
        route = sc.get("route")
        if not (isinstance(route, list) and len(route) == 2 and all(isinstance(x, str) for x in route)):
            chk.fail(path + ("route",), "scenario route must be [from, to]")
        clock = sc.get("clock", "off")
        if clock not in ("off", "on", "O", "L"):
            chk.fail(path + ("clock",), "scenario clock must be off, on, O or L")
        try:
            r = resolve_route(topology, *route)
        except TopologyError as exc:
            chk.fail(path + ("route",), exc.args[0])
        if clock in ("O", "L") and clock not in route_clocks.get((r.source, r.destination), {}):
            chk.fail(path + ("clock",), f"route {route[0]}->{route[1]} has no {clock}-band clock")
        scenarios[name] = ScenarioPreset(name, tuple(route), clock, sc.get("duration_s", 60.0), sc.get("seed", 0))

    dl = raw.get("delta_lambda_nm", 0.03)
    dl = _conv(chk, ("delta_lambda_nm",), dl, lambda v: _num(v, 0))
    if dl <= 0:
        chk.fail(("delta_lambda_nm",), "delta_lambda_nm must be positive")

    return ScenarioConfig(source, detectors, tagger, clocks, drift, catalog, topology, route_clocks,
                          analysis, planner, scenarios, dl, raw)


def _conv(chk, path, v, fn):
    try:
        return fn(v)
    except ValueError as exc:
        chk.fail(path, f"{'.'.join(map(str, path))}: {exc}")


def _make(chk, path, cls, **kw):
    try:
        return cls(**kw)
    except (ValueError, KeyError) as exc:
        chk.fail(path, f"{'.'.join(map(str, path))}: {exc.args[0] if exc.args else exc}")


def _build_topology(raw, chk, detectors, tagger, clocks, catalog):
    if not isinstance(raw, dict):
        chk.fail(("topology",), "topology must be a mapping")
    for key in raw:
        if key not in ("nodes", "routes"):
            chk.fail(("topology", key), f"unknown key {key!r} in topology")
    nodes = {}
    for name, n in (raw.get("nodes") or {}).items():
        path = ("topology", "nodes", name)
        n = chk.section(n, path, "node")
        dets = []
        for i, d in enumerate(n.get("detectors", [])):
            if d not in detectors:
                chk.fail(path + ("detectors",), f"node {name!r} references unknown detector {d!r}")
            dets.append(detectors[d])
        nodes[name] = _make(chk, path, Node, name=name, role=n.get("role", "end-node"), detectors=tuple(dets), tagger=tagger)

    routes, route_clocks = {}, {}
    for rname, r in (raw.get("routes") or {}).items():
        path = ("topology", "routes", rname)
        r = chk.section(r, path, "route")
        for key in ("from", "to", "quantum_fiber", "coexistence_fiber"):
            if key not in r:
                chk.fail(path, f"route {rname!r} needs {key}")
        for end in ("from", "to"):
            if r[end] not in nodes:
                chk.fail(path + (end,), f"route {rname!r} references unknown node {r[end]!r}")
        fibers = []
        for key in ("quantum_fiber", "coexistence_fiber"):
            if r[key] not in catalog:
                chk.fail(path + (key,), f"route {rname!r} references unknown fiber {r[key]!r}")
            fibers.append(catalog[r[key]])
        band_clocks = {}
        for band, cname in (r.get("clocks") or {}).items():
            if cname not in clocks:
                chk.fail(path + ("clocks", band), f"route {rname!r} references unknown clock {cname!r}")
            if clocks[cname].band_label != band:
                chk.fail(path + ("clocks", band), f"clock {cname!r} is not an {band}-band clock")
            band_clocks[band] = clocks[cname]
        default = r.get("default_clock")
        if default is not None and default not in band_clocks:
            chk.fail(path + ("default_clock",), f"default_clock {default!r} is not one of the route's clock bands")
        key = (r["from"], r["to"])
        if key in routes:
            chk.fail(path, f"duplicate route {r['from']}->{r['to']}")
        routes[key] = _make(chk, path, Route,
                            source=r["from"], destination=r["to"],
                            quantum_fiber=fibers[0], coexistence_fiber=fibers[1],
                            clock=band_clocks.get(default) if default else None,
                            insertion_loss_db=r.get("insertion_loss_db", 1.0),
                            coexistence_extra_loss_db=r.get("coexistence_extra_loss_db", 0.0))
        route_clocks[key] = band_clocks
    try:
        topo = Topology(nodes, routes)
    except (ValueError, KeyError) as exc:
        chk.fail(("topology",), exc.args[0])
    return topo, route_clocks

from __future__ import annotations

import math

import numpy as np
import pytest

from qcoexist.analysis import car_estimate, car_predict, histogram
from qcoexist.channel import RamanContext, catalog_fiber, raman_count_rate
from qcoexist.config import load_config
from qcoexist.photonics import DetectorSpec, PairSourceSpec, TaggerSpec
from qcoexist.sync import ClockSpec
from qcoexist.topology import Node, Route, Topology, TopologyError, resolve_route, scenario_build
from qcoexist.units import Power, Wavelength


@pytest.fixture(scope="module")
def cfg():
    return load_config()


def test_resolve_bundled_routes(cfg):
    r = resolve_route(cfg.topology, "FNAL-FCC", "ANL")
    assert r.quantum_fiber.length_km == 57 and r.coexistence_fiber.length_km == 57
    loop = resolve_route(cfg.topology, "FNAL-FCC", "FNAL-FCC")
    assert loop.is_loopback and loop.quantum_fiber.length_km == 0 and loop.clock is None
    with pytest.raises(TopologyError):
        resolve_route(cfg.topology, "FNAL-FCC", "nowhere")
    with pytest.raises(TopologyError):
        resolve_route(cfg.topology, "ANL", "FNAL-DAB")


def test_clock_off_background_is_dark_only(cfg):
    route = cfg.route("FNAL-FCC", "ANL")
    sc = scenario_build(route, cfg.source, False, 1e12, 1)
    assert sc.raman_rate == 0 and sc.arm_a.noise_rate == sc.arm_a.detector.dark_rate


def test_clock_on_adds_raman_rate(cfg):
    route = cfg.route("FNAL-FCC", "ANL")
    sc = scenario_build(route, cfg.source, True, 1e12, 1)
    fiber = catalog_fiber("ANL")
    expected = raman_count_rate(Power.from_mw(1.8), fiber.beta("O"), RamanContext.for_band("O"), 57,
                                fiber.alpha("C"), fiber.alpha("O"))
    assert sc.raman_rate == pytest.approx(expected, rel=1e-12)
    assert sc.arm_a.noise_rate == pytest.approx(DetectorSpec().dark_rate + expected, rel=1e-12)
    assert sc.arm_b.background_rate == 0.0


def test_explicit_clock_and_missing_clock(cfg):
    route = cfg.route("FNAL-FCC", "ANL")
    l_clock = cfg.clock_for(route, "L")
    sc = scenario_build(route, cfg.source, l_clock, 1e12, 1)
    assert sc.clock.band_label == "L"
    loop = cfg.route("FNAL-FCC", "FNAL-FCC")
    with pytest.raises(TopologyError):
        scenario_build(loop, cfg.source, True, 1e12, 1)


def test_clock_off_ignores_route_clock(cfg):
    route = cfg.route("FNAL-FCC", "FNAL-DAB")
    other = Route(route.source, route.destination, route.quantum_fiber, route.coexistence_fiber,
                  clock=ClockSpec.with_average_power(5e-3, band=Wavelength(1610)),
                  coexistence_extra_loss_db=route.coexistence_extra_loss_db)
    a1, b1 = scenario_build(route, cfg.source, False, 2e10, 7).run()
    a2, b2 = scenario_build(other, cfg.source, False, 2e10, 7).run()
    assert a1.tobytes() == a2.tobytes() and b1.tobytes() == b2.tobytes()


def test_zero_duration_gives_empty_streams(cfg):
    a, b = scenario_build(cfg.route("FNAL-FCC", "ANL"), cfg.source, True, 0.0, 1).run()
    assert a.size == 0 and b.size == 0


def test_loopback_is_background_free_configuration(cfg):
    src = PairSourceSpec(mean_pairs_per_pulse=0.02)
    quiet = DetectorSpec(dark_rate=0.0)
    sc = scenario_build(cfg.route("FNAL-FCC", "FNAL-FCC"), src, False, 5e10, 3, detectors=(quiet, quiet))
    a, b = sc.run()
    r = car_estimate(histogram(a, b))
    expected = car_predict(0.02, sc.arm_a.efficiency, sc.arm_b.efficiency)
    assert r.C >= 1e4
    assert abs(r.car - expected) <= 3 * r.sigma_car
    assert sc.predicted_car() == pytest.approx(51.0)


def test_switch_loss_folded_into_arms(cfg):
    route = cfg.route("FNAL-FCC", "FNAL-FCC")
    sc = scenario_build(route, cfg.source, False, 1.0, 1)
    assert sc.arm_b.transmittance == pytest.approx(10 ** -0.1)


def test_peak_sigma(cfg):
    sc = scenario_build(cfg.route("FNAL-FCC", "ANL"), cfg.source, False, 1.0, 1)
    j = math.hypot(DetectorSpec().jitter_sigma, TaggerSpec().jitter_sigma)
    assert sc.peak_sigma == pytest.approx(math.sqrt(2 * cfg.source.photon_sigma**2 + 2 * j**2))


def test_describe_is_json_ready(cfg):
    import json

    d = scenario_build(cfg.route("FNAL-FCC", "ANL"), cfg.source, True, 1e12, 4).describe()
    text = json.dumps(d)
    assert d["route"] == "FNAL-FCC->ANL" and d["clock"]["band_nm"] == 1310 and "raman_rate_hz" in text


def test_topology_validation():
    fcc = Node("FCC", "source-hub", detectors=())
    with pytest.raises(ValueError):
        Node("X", "end-node", detectors=(DetectorSpec(),))
    with pytest.raises(ValueError):
        Node("X", "router")
    fiber = catalog_fiber("ANL")
    with pytest.raises(TopologyError):
        Topology({"FCC": fcc}, {("FCC", "ANL"): Route("FCC", "ANL", fiber, fiber)})
    with pytest.raises(ValueError):
        Route("FCC", "ANL", fiber, fiber, insertion_loss_db=-1.0)
    no_beta = catalog_fiber("ANL").__class__(57.0, dict(fiber.alpha_by_band), {})
    with pytest.raises(KeyError):
        Route("FCC", "ANL", no_beta, no_beta, clock=ClockSpec())
    assert Topology({"FCC": fcc}, {}).node("FCC").detectors == ()

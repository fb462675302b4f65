"""Named network nodes and switch routes, and scenarios built on them.

Photon A of each pair shares the coexistence fiber with the clock; photon B
travels on the parallel quantum fiber.  The optical switch is a route
selection with a fixed insertion loss on both arms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .analysis import car_predict, noise_per_window
from .channel import (
    DEFAULT_FILTER_BANDWIDTH_NM,
    ETA_S,
    QUANTUM_WAVELENGTH,
    FiberSpec,
    RamanContext,
    raman_count_rate,
)
from .photonics import ArmSpec, DetectorSpec, PairSourceSpec, TaggerSpec, simulate_link
from .sync import ClockSpec, average_launch_power

ROLES = ("source-hub", "end-node")


class TopologyError(KeyError):
    pass


@dataclass(frozen=True)
class Node:
    name: str
    role: str = "end-node"
    detectors: tuple[DetectorSpec, ...] = (DetectorSpec(), DetectorSpec())
    tagger: TaggerSpec = field(default_factory=TaggerSpec)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"node {self.name!r}: role must be one of {ROLES}")
        object.__setattr__(self, "detectors", tuple(self.detectors))
        if self.role == "end-node" and len(self.detectors) < 2:
            raise ValueError(f"end node {self.name!r} needs at least two detectors")


@dataclass(frozen=True)
class Route:
    source: str
    destination: str
    quantum_fiber: FiberSpec
    coexistence_fiber: FiberSpec
    clock: ClockSpec | None = None
    insertion_loss_db: float = 1.0
    coexistence_extra_loss_db: float = 0.0

    def __post_init__(self):
        if self.insertion_loss_db < 0 or self.coexistence_extra_loss_db < 0:
            raise ValueError("losses in dB must be non-negative")
        if self.clock is not None:
            _check_clock(self.clock, self.coexistence_fiber)

    @property
    def is_loopback(self) -> bool:
        return self.source == self.destination


def _check_clock(clock: ClockSpec, fiber: FiberSpec) -> None:
    band = clock.band_label
    if fiber.length_km > 0:
        fiber.alpha(band)
        fiber.beta(band)


@dataclass(frozen=True)
class Topology:
    nodes: Mapping[str, Node]
    routes: Mapping[tuple[str, str], Route]

    def __post_init__(self):
        object.__setattr__(self, "nodes", MappingProxyType(dict(self.nodes)))
        object.__setattr__(self, "routes", MappingProxyType(dict(self.routes)))
        for (src, dst), route in self.routes.items():
            for n in (src, dst):
                if n not in self.nodes:
                    raise TopologyError(f"route {src}->{dst} references unknown node {n!r}")
            if (route.source, route.destination) != (src, dst):
                raise ValueError(f"route keyed {src}->{dst} describes {route.source}->{route.destination}")

    def node(self, name: str) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise TopologyError(f"unknown node {name!r}") from None


def _loopback(node: str, like: FiberSpec | None) -> Route:
    alphas = dict(like.alpha_by_band) if like is not None else {}
    fiber = FiberSpec(0.0, alphas, {}, name=f"{node}-local")
    return Route(node, node, fiber, fiber, clock=None)


def resolve_route(topology: Topology, source: str, destination: str) -> Route:
    """Configured route between two nodes; a node to itself is a zero-length loopback."""
    topology.node(source)
    topology.node(destination)
    route = topology.routes.get((source, destination))
    if route is not None:
        return route
    if source == destination:
        any_fiber = next(iter(topology.routes.values())).quantum_fiber if topology.routes else None
        return _loopback(source, any_fiber)
    raise TopologyError(f"no route from {source!r} to {destination!r}")


def _db(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class Scenario:
    """A fully bound link simulation.

    Durations are in ps.  ``raman_rate`` is the detected Raman count rate
    added to arm A when the clock is on.
    """

    route: Route
    source: PairSourceSpec
    arm_a: ArmSpec
    arm_b: ArmSpec
    tagger: TaggerSpec
    duration: float
    seed: int
    clock: ClockSpec | None
    raman_rate: float
    delta_lambda: float

    def run(self) -> tuple[np.ndarray, np.ndarray]:
        return simulate_link(self.source, self.duration, (self.arm_a, self.arm_b), self.tagger, self.seed)

    @property
    def peak_sigma(self) -> float:
        """Standard deviation of t_b - t_a for photons of one pair."""
        ja = math.hypot(self.arm_a.detector.jitter_sigma, self.tagger.jitter_sigma)
        jb = math.hypot(self.arm_b.detector.jitter_sigma, self.tagger.jitter_sigma)
        return math.sqrt(2 * self.source.photon_sigma**2 + ja**2 + jb**2)

    def predicted_car(self, window: float = 450.0) -> float:
        n1 = noise_per_window(self.arm_a.noise_rate, window, self.peak_sigma)
        n2 = noise_per_window(self.arm_b.noise_rate, window, self.peak_sigma)
        return car_predict(self.source.mean_pairs_per_pulse, self.arm_a.efficiency, self.arm_b.efficiency, n1, n2)

    def describe(self) -> dict:
        return {
            "route": f"{self.route.source}->{self.route.destination}",
            "coexistence_fiber_km": self.route.coexistence_fiber.length_km,
            "quantum_fiber_km": self.route.quantum_fiber.length_km,
            "duration_ps": self.duration,
            "seed": self.seed,
            "clock": None if self.clock is None else {
                "band_nm": self.clock.band.nm,
                "peak_power_w": self.clock.peak_power.watts,
                "duty_cycle": self.clock.duty_cycle,
                "average_power_w": average_launch_power(self.clock).watts,
            },
            "raman_rate_hz": self.raman_rate,
            "delta_lambda_nm": self.delta_lambda,
            "source": {
                "pulse_period_ps": self.source.pulse_period,
                "mean_pairs_per_pulse": self.source.mean_pairs_per_pulse,
                "photon_sigma_ps": self.source.photon_sigma,
            },
            "arms": [
                {
                    "transmittance": arm.transmittance,
                    "efficiency": arm.efficiency,
                    "detector_efficiency": arm.detector.efficiency,
                    "jitter_sigma_ps": arm.detector.jitter_sigma,
                    "dark_rate_hz": arm.detector.dark_rate,
                    "dead_time_ps": arm.detector.dead_time,
                    "background_rate_hz": arm.background_rate,
                }
                for arm in (self.arm_a, self.arm_b)
            ],
            "tagger": {"jitter_sigma_ps": self.tagger.jitter_sigma, "resolution_ps": self.tagger.resolution},
        }


def scenario_build(
    route: Route,
    source: PairSourceSpec,
    clock: bool | ClockSpec,
    duration: float,
    seed: int,
    detectors: tuple[DetectorSpec, DetectorSpec] = (DetectorSpec(), DetectorSpec()),
    tagger: TaggerSpec = TaggerSpec(),
    delta_lambda: float = DEFAULT_FILTER_BANDWIDTH_NM,
) -> Scenario:
    """Bind a route, source and clock choice into a runnable scenario.

    `clock` may be False (clock off), True (the route's clock) or an
    explicit ClockSpec overriding the route's.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if clock is True:
        if route.clock is None:
            raise TopologyError(f"route {route.source}->{route.destination} has no clock configured")
        clk = route.clock
    elif clock is False or clock is None:
        clk = None
    else:
        clk = clock
        _check_clock(clk, route.coexistence_fiber)

    coex, quant = route.coexistence_fiber, route.quantum_fiber
    switch = _db(route.insertion_loss_db)
    t_a = (coex.transmittance("C") if coex.length_km > 0 else 1.0) * switch * _db(route.coexistence_extra_loss_db)
    t_b = (quant.transmittance("C") if quant.length_km > 0 else 1.0) * switch

    raman = 0.0
    if clk is not None and coex.length_km > 0:
        band = clk.band_label
        raman = raman_count_rate(
            average_launch_power(clk),
            coex.beta(band),
            RamanContext(delta_lambda, ETA_S[band]),
            coex.length_km,
            coex.alpha("C"),
            coex.alpha(band),
            QUANTUM_WAVELENGTH,
        )
    det_a, det_b = detectors[0], detectors[1]
    return Scenario(
        route=route,
        source=source,
        arm_a=ArmSpec(t_a, det_a, raman),
        arm_b=ArmSpec(t_b, det_b, 0.0),
        tagger=tagger,
        duration=float(duration),
        seed=int(seed),
        clock=clk,
        raman_rate=raman,
        delta_lambda=delta_lambda,
    )

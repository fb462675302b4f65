"""Simulation and analysis of entangled-photon distribution sharing fiber with an optical clock."""
from __future__ import annotations

from .analysis import (
    CarResult,
    CoincidenceHistogram,
    DriftStats,
    FitResult,
    car_estimate,
    car_predict,
    drift_stats,
    histogram,
    linear_fit,
    noise_per_window,
)
from .channel import (
    CATALOG,
    FiberSpec,
    RamanCoefficient,
    RamanContext,
    beta_from_slope,
    catalog_fiber,
    equivalent_ideal_length,
    raman_count_rate,
    raman_power,
)
from .config import ConfigError, ScenarioConfig, load_config
from .photonics import (
    ArmSpec,
    DetectorSpec,
    PairSourceSpec,
    TaggerSpec,
    attenuate,
    background_stream,
    detect,
    generate_pairs,
    merge_streams,
    simulate_link,
)
from .planner import CarModel, PlanPoint, calibrate, duty_cycle_gain, min_launch_power, sweep
from .sync import ClockSpec, DriftModel, OffsetSeries, lock_status, simulate_offsets
from .tagfile import CodecError, TagFile
from .topology import Node, Route, Scenario, Topology, resolve_route, scenario_build
from .units import Attenuation, Power, Wavelength

__version__ = "0.1.0"

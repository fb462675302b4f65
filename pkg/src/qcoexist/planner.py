"""Design curves for coexisting links: launch power, Raman noise and CAR vs length."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .analysis import DEFAULT_WINDOW, car_predict, noise_per_window
from .channel import (
    DEFAULT_FILTER_BANDWIDTH_NM,
    ETA_S,
    QUANTUM_WAVELENGTH,
    RamanContext,
    catalog_fiber,
    raman_power,
)
from .sync import DEFAULT_RX_MIN
from .units import Attenuation, Power, power_to_photon_rate

REFERENCE_DUTY = 0.5
PLAN_COLUMNS = ("length_km", "band", "p0_min_mW", "raman_power_W", "raman_rate_hz", "predicted_car")


@dataclass(frozen=True)
class PlanPoint:
    length_km: float
    band: str
    p0_min: Power
    raman_power: Power
    raman_rate: float
    predicted_car: float


@dataclass(frozen=True)
class CalibrationResult:
    """Source and noise parameters recovered from two measured CARs.

    `n1_per_window` is in absolute counts per window for the supplied arm-1
    efficiency; `noise_ratio` is the same quantity in units of mu * eta1.
    """

    mu: float
    n1_per_window: float
    residual: float
    noise_ratio: float


@dataclass(frozen=True)
class CarModel:
    """Inputs turning a Raman rate into a predicted CAR.

    `eta1`/`eta2` are the arm efficiencies excluding the fiber under study
    (detector, switch, filters); the fiber transmittance at the quantum
    wavelength is applied per length.  Noise enters arm 1 only.
    """

    mu: float = 0.02
    eta1: float = 0.8
    eta2: float = 0.8
    dark1: float = 0.0
    dark2: float = 0.0
    window: float = DEFAULT_WINDOW
    peak_sigma: float = 0.0
    fiber_on_arm2: bool = True


def min_launch_power(length: float, alpha_pump: Attenuation | float, rx_min: Power | float = DEFAULT_RX_MIN) -> Power:
    """Smallest average launch power that still delivers `rx_min` after `length` km."""
    if length < 0:
        raise ValueError("length must be non-negative")
    a = alpha_pump.alpha_natural if isinstance(alpha_pump, Attenuation) else Attenuation(float(alpha_pump)).alpha_natural
    watts = rx_min.watts if isinstance(rx_min, Power) else Power(float(rx_min)).watts
    return Power(watts * math.exp(a * length))


def sweep(
    lengths: Sequence[float],
    link: str = "ANL",
    band: str = "O",
    rx_min: Power | float = DEFAULT_RX_MIN,
    delta_lambda: float = DEFAULT_FILTER_BANDWIDTH_NM,
    eta_s: float | None = None,
    model: CarModel | None = None,
    duty_cycle: float = REFERENCE_DUTY,
) -> list[PlanPoint]:
    """Plan points for a catalog link re-scaled to each length.

    `p0_min` is the average launch power needed for lock at the reference
    duty cycle.  Clock recovery depends on pulse peak power, so a different
    `duty_cycle` at the same peak scales the average power, and hence the
    Raman noise, by ``duty_cycle / REFERENCE_DUTY``.
    """
    lengths = [float(x) for x in lengths]
    if any(x < 0 for x in lengths) or any(b < a for a, b in zip(lengths, lengths[1:])):
        raise ValueError("lengths must be non-negative and ascending")
    if not 0 < duty_cycle <= 1:
        raise ValueError("duty_cycle must lie in (0, 1]")
    fiber = catalog_fiber(link)
    if band not in fiber.beta_by_pump:
        raise KeyError(f"catalog link {link!r} has no entry for pump band {band!r}")
    model = model or CarModel()
    ctx = RamanContext(delta_lambda, ETA_S[band] if eta_s is None else eta_s)
    alpha_p, alpha_q = fiber.alpha(band), fiber.alpha("C")
    beta = fiber.beta(band)

    points = []
    for length in lengths:
        p0 = min_launch_power(length, alpha_p, rx_min)
        if length > 0:
            pr = raman_power(p0 * (duty_cycle / REFERENCE_DUTY), beta, ctx, length, alpha_q, alpha_p)
        else:
            pr = Power(0.0)
        rate = power_to_photon_rate(pr, QUANTUM_WAVELENGTH)
        t = math.exp(-alpha_q.alpha_natural * length)
        eta1 = model.eta1 * t
        eta2 = model.eta2 * (t if model.fiber_on_arm2 else 1.0)
        n1 = noise_per_window(rate + model.dark1, model.window, model.peak_sigma)
        n2 = noise_per_window(model.dark2, model.window, model.peak_sigma)
        car = car_predict(model.mu, eta1, eta2, n1, n2)
        points.append(PlanPoint(length, band, p0, pr, rate, car))
    return points


def plan_csv(points: Iterable[PlanPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLAN_COLUMNS)
    for p in points:
        w.writerow([repr(p.length_km), p.band, repr(p.p0_min.mw), repr(p.raman_power.watts), repr(p.raman_rate), repr(p.predicted_car)])
    return buf.getvalue()


def calibrate(car_background: float, car_with_clock: float, eta1: float = 1.0, eta2: float = 1.0) -> CalibrationResult:
    """Invert `car_predict` for mu (noise-free CAR) and arm-1 noise (clock CAR).

    With no noise the CAR is 1 + 1/mu whatever the efficiencies; with
    one-arm noise ``(car_bg - 1) / (car_clk - 1) = 1 + n1 / (mu eta1)``.
    """
    if not car_background >= car_with_clock > 1:
        raise ValueError("need car_background >= car_with_clock > 1")
    if not 0 < eta1 <= 1 or not 0 < eta2 <= 1:
        raise ValueError("efficiencies must lie in (0, 1]")
    mu = 1.0 / (car_background - 1.0)
    ratio = (car_background - 1.0) / (car_with_clock - 1.0) - 1.0
    n1 = ratio * mu * eta1
    residual = car_predict(mu, eta1, eta2, n1, 0.0) - car_with_clock if n1 < 1 else math.nan
    return CalibrationResult(mu, n1, residual, ratio)


def duty_cycle_gain(
    current_duty: float,
    proposed_duty: float,
    noise_dominated: bool = True,
    mu: float | None = None,
    eta1: float = 1.0,
    eta2: float = 1.0,
    n1_per_window: float = 0.0,
    n2_per_window: float = 0.0,
) -> float:
    """Multiplier on CAR - 1 when the clock duty cycle changes at fixed peak power.

    In the noise-dominated regime CAR - 1 is inversely proportional to the
    Raman noise, giving ``current / proposed``.  Otherwise the full model is
    evaluated with the arm-1 noise scaled by the duty ratio.
    """
    for d in (current_duty, proposed_duty):
        if not 0 < d <= 1:
            raise ValueError("duty cycles must lie in (0, 1]")
    if noise_dominated:
        return current_duty / proposed_duty
    if mu is None:
        raise ValueError("full-model gain needs mu and the per-window noise")
    before = car_predict(mu, eta1, eta2, n1_per_window, n2_per_window)
    after = car_predict(mu, eta1, eta2, n1_per_window * proposed_duty / current_duty, n2_per_window)
    return (after - 1.0) / (before - 1.0)

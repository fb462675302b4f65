"""Fiber link physics: loss, delay and spontaneous Raman leakage.

The Raman model gives the power scattered by a co-propagating classical
pump into a narrow quantum channel at the fiber output::

    eta_s * P_r = P_0 * beta * dlambda * (exp(-a_q L) - exp(-a_p L)) / (a_p - a_q)

with ``a_q`` the attenuation at the quantum wavelength and ``a_p`` at the
pump wavelength.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from .units import (
    DB_PER_NEPER,
    SPEED_OF_LIGHT,
    Attenuation,
    Power,
    Wavelength,
    power_to_photon_rate,
)

# Below this |a_p - a_q| (km^-1) the closed-form limit L*exp(-a_q L) is used.
SINGULAR_CUTOFF = 1e-9

DEFAULT_GROUP_INDEX = 1.468
DEFAULT_FILTER_BANDWIDTH_NM = 0.03

QUANTUM_WAVELENGTH = Wavelength(1536.0)
PUMP_WAVELENGTHS = MappingProxyType({"O": Wavelength(1310.0), "L": Wavelength(1610.0)})
# Lumped insertion loss + detector efficiency factor per pump band.
ETA_S = MappingProxyType({"O": 2.88, "L": 2.12})


@dataclass(frozen=True)
class RamanCoefficient:
    """Effective Raman coefficient in nm^-1 km^-1."""

    beta: float
    uncertainty: float = 0.0

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be non-negative, got {self.beta!r}")
        if not self.uncertainty >= 0:
            raise ValueError(f"beta uncertainty must be non-negative, got {self.uncertainty!r}")


@dataclass(frozen=True)
class RamanContext:
    """Filter bandwidth (nm) and lumped loss factor of the Raman measurement."""

    delta_lambda: float = DEFAULT_FILTER_BANDWIDTH_NM
    eta_s: float = 1.0

    def __post_init__(self):
        if not self.delta_lambda > 0:
            raise ValueError(f"delta_lambda must be positive, got {self.delta_lambda!r}")
        if not self.eta_s >= 1:
            raise ValueError(f"eta_s must be >= 1, got {self.eta_s!r}")

    @classmethod
    def for_band(cls, band: str, delta_lambda: float = DEFAULT_FILTER_BANDWIDTH_NM) -> "RamanContext":
        return cls(delta_lambda=delta_lambda, eta_s=ETA_S[band])


@dataclass(frozen=True)
class FiberSpec:
    """One deployed fiber.

    ``alpha_by_band`` maps band labels ("O", "C", "L") to attenuation and
    ``beta_by_pump`` maps pump bands to Raman coefficients into the C band.
    A zero length is allowed and describes a local (loopback) connection.
    """

    length_km: float
    alpha_by_band: Mapping[str, Attenuation]
    beta_by_pump: Mapping[str, RamanCoefficient] = field(default_factory=dict)
    group_index: float = DEFAULT_GROUP_INDEX
    name: str = ""

    def __post_init__(self):
        if not (self.length_km >= 0 and math.isfinite(self.length_km)):
            raise ValueError(f"fiber length must be non-negative, got {self.length_km!r}")
        if not self.group_index >= 1:
            raise ValueError(f"group index must be >= 1, got {self.group_index!r}")
        object.__setattr__(self, "alpha_by_band", MappingProxyType(dict(self.alpha_by_band)))
        object.__setattr__(self, "beta_by_pump", MappingProxyType(dict(self.beta_by_pump)))
        for band in self.beta_by_pump:
            if band not in self.alpha_by_band:
                raise ValueError(f"fiber {self.name!r} has beta for band {band} but no alpha")

    def alpha(self, band: str) -> Attenuation:
        try:
            return self.alpha_by_band[band]
        except KeyError:
            raise KeyError(f"fiber {self.name!r} has no attenuation for band {band!r}") from None

    def beta(self, pump_band: str) -> RamanCoefficient:
        try:
            return self.beta_by_pump[pump_band]
        except KeyError:
            raise KeyError(f"fiber {self.name!r} has no Raman coefficient for pump band {pump_band!r}") from None

    def with_length(self, length_km: float) -> "FiberSpec":
        return FiberSpec(length_km, self.alpha_by_band, self.beta_by_pump, self.group_index, self.name)

    def transmittance(self, band: str) -> float:
        return transmittance(self.alpha(band), self.length_km)


def _alpha(a: Attenuation | float) -> float:
    return a.alpha_natural if isinstance(a, Attenuation) else Attenuation(float(a)).alpha_natural


def _beta(b: RamanCoefficient | float) -> float:
    return b.beta if isinstance(b, RamanCoefficient) else RamanCoefficient(float(b)).beta


def _watts(p: Power | float) -> float:
    return p.watts if isinstance(p, Power) else Power(float(p)).watts


def transmittance(alpha: Attenuation | float, length: float) -> float:
    if length < 0:
        raise ValueError(f"length must be non-negative, got {length!r}")
    return math.exp(-_alpha(alpha) * length)


def total_loss_db(alpha: Attenuation | float, length: float) -> float:
    if length < 0:
        raise ValueError(f"length must be non-negative, got {length!r}")
    return _alpha(alpha) * length * DB_PER_NEPER


def raman_transfer(length: float, alpha_quantum: Attenuation | float, alpha_pump: Attenuation | float) -> float:
    """Geometric factor (exp(-a_q L) - exp(-a_p L)) / (a_p - a_q) in km.

    The expression is symmetric in the two coefficients, so it is evaluated
    as exp(-a_lo L) * (1 - exp(-d L)) / d with d = a_hi - a_lo >= 0; expm1
    keeps full relative precision for small d and nothing can overflow.
    """
    if not length > 0:
        raise ValueError(f"length must be positive, got {length!r}")
    lo, hi = sorted((_alpha(alpha_quantum), _alpha(alpha_pump)))
    d = hi - lo
    if d < SINGULAR_CUTOFF:
        return length * math.exp(-lo * length)
    return math.exp(-lo * length) * (-math.expm1(-d * length)) / d


def raman_power(
    p0: Power | float,
    beta: RamanCoefficient | float,
    ctx: RamanContext,
    length: float,
    alpha_quantum: Attenuation | float,
    alpha_pump: Attenuation | float,
) -> Power:
    """Raman power reaching the quantum detector from average launch power `p0`."""
    g = raman_transfer(length, alpha_quantum, alpha_pump)
    return Power(_watts(p0) * _beta(beta) * ctx.delta_lambda * g / ctx.eta_s)


def raman_count_rate(
    p0: Power | float,
    beta: RamanCoefficient | float,
    ctx: RamanContext,
    length: float,
    alpha_quantum: Attenuation | float,
    alpha_pump: Attenuation | float,
    quantum_wavelength: Wavelength | float = QUANTUM_WAVELENGTH,
) -> float:
    """Raman photons per second at the quantum detector."""
    p = raman_power(p0, beta, ctx, length, alpha_quantum, alpha_pump)
    return power_to_photon_rate(p, quantum_wavelength)


def beta_from_slope(
    slope: float,
    ctx: RamanContext,
    length: float,
    alpha_quantum: Attenuation | float,
    alpha_pump: Attenuation | float,
    slope_sigma: float = 0.0,
) -> RamanCoefficient:
    """Invert the Raman model for beta given a fitted P_r/P_0 slope."""
    if not slope >= 0:
        raise ValueError(f"slope must be non-negative, got {slope!r}")
    if not length > 0:
        raise ValueError("degenerate geometry: fiber length must be positive")
    k = ctx.eta_s / (ctx.delta_lambda * raman_transfer(length, alpha_quantum, alpha_pump))
    return RamanCoefficient(slope * k, abs(slope_sigma) * k)


def propagation_delay(length: float, group_index: float = DEFAULT_GROUP_INDEX) -> int:
    """One-way group delay in integer picoseconds."""
    if length < 0:
        raise ValueError(f"length must be non-negative, got {length!r}")
    return int(round(length * 1e3 * group_index / SPEED_OF_LIGHT * 1e12))


def equivalent_ideal_length(total_loss: float, ideal_alpha: float) -> float:
    """Length (km) of an ideal fiber with `ideal_alpha` dB/km having `total_loss` dB."""
    if not total_loss > 0 or not ideal_alpha > 0:
        raise ValueError("total loss and ideal attenuation must both be positive")
    return total_loss / ideal_alpha


def _fiber(name, length, alphas, betas):
    return FiberSpec(
        length_km=length,
        alpha_by_band={band: Attenuation(a) for band, a in alphas.items()},
        beta_by_pump={band: RamanCoefficient(b, u) for band, (b, u) in betas.items()},
        name=name,
    )


# OTDR attenuations (km^-1) and fitted Raman coefficients for the two
# deployed links out of the central node.
CATALOG: Mapping[str, FiberSpec] = MappingProxyType({
    "FNAL-DAB": _fiber(
        "FNAL-DAB", 2.0,
        {"L": 0.5, "O": 0.55, "C": 0.44},
        {"L": (33.0e-10, 3.0e-10), "O": (10.5e-10, 0.3e-10)},
    ),
    "ANL": _fiber(
        "ANL", 57.0,
        {"L": 0.084, "O": 0.099, "C": 0.076},
        {"L": (20.8e-10, 0.3e-10), "O": (4.6e-10, 0.1e-10)},
    ),
})


def catalog_fiber(link: str, length_km: float | None = None) -> FiberSpec:
    try:
        fiber = CATALOG[link]
    except KeyError:
        raise KeyError(f"unknown catalog link {link!r}; known: {sorted(CATALOG)}") from None
    return fiber if length_km is None else fiber.with_length(length_km)

"""Physical quantities and photon arithmetic.

Powers are carried in watts, attenuations in natural units (km^-1) and
wavelengths in nm.  Decibel forms are derived views only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

PLANCK = 6.62607015e-34  # J s (exact, SI 2019)
SPEED_OF_LIGHT = 299_792_458.0  # m/s (exact)

DB_PER_NEPER = 10.0 / math.log(10.0)

# ITU band edges in nm; C/L share the 1565 nm boundary (C wins).
BANDS = {
    "O": (1260.0, 1360.0),
    "C": (1530.0, 1565.0),
    "L": (1565.0, 1625.0),
}


@dataclass(frozen=True)
class Power:
    """Optical power in watts."""

    watts: float

    def __post_init__(self):
        if not math.isfinite(self.watts) or self.watts < 0:
            raise ValueError(f"power must be finite and non-negative, got {self.watts!r}")

    @classmethod
    def from_mw(cls, mw: float) -> "Power":
        return cls(mw * 1e-3)

    @classmethod
    def from_dbm(cls, dbm: float) -> "Power":
        return dbm_to_watts(dbm)

    @property
    def mw(self) -> float:
        return self.watts * 1e3

    @property
    def dbm(self) -> float:
        if self.watts == 0:
            return -math.inf
        return 10.0 * math.log10(self.watts / 1e-3)

    def __mul__(self, k: float) -> "Power":
        return Power(self.watts * k)

    __rmul__ = __mul__

    def __truediv__(self, k: float) -> "Power":
        return Power(self.watts / k)


@dataclass(frozen=True)
class Attenuation:
    """Power attenuation coefficient in km^-1 (P(L) = P0 exp(-alpha L))."""

    alpha_natural: float

    def __post_init__(self):
        if not math.isfinite(self.alpha_natural) or self.alpha_natural < 0:
            raise ValueError(f"attenuation must be non-negative, got {self.alpha_natural!r}")

    @classmethod
    def from_db_per_km(cls, db_per_km: float) -> "Attenuation":
        return cls(db_per_km / DB_PER_NEPER)

    @property
    def db_per_km(self) -> float:
        return self.alpha_natural * DB_PER_NEPER


def band_of(nm: float) -> str:
    for label, (lo, hi) in BANDS.items():
        if lo <= nm <= hi:
            return label
    return "other"


@dataclass(frozen=True)
class Wavelength:
    nm: float

    def __post_init__(self):
        if not math.isfinite(self.nm) or self.nm <= 0:
            raise ValueError(f"wavelength must be positive, got {self.nm!r}")

    @property
    def band(self) -> str:
        return band_of(self.nm)

    @property
    def meters(self) -> float:
        return self.nm * 1e-9


def dbm_to_watts(p: float) -> Power:
    """Convert a level in dBm to a :class:`Power`."""
    if not math.isfinite(p):
        raise ValueError(f"dBm level must be finite, got {p!r}")
    return Power(1e-3 * 10.0 ** (p / 10.0))


def watts_to_dbm(p: Power | float) -> float:
    watts = p.watts if isinstance(p, Power) else float(p)
    return Power(watts).dbm


def photon_energy(w: Wavelength | float) -> float:
    """Photon energy h c / lambda in joules."""
    nm = w.nm if isinstance(w, Wavelength) else Wavelength(float(w)).nm
    return PLANCK * SPEED_OF_LIGHT / (nm * 1e-9)


def power_to_photon_rate(p: Power | float, w: Wavelength | float) -> float:
    """Photons per second carried by power `p` at wavelength `w`."""
    watts = p.watts if isinstance(p, Power) else Power(float(p)).watts
    return watts / photon_energy(w)


def photon_rate_to_power(rate: float, w: Wavelength | float) -> Power:
    if rate < 0:
        raise ValueError("photon rate must be non-negative")
    return Power(rate * photon_energy(w))

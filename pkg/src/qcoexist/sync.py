"""Clock distribution: lock feasibility and the recovered-clock offset process."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import FiberSpec
from .photonics import PS_PER_S, substream
from .units import Power, Wavelength, dbm_to_watts

DEFAULT_RX_MIN = dbm_to_watts(-40.0)


@dataclass(frozen=True)
class ClockSpec:
    """Optical clock transmitter and receiver.

    `peak_power` is the on-state launch power; the average launch power is
    ``peak_power * duty_cycle``.  `jitter_sigma` is the white timing noise
    of the recovered clock in ps.
    """

    peak_power: Power = field(default_factory=lambda: Power(0.6e-3))
    band: Wavelength = field(default_factory=lambda: Wavelength(1310.0))
    frequency: float = 2e8
    pulse_width: float = 2500.0
    duty_cycle: float = 0.5
    rx_min_power: Power = DEFAULT_RX_MIN
    jitter_sigma: float = 2.2

    def __post_init__(self):
        if not 0 < self.duty_cycle <= 1:
            raise ValueError("duty_cycle must lie in (0, 1]")
        if not self.frequency > 0:
            raise ValueError("clock frequency must be positive")
        if not 0 <= self.pulse_width <= self.period:
            raise ValueError("clock pulse width must fit in one period")
        if self.band.band not in ("O", "L"):
            raise ValueError(f"clock must sit in the O or L band, got {self.band.nm} nm")
        if not self.jitter_sigma >= 0:
            raise ValueError("clock jitter must be non-negative")

    @property
    def period(self) -> float:
        """Clock period in ps."""
        return PS_PER_S / self.frequency

    @property
    def band_label(self) -> str:
        return self.band.band

    @classmethod
    def with_average_power(cls, average: Power | float, **kw) -> "ClockSpec":
        duty = kw.get("duty_cycle", 0.5)
        watts = average.watts if isinstance(average, Power) else float(average)
        return cls(peak_power=Power(watts / duty), **kw)


@dataclass(frozen=True)
class DriftModel:
    """Slow wander of the recovered clock: random walk plus one sinusoid.

    A `sinusoid_phase` of None draws the phase from the run seed.
    """

    random_walk_sigma: float = 0.0015  # ps / sqrt(s)
    sinusoid_amplitude: float = 0.5  # ps
    sinusoid_period: float = 86_400.0  # s
    sinusoid_phase: float | None = None

    def __post_init__(self):
        for name in ("random_walk_sigma", "sinusoid_amplitude"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.sinusoid_period > 0:
            raise ValueError("sinusoid_period must be positive")

    @classmethod
    def none(cls) -> "DriftModel":
        return cls(0.0, 0.0, 86_400.0, 0.0)


@dataclass(frozen=True)
class OffsetSeries:
    sample_period: float  # s
    offsets: np.ndarray  # ps

    def __post_init__(self):
        if not self.sample_period > 0:
            raise ValueError("sample_period must be positive")
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if offsets.ndim != 1 or offsets.size == 0:
            raise ValueError("offset series must be a non-empty 1-d sequence")
        object.__setattr__(self, "offsets", offsets)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.offsets.size) * self.sample_period

    @property
    def duration(self) -> float:
        return self.offsets.size * self.sample_period

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_s", "offset_ps"])
        for t, o in zip(self.times, self.offsets):
            w.writerow([repr(float(t)), repr(float(o))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "OffsetSeries":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["time_s", "offset_ps"]:
            raise ValueError("offset CSV must start with header time_s,offset_ps")
        data = np.array([[float(a), float(b)] for a, b in rows[1:] if a.strip()], dtype=np.float64)
        if data.size == 0:
            raise ValueError("offset CSV has no samples")
        if data.shape[0] == 1:
            return cls(1.0, data[:, 1])
        dt = np.diff(data[:, 0])
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
            raise ValueError("offset CSV samples are not evenly spaced")
        return cls(float(dt[0]), data[:, 1])


@dataclass(frozen=True)
class LockStatus:
    locked: bool
    received: Power

    @property
    def insufficient_power(self) -> bool:
        return not self.locked


def average_launch_power(clk: ClockSpec) -> Power:
    return clk.peak_power * clk.duty_cycle


def lock_status(clk: ClockSpec, fiber: FiberSpec) -> LockStatus:
    """Binary lock gate on the average power reaching the receiver."""
    alpha = fiber.alpha(clk.band_label).alpha_natural
    received = average_launch_power(clk) * math.exp(-alpha * fiber.length_km)
    # tolerate last-ulp rounding when launched at exactly the minimum power
    locked = received.watts >= clk.rx_min_power.watts * (1 - 1e-12)
    return LockStatus(locked, received)


def simulate_offsets(
    clk: ClockSpec,
    drift: DriftModel,
    duration: float,
    sample_period: float,
    seed: int,
) -> OffsetSeries:
    """Recovered-clock offset samples at ``t_i = i * sample_period``.

    offset(t) = W(t) + A sin(2 pi t / T + phi) + white jitter, with W a
    random walk started at 0.
    """
    if not sample_period > 0 or not duration >= sample_period:
        raise ValueError("need duration >= sample_period > 0")
    n = int(math.floor(duration / sample_period + 1e-9))
    t = np.arange(n) * sample_period
    offsets = np.zeros(n)
    if drift.random_walk_sigma > 0:
        steps = substream(seed, "drift", "walk").normal(0.0, drift.random_walk_sigma * math.sqrt(sample_period), n)
        steps[0] = 0.0
        offsets += np.cumsum(steps)
    if drift.sinusoid_amplitude > 0:
        phase = drift.sinusoid_phase
        if phase is None:
            phase = substream(seed, "drift", "phase").uniform(0.0, 2 * math.pi)
        offsets += drift.sinusoid_amplitude * np.sin(2 * math.pi * t / drift.sinusoid_period + phase)
    if clk.jitter_sigma > 0:
        offsets += substream(seed, "clock", "jitter").normal(0.0, clk.jitter_sigma, n)
    return OffsetSeries(sample_period, offsets)


def apply_clock_offset(stream: np.ndarray, series: OffsetSeries) -> np.ndarray:
    """Shift each tag by the offset sample covering its time, then re-sort."""
    stream = np.asarray(stream, dtype=np.int64)
    if stream.size and np.any(stream[1:] < stream[:-1]):
        raise ValueError("stream is not sorted")
    if stream.size == 0:
        return stream.copy()
    if stream[0] < 0:
        raise ValueError("stream has negative timestamps")
    period_ps = series.sample_period * PS_PER_S
    if float(period_ps).is_integer():
        idx = stream // int(period_ps)
    else:
        idx = np.floor(stream / period_ps).astype(np.int64)
    if idx[-1] >= series.offsets.size:
        raise ValueError("stream extends past the end of the offset series")
    shifted = stream + np.rint(series.offsets[idx]).astype(np.int64)
    return np.sort(shifted, kind="stable")

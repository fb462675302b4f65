"""Monte Carlo time-tag generation for a pulsed photon-pair link.

Raw arrival streams are float64 picosecond arrays; detected streams are
sorted int64 picosecond arrays.  Every random draw comes from a generator
derived from ``(seed, role...)`` so arms and processes never share draws.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .units import Wavelength

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
PS_PER_S = 1e12

# Upper bound on expected events materialised per chunk by the link runner.
CHUNK_EVENTS = 2_000_000


def _key(k) -> int:
    if isinstance(k, (int, np.integer)):
        return int(k) & 0xFFFFFFFF
    return zlib.crc32(str(k).encode())


def substream(seed: int, *roles) -> np.random.Generator:
    """Independent generator for ``seed`` and a tuple of role labels."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(_key, roles)]))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(seed)


@dataclass(frozen=True)
class PairSourceSpec:
    """Pulsed pair source.

    `photon_sigma` is the Gaussian spread of each photon's emission time
    about the pulse center (default from a 250 ps FWHM photon duration).
    """

    pulse_period: float = 5000.0
    mean_pairs_per_pulse: float = 0.02
    photon_sigma: float = 250.0 / FWHM_PER_SIGMA
    wavelength: Wavelength = field(default_factory=lambda: Wavelength(1536.0))

    def __post_init__(self):
        if not self.pulse_period > 0:
            raise ValueError("pulse_period must be positive")
        if not 0 < self.mean_pairs_per_pulse < 1:
            raise ValueError("mean_pairs_per_pulse must lie in (0, 1)")
        if not self.photon_sigma >= 0:
            raise ValueError("photon_sigma must be non-negative")

    @property
    def pair_rate(self) -> float:
        """Mean emitted pairs per second."""
        return self.mean_pairs_per_pulse / self.pulse_period * PS_PER_S


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float = 0.8
    jitter_sigma: float = 50.0 / FWHM_PER_SIGMA
    dark_rate: float = 100.0
    dead_time: float = 0.0

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ValueError("detector efficiency must lie in [0, 1]")
        for name in ("jitter_sigma", "dark_rate", "dead_time"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"detector {name} must be non-negative")


@dataclass(frozen=True)
class TaggerSpec:
    jitter_sigma: float = 10.0 / FWHM_PER_SIGMA
    resolution: int = 1

    def __post_init__(self):
        if not self.jitter_sigma >= 0:
            raise ValueError("tagger jitter must be non-negative")
        if not (self.resolution >= 1 and float(self.resolution).is_integer()):
            raise ValueError("tagger resolution must be an integer >= 1 ps")


class TimeTag(NamedTuple):
    channel: int
    t: int


def _n_pulses(period: float, duration: float) -> int:
    return int(math.ceil(duration / period))


def generate_pairs(src: PairSourceSpec, duration: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Raw arrival times of both photons of every emitted pair.

    Pulses sit at ``k * pulse_period`` for all k with k * period < duration.
    The per-pulse pair numbers are Poisson(mu); they are drawn as one
    Poisson total spread uniformly over pulses, which has the same joint law.
    Outputs are pair-aligned (``a[i]`` and ``b[i]`` share a pulse) and
    ordered by pulse.
    """
    if duration < src.pulse_period:
        raise ValueError("duration must cover at least one pulse period")
    rng = _rng(seed)
    n = _n_pulses(src.pulse_period, duration)
    total = rng.poisson(src.mean_pairs_per_pulse * n)
    centers = np.sort(rng.integers(0, n, size=total)).astype(np.float64) * src.pulse_period
    a = centers + rng.normal(0.0, src.photon_sigma, size=total) if src.photon_sigma else centers.copy()
    b = centers + rng.normal(0.0, src.photon_sigma, size=total) if src.photon_sigma else centers.copy()
    return a, b


def attenuate(stream: np.ndarray, transmittance: float, seed) -> np.ndarray:
    """Keep each tag independently with probability `transmittance`."""
    if not 0 <= transmittance <= 1:
        raise ValueError(f"transmittance must lie in [0, 1], got {transmittance!r}")
    stream = np.asarray(stream)
    if transmittance == 1:
        return stream.copy()
    keep = _rng(seed).random(stream.size) < transmittance
    return stream[keep]


def background_stream(rate: float, duration: float, seed, start: float = 0.0) -> np.ndarray:
    """Sorted homogeneous Poisson arrivals on [start, start + duration)."""
    if not rate >= 0:
        raise ValueError("background rate must be non-negative")
    if duration <= 0 or rate == 0:
        return np.empty(0, dtype=np.float64)
    rng = _rng(seed)
    n = rng.poisson(rate * duration / PS_PER_S)
    return np.sort(start + rng.random(n) * duration)


def apply_dead_time(t: np.ndarray, dead_time: float) -> np.ndarray:
    """Drop events closer than `dead_time` to the last accepted event.

    `t` must be sorted.  Only events whose gap to the immediate predecessor
    is short can be dropped, so the Python loop runs over those alone.
    """
    if dead_time <= 0 or t.size < 2:
        return t
    cand = np.flatnonzero(np.diff(t) < dead_time) + 1
    if cand.size == 0:
        return t
    keep = np.ones(t.size, dtype=bool)
    ref = t[0]
    for j in cand:
        if keep[j - 1]:
            ref = t[j - 1]
        if t[j] - ref < dead_time:
            keep[j] = False
    return t[keep]


def quantize(t: np.ndarray, resolution: int = 1) -> np.ndarray:
    if resolution == 1:
        return np.rint(t).astype(np.int64)
    return (np.rint(np.asarray(t) / resolution) * resolution).astype(np.int64)


def _finish(t: np.ndarray, det: DetectorSpec, tagger: TaggerSpec, jitter_rng=None) -> np.ndarray:
    sigma = math.hypot(det.jitter_sigma, tagger.jitter_sigma)
    if sigma > 0 and t.size:
        t = t + jitter_rng.normal(0.0, sigma, size=t.size)
    t = np.sort(t, kind="stable")
    t = apply_dead_time(t, det.dead_time)
    out = quantize(t, int(tagger.resolution))
    return out[out >= 0]


def detect(
    stream: np.ndarray,
    det: DetectorSpec,
    tagger: TaggerSpec,
    seed,
    background: np.ndarray | None = None,
) -> np.ndarray:
    """Detector and time-tagger response.

    Photons in `stream` are thinned by the detection efficiency; optional
    `background` arrivals (already at detected rate, e.g. dark or Raman
    counts) join them unthinned.  Combined timing jitter is added, the
    result is sorted, dead time is applied and times are quantised.
    Events landing before t = 0 are discarded.
    """
    rng = _rng(seed)
    stream = np.asarray(stream, dtype=np.float64)
    keep = rng.random(stream.size) < det.efficiency if det.efficiency < 1 else slice(None)
    t = stream[keep]
    if background is not None and len(background):
        t = np.concatenate([t, np.asarray(background, dtype=np.float64)])
    return _finish(t, det, tagger, rng)


def _is_sorted(x: np.ndarray) -> bool:
    return x.size < 2 or bool(np.all(x[1:] >= x[:-1]))


def merge_streams(*streams: np.ndarray) -> np.ndarray:
    """Merge sorted streams into one; ties keep argument order."""
    arrays = [np.asarray(s) for s in streams]
    for i, s in enumerate(arrays):
        if s.ndim != 1 or not _is_sorted(s):
            raise ValueError(f"stream {i} is not a sorted 1-d array")
    if not arrays:
        return np.empty(0, dtype=np.int64)
    merged = np.concatenate(arrays)
    return merged[np.argsort(merged, kind="stable")]


@dataclass(frozen=True)
class ArmSpec:
    """One arm of the link as seen by the chunked runner.

    `transmittance` collects every optical loss between source and detector
    (fiber, switch, filters); `background_rate` is an extra detected count
    rate on top of the detector's dark counts (e.g. Raman leakage).
    """

    transmittance: float = 1.0
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    background_rate: float = 0.0

    def __post_init__(self):
        if not 0 <= self.transmittance <= 1:
            raise ValueError("arm transmittance must lie in [0, 1]")
        if not self.background_rate >= 0:
            raise ValueError("arm background rate must be non-negative")

    @property
    def efficiency(self) -> float:
        return self.transmittance * self.detector.efficiency

    @property
    def noise_rate(self) -> float:
        return self.background_rate + self.detector.dark_rate


def simulate_link(
    src: PairSourceSpec,
    duration: float,
    arms: Sequence[ArmSpec],
    tagger: TaggerSpec,
    seed: int,
    chunk_events: int = CHUNK_EVENTS,
) -> tuple[np.ndarray, np.ndarray]:
    """Detected tag streams of both arms over `duration` ps.

    Equivalent in law to generate_pairs -> attenuate -> detect on each arm
    with background and dark counts, but only pairs with at least one
    surviving photon are materialised: under Poisson pair statistics the
    "both", "a only" and "b only" survivor classes are independent Poisson
    processes.  Work is chunked in time so memory stays bounded.
    """
    arm_a, arm_b = arms
    if duration <= 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    n = _n_pulses(src.pulse_period, duration)
    ea, eb = arm_a.efficiency, arm_b.efficiency
    probs = (ea * eb, ea * (1 - eb), (1 - ea) * eb)
    mu = src.mean_pairs_per_pulse
    per_pulse = mu * sum(probs)
    chunk = max(1, min(n, int(chunk_events / per_pulse))) if per_pulse > 0 else n

    out_a, out_b = [], []
    for c, first in enumerate(range(0, n, chunk)):
        m = min(chunk, n - first)
        rng = substream(seed, "pairs", c)
        for cls, p in enumerate(probs):
            k = rng.poisson(mu * m * p)
            if k == 0:
                continue
            centers = (first + rng.integers(0, m, size=k)).astype(np.float64) * src.pulse_period
            if cls in (0, 1):
                out_a.append(centers + rng.normal(0.0, src.photon_sigma, size=k))
            if cls in (0, 2):
                out_b.append(centers + rng.normal(0.0, src.photon_sigma, size=k))

    streams = []
    for label, arm, photons in (("a", arm_a, out_a), ("b", arm_b, out_b)):
        bg = _chunked_background(arm.noise_rate, duration, seed, label, chunk_events)
        t = np.concatenate(photons + bg) if photons or bg else np.empty(0)
        streams.append(_finish(t, arm.detector, tagger, substream(seed, "jitter", label)))
    return streams[0], streams[1]


def _chunked_background(rate, duration, seed, label, chunk_events):
    if rate <= 0:
        return []
    span = max(1.0, chunk_events / rate * PS_PER_S)
    parts = []
    for c, start in enumerate(np.arange(0.0, duration, span)):
        parts.append(background_stream(rate, min(span, duration - start), substream(seed, "noise", label, c), start))
    return parts

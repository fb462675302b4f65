"""Coincidence histograms, CAR estimation, line fits and drift statistics."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .sync import OffsetSeries

DEFAULT_BIN_WIDTH = 10
DEFAULT_RANGE = 60_000
DEFAULT_WINDOW = 450.0
DEFAULT_PERIOD = 5000.0
DEFAULT_PEAKS = 10

# Caps memory of the delta-t buffer built per slice of the sweep stream.
_MATCH_BLOCK = 4_000_000


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Counts of t_b - t_a binned on a grid centred on zero.

    Bin k (k = -K..K, K = range / bin_width) is centred on k * bin_width;
    a delta-t on a bin edge belongs to the bin farther from zero, so the
    binning is exactly mirror symmetric.
    """

    bin_width: int
    range: int
    counts: np.ndarray
    center_offset: float = 0.0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.size != 2 * self.half_bins + 1:
            raise ValueError("counts length does not match range / bin_width")
        if np.any(counts < 0):
            raise ValueError("histogram counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def half_bins(self) -> int:
        return int(self.range // self.bin_width)

    @property
    def centers(self) -> np.ndarray:
        return np.arange(-self.half_bins, self.half_bins + 1) * float(self.bin_width)

    def index_of(self, dt: float) -> int:
        return int(_sym_round(np.array([dt / self.bin_width]))[0]) + self.half_bins

    def mirrored(self) -> "CoincidenceHistogram":
        return CoincidenceHistogram(self.bin_width, self.range, self.counts[::-1].copy(), -self.center_offset)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_center_ps", "counts"])
        for c, n in zip(self.centers, self.counts):
            w.writerow([int(c) if float(c).is_integer() else c, int(n)])
        return buf.getvalue()


def _sym_round(x: np.ndarray) -> np.ndarray:
    """Round half away from zero; odd symmetric, unlike np.rint."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _check_sorted(x: np.ndarray, name: str) -> None:
    if x.size > 1 and np.any(x[1:] < x[:-1]):
        bad = int(np.flatnonzero(x[1:] < x[:-1])[0]) + 1
        raise AnalysisError(f"stream {name} is not sorted (first decrease at index {bad})")


def histogram(tags_a, tags_b, bin_width: int = DEFAULT_BIN_WIDTH, range: int = DEFAULT_RANGE) -> CoincidenceHistogram:
    """Histogram of t_b - t_a over all pairs with |t_b - t_a| <= range.

    The shorter stream is swept and matches in the other are found by
    binary search, so the cost is O((|A| + |B|) log + matches).
    """
    a = np.asarray(tags_a, dtype=np.int64)
    b = np.asarray(tags_b, dtype=np.int64)
    _check_sorted(a, "A")
    _check_sorted(b, "B")
    if bin_width <= 0 or range <= 0 or range % bin_width:
        raise AnalysisError("range must be a positive multiple of bin_width")
    k = range // bin_width
    counts = np.zeros(2 * k + 1, dtype=np.int64)
    sign = 1
    if a.size > b.size:
        a, b, sign = b, a, -1
    if a.size == 0 or b.size == 0:
        return CoincidenceHistogram(bin_width, range, counts)
    # the outer bins are only half covered, since |dt| stops at range
    lo = np.searchsorted(b, a - range, side="left")
    hi = np.searchsorted(b, a + range, side="right")
    n = hi - lo
    cum = np.cumsum(n)
    start = 0
    while start < a.size:
        base = cum[start - 1] if start else 0
        stop = max(start + 1, int(np.searchsorted(cum, base + _MATCH_BLOCK, side="right")))
        nn = n[start:stop]
        total = int(nn.sum())
        if total:
            rep_a = np.repeat(a[start:stop], nn)
            offs = np.arange(total) - np.repeat(np.cumsum(nn) - nn, nn)
            dt = b[np.repeat(lo[start:stop], nn) + offs] - rep_a
            idx = _sym_round(sign * dt / bin_width).astype(np.int64) + k
            counts += np.bincount(idx, minlength=2 * k + 1)
        start = stop
    return CoincidenceHistogram(bin_width, range, counts)


def _window_bins(h: CoincidenceHistogram, window: float) -> int:
    w = max(1, int(round(window / h.bin_width)))
    return w if w % 2 else w + 1


def _window_sum(counts: np.ndarray, centre: int, half: int) -> int:
    return int(counts[centre - half: centre + half + 1].sum())


def find_main_peak(h: CoincidenceHistogram, pulse_period: float = DEFAULT_PERIOD,
                   window: float = DEFAULT_WINDOW) -> float:
    """Centre (ps) of the window-wide slice with the most counts near zero.

    The search covers |centre| <= pulse_period / 2.  A peak is significant
    when its window sum exceeds the median window sum by five Poisson sigmas.
    """
    counts = h.counts
    if counts.sum() == 0:
        raise AnalysisError("histogram is empty")
    w = _window_bins(h, window)
    half = w // 2
    sums = np.convolve(counts, np.ones(w, dtype=np.int64), mode="valid")  # sums[i] centred on bin i + half
    centres = np.arange(sums.size) + half
    reach = int(pulse_period / 2 // h.bin_width)
    sel = np.abs(centres - h.half_bins) <= reach
    if not sel.any():
        raise AnalysisError("histogram too narrow for peak search")
    best = centres[sel][int(np.argmax(sums[sel]))]
    peak = sums[best - half]
    floor = float(np.median(sums))
    if peak - floor <= 5 * math.sqrt(max(floor, 1.0)):
        raise AnalysisError("no significant coincidence peak (flat histogram)")
    return float(h.centers[best])


@dataclass(frozen=True)
class CarResult:
    C: int
    A: float
    car: float
    sigma_car: float
    window: float
    peaks_used: int
    center_offset: float = 0.0

    @property
    def accidentals_zero(self) -> bool:
        return self.A == 0

    def to_json(self) -> str:
        d = asdict(self)
        for key in ("car", "sigma_car"):
            if math.isinf(d[key]):
                d[key] = "inf"
        d["accidentals_zero"] = self.accidentals_zero
        return json.dumps(d, sort_keys=True)


def car_estimate(
    h: CoincidenceHistogram,
    window: float = DEFAULT_WINDOW,
    pulse_period: float = DEFAULT_PERIOD,
    n_accidental_peaks: int = DEFAULT_PEAKS,
    center: float | None = None,
) -> CarResult:
    """Coincidence-to-accidental ratio from a histogram.

    C is the raw count in the window around the main peak (no floor
    subtraction); A is the mean over the windows at ``center +/- k *
    pulse_period`` for k = 1..n.  sigma_car assumes Poisson counts.
    A zero accidental mean with C > 0 gives car = +inf.
    """
    if h.counts.sum() == 0:
        raise AnalysisError("histogram is empty")
    if center is None:
        center = find_main_peak(h, pulse_period, window)
    w = _window_bins(h, window)
    half = w // 2
    c0 = h.index_of(center)
    shifts = [int(round(k * pulse_period / h.bin_width)) for k in range(1, n_accidental_peaks + 1)]
    if c0 - shifts[-1] - half < 0 or c0 + shifts[-1] + half >= h.counts.size:
        raise AnalysisError(
            f"histogram range {h.range} ps cannot hold {n_accidental_peaks} accidental peaks "
            f"at {pulse_period} ps spacing"
        )
    C = _window_sum(h.counts, c0, half)
    acc = [_window_sum(h.counts, c0 + s * sgn, half) for s in shifts for sgn in (-1, 1)]
    n_win = len(acc)
    A = sum(acc) / n_win
    if A == 0:
        if C == 0:
            raise AnalysisError("no counts in main or accidental windows")
        car, sigma = math.inf, math.inf
    else:
        car = C / A
        # car^2 (1/C + 1/(n A)) written without dividing by C
        sigma = math.sqrt(C / A**2 + C**2 / (n_win * A**3))
    return CarResult(C, A, car, sigma, w * h.bin_width, n_win, float(center))


def car_predict(mu: float, eta1: float, eta2: float, n1_per_window: float = 0.0, n2_per_window: float = 0.0) -> float:
    """Expected CAR for Poisson pairs with per-arm efficiency and noise.

    Noise counts are per coincidence window; see `noise_per_window`.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    for name, v in (("eta1", eta1), ("eta2", eta2)):
        if not 0 <= v <= 1:
            raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
    for name, v in (("n1", n1_per_window), ("n2", n2_per_window)):
        if not 0 <= v < 1:
            raise ValueError(f"{name} must lie in [0, 1), got {v!r}")
    s1 = mu * eta1 + n1_per_window
    s2 = mu * eta2 + n2_per_window
    if s1 * s2 == 0:
        return math.inf
    return 1.0 + mu * eta1 * eta2 / (s1 * s2)


def window_fraction(window: float, peak_sigma: float) -> float:
    """Fraction of a Gaussian coincidence peak inside a centred window."""
    if peak_sigma <= 0:
        return 1.0
    return math.erf(window / (2.0 * math.sqrt(2.0) * peak_sigma))


def noise_per_window(rate: float, window: float = DEFAULT_WINDOW, peak_sigma: float = 0.0) -> float:
    """Noise counts per window for `car_predict`.

    Flat noise fills a window fully while the pair peak only fills the
    fraction `window_fraction`; dividing by it puts both on the same
    footing.  With ``peak_sigma = 0`` this is just ``rate * window``.
    """
    return rate * window * 1e-12 / window_fraction(window, peak_sigma)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    slope_sigma: float
    r_squared: float
    intercept_sigma: float = math.nan

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def linear_fit(x, y, sigma=None) -> FitResult:
    """Least-squares line through (x, y).

    Without `sigma` this is ordinary least squares; with `sigma` the points
    are weighted by 1/sigma^2.  Either way the parameter errors are scaled
    by the (weighted) residual variance, so `sigma` sets relative weights
    only.  Two points leave no residual degrees of freedom and give NaN
    errors.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct x values")
    if sigma is None:
        w = np.ones_like(x)
    else:
        s = np.asarray(sigma, dtype=np.float64)
        if s.shape != x.shape or np.any(s <= 0):
            raise ValueError("sigma must be positive and match x")
        w = 1.0 / s**2
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    dx = x - xm
    sxx = (w * dx * dx).sum()
    slope = (w * dx * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = (w * resid**2).sum()
    ss_tot = (w * (y - ym) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    r2 = min(1.0, max(0.0, r2))
    if x.size > 2:
        var_scale = ss_res / (x.size - 2)
    else:
        var_scale = math.nan
    slope_sigma = math.sqrt(var_scale / sxx)
    intercept_sigma = math.sqrt(var_scale * (1.0 / sw + xm**2 / sxx))
    return FitResult(float(slope), float(intercept), slope_sigma, r2, intercept_sigma)


@dataclass(frozen=True)
class DriftStats:
    bin_times: np.ndarray  # s, start of each bin
    means: np.ndarray
    rms: np.ndarray
    sigma: float
    peak_to_peak: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_start_s", "mean_ps", "rms_ps"])
        for t, m, r in zip(self.bin_times, self.means, self.rms):
            w.writerow([repr(float(t)), repr(float(m)), repr(float(r))])
        return buf.getvalue()


def drift_stats(s: OffsetSeries, bin: float = 100.0) -> DriftStats:
    """Per-bin mean and RMS about the mean, overall sample sigma, spread of means.

    Samples fall into bin ``floor(t / bin)``; a trailing partial bin is kept.
    """
    if not bin > 0:
        raise ValueError("bin must be positive")
    x = s.offsets
    if x.size == 0:
        raise ValueError("empty offset series")
    idx = np.floor(s.times / bin + 1e-9).astype(np.int64)
    nb = int(idx[-1]) + 1
    n = np.bincount(idx, minlength=nb)
    used = n > 0
    sums = np.bincount(idx, weights=x, minlength=nb)
    means = sums[used] / n[used]
    dev = x - (sums / np.maximum(n, 1))[idx]
    rms = np.sqrt(np.bincount(idx, weights=dev**2, minlength=nb)[used] / n[used])
    sigma = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return DriftStats(
        bin_times=np.flatnonzero(used) * float(bin),
        means=means,
        rms=rms,
        sigma=sigma,
        peak_to_peak=float(means.max() - means.min()),
    )

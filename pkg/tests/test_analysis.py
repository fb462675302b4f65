from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from qcoexist.analysis import (
    AnalysisError,
    CoincidenceHistogram,
    car_estimate,
    car_predict,
    drift_stats,
    find_main_peak,
    histogram,
    linear_fit,
    noise_per_window,
    window_fraction,
)
from qcoexist.channel import RamanContext, raman_power
from qcoexist.photonics import ArmSpec, DetectorSpec, PairSourceSpec, TaggerSpec, background_stream, simulate_link
from qcoexist.sync import OffsetSeries
from qcoexist.units import Power


def brute_histogram(a, b, bw, rng):
    """All pairwise differences, rounded half away from zero onto the bin grid."""
    k = rng // bw
    counts = np.zeros(2 * k + 1, dtype=np.int64)
    for ta in a:
        for tb in b:
            d = int(tb) - int(ta)
            if abs(d) > rng:
                continue
            q = d / bw
            idx = int(math.floor(abs(q) + 0.5)) * (1 if q >= 0 else -1)
            if abs(idx) <= k:
                counts[idx + k] += 1
    return counts


def test_single_pairs():
    h = histogram(np.array([0]), np.array([0]), 10, 60_000)
    assert h.counts.sum() == 1 and h.counts[h.index_of(0)] == 1
    h = histogram(np.array([0]), np.array([5000]), 10, 10_000)
    assert h.counts[h.index_of(5000)] == 1 and h.counts.sum() == 1
    assert h.counts.size == 2 * 1000 + 1


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(0, 20_000), max_size=40),
    st.lists(st.integers(0, 20_000), max_size=40),
    st.sampled_from([1, 7, 10, 25]),
    st.sampled_from([500, 1000, 3000]),
)
def test_histogram_matches_brute_force(a, b, bw, rng):
    rng = (rng // bw) * bw
    a, b = np.sort(np.array(a, dtype=np.int64)), np.sort(np.array(b, dtype=np.int64))
    h = histogram(a, b, bw, rng)
    assert np.array_equal(h.counts, brute_histogram(a, b, bw, rng))
    assert np.array_equal(histogram(b, a, bw, rng).counts, h.counts[::-1])


def test_histogram_rejects_unsorted():
    with pytest.raises(ValueError):
        histogram(np.array([5, 1]), np.array([0]), 10, 1000)


def test_flat_accidental_floor():
    r1, r2, T = 2e5, 3e5, 2e12
    a = background_stream(r1, T, 1).astype(np.int64)
    b = background_stream(r2, T, 2).astype(np.int64)
    h = histogram(a, b, 100, 50_000)
    mean = r1 * r2 * (T / 1e12) * 100e-12
    assert abs(h.counts.mean() - mean) <= 3 * math.sqrt(mean / h.counts.size)
    chi2 = ((h.counts - mean) ** 2 / mean).sum()
    assert stats.chi2.sf(chi2, h.counts.size - 1) > 1e-3


def _peaked(shift=0.0, n=20_000, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.arange(-12, 13) * 5000.0 + shift
    heights = np.where(centers == shift, n, n // 50)
    dts = np.concatenate([rng.normal(c, 150.0, h) for c, h in zip(centers, heights)])
    counts = np.zeros(12001, dtype=np.int64)
    idx = np.rint(dts / 10).astype(int) + 6000
    np.add.at(counts, idx[(idx >= 0) & (idx < counts.size)], 1)
    return CoincidenceHistogram(10, 60_000, counts)


def test_find_main_peak_and_shift():
    assert abs(find_main_peak(_peaked())) <= 10
    assert abs(find_main_peak(_peaked(120.0)) - 120.0) <= 10


def test_flat_histogram_has_no_peak():
    h = CoincidenceHistogram(10, 60_000, np.full(12001, 5))
    with pytest.raises(AnalysisError):
        find_main_peak(h)
    with pytest.raises(AnalysisError):
        car_estimate(CoincidenceHistogram(10, 60_000, np.zeros(12001, dtype=np.int64)))


def test_car_closed_form():
    counts = np.zeros(12001, dtype=np.int64)
    h = CoincidenceHistogram(10, 60_000, counts)
    counts[h.index_of(0)] = 100
    for k in range(1, 11):
        counts[h.index_of(5000 * k)] = 50
        counts[h.index_of(-5000 * k)] = 50
    h = CoincidenceHistogram(10, 60_000, counts)
    r = car_estimate(h, center=0.0)
    assert (r.C, r.A, r.peaks_used) == (100, 50.0, 20)
    assert r.car == pytest.approx(2.0)
    assert r.sigma_car == pytest.approx(2.0 * math.sqrt(0.01 + 0.001), rel=1e-12)


def test_car_equal_windows_is_one():
    counts = np.zeros(12001, dtype=np.int64)
    h0 = CoincidenceHistogram(10, 60_000, counts)
    for k in range(-11, 12):
        counts[h0.index_of(5000 * k)] = 30
    assert car_estimate(CoincidenceHistogram(10, 60_000, counts), center=0.0).car == 1.0


def test_car_zero_accidentals_is_infinite():
    counts = np.zeros(12001, dtype=np.int64)
    counts[6000] = 40
    r = car_estimate(CoincidenceHistogram(10, 60_000, counts), center=0.0)
    assert math.isinf(r.car) and r.accidentals_zero
    assert json.loads(r.to_json())["car"] == "inf"


def test_car_insufficient_range():
    h = CoincidenceHistogram(10, 20_000, np.ones(4001, dtype=np.int64))
    with pytest.raises(AnalysisError):
        car_estimate(h, center=0.0)


def test_car_shift_invariance():
    src = PairSourceSpec(mean_pairs_per_pulse=0.05)
    arms = (ArmSpec(0.5, DetectorSpec(dark_rate=2e4)), ArmSpec(0.5, DetectorSpec(dark_rate=2e4)))
    a, b = simulate_link(src, 5e10, arms, TaggerSpec(), seed=3)
    r1 = car_estimate(histogram(a, b))
    r2 = car_estimate(histogram(a + 123_457, b + 123_457))
    assert r1.car == r2.car
    r3 = car_estimate(histogram(a, b + 130))
    assert abs(r3.center_offset - r1.center_offset - 130) <= 10


def test_car_predict_reference_values():
    assert car_predict(0.02, 1.0, 1.0) == pytest.approx(51.0)
    assert car_predict(0.02, 0.3, 0.1) == pytest.approx(51.0)
    assert 1.0 < car_predict(0.02, 0.5, 0.5, 0.999999, 0.999999) < 1.005
    assert car_predict(0.02, 0.5, 0.5, 1e-12, 0.0) == pytest.approx(51.0, rel=1e-9)
    with pytest.raises(ValueError):
        car_predict(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        car_predict(0.02, 1.5, 1.0)


@given(st.floats(1e-4, 0.5), st.floats(1e-3, 1), st.floats(1e-3, 1), st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0, 0.4))
def test_car_predict_properties(mu, e1, e2, n1, n2, dn):
    c = car_predict(mu, e1, e2, n1, n2)
    assert c == pytest.approx(oracles.car(mu, e1, e2, n1, n2), rel=1e-12)
    assert c == pytest.approx(car_predict(mu, e2, e1, n2, n1), rel=1e-12)
    assert car_predict(mu, e1, e2, n1 + dn, n2) <= c * (1 + 1e-12)
    assert car_predict(mu, e1, e2, n1, n2 + dn) <= c * (1 + 1e-12)


def test_noise_per_window():
    assert noise_per_window(1e4, 450.0) == pytest.approx(4.5e-6)
    f = oracles.gaussian_fraction(450.0, 153.0)
    assert window_fraction(450.0, 153.0) == pytest.approx(f, rel=1e-12)
    assert noise_per_window(1e4, 450.0, 153.0) == pytest.approx(4.5e-6 / f, rel=1e-12)


def test_linear_fit_exact_line():
    r = linear_fit([0, 1, 2, 3], [1, 4, 7, 10])
    assert r.slope == pytest.approx(3.0) and r.intercept == pytest.approx(1.0)
    assert r.r_squared == pytest.approx(1.0, abs=1e-12)
    assert r.slope_sigma == pytest.approx(0.0, abs=1e-12)


def test_linear_fit_weighting_suppresses_outlier():
    x = np.arange(6.0)
    y = 2 * x
    y[3] += 50
    sigma = np.array([1e-6, 1e-6, 1e-6, 1e3, 1e-6, 1e-6])
    assert linear_fit(x, y).slope != pytest.approx(2.0, rel=1e-3)
    assert linear_fit(x, y, sigma).slope == pytest.approx(2.0, rel=1e-9)


def test_linear_fit_matches_scipy():
    rng = np.random.default_rng(1)
    x = np.linspace(0, 10, 30)
    y = 1.5 * x - 2 + rng.normal(0, 0.5, x.size)
    r = linear_fit(x, y)
    ref = stats.linregress(x, y)
    assert r.slope == pytest.approx(ref.slope, rel=1e-12)
    assert r.intercept == pytest.approx(ref.intercept, rel=1e-12)
    assert r.slope_sigma == pytest.approx(ref.stderr, rel=1e-10)
    assert r.intercept_sigma == pytest.approx(ref.intercept_stderr, rel=1e-10)
    assert r.r_squared == pytest.approx(ref.rvalue**2, rel=1e-12)


def test_linear_fit_weighted_matches_scipy_curve_fit():
    from scipy.optimize import curve_fit

    rng = np.random.default_rng(2)
    x = np.linspace(1, 5, 12)
    s = 0.1 + 0.05 * x
    y = 0.7 * x + 0.2 + rng.normal(0, s)
    r = linear_fit(x, y, s)
    popt, pcov = curve_fit(lambda x, m, c: m * x + c, x, y, sigma=s)
    assert r.slope == pytest.approx(popt[0], rel=1e-8)
    assert r.slope_sigma == pytest.approx(math.sqrt(pcov[0, 0]), rel=1e-6)


def test_linear_fit_reproduces_raman_slope():
    p0 = np.linspace(0.1e-3, 2e-3, 8)
    ctx = RamanContext(0.03, 2.12)
    pr = np.array([raman_power(Power(p), 20.8e-10, ctx, 57, 0.076, 0.084).watts for p in p0])
    r = linear_fit(p0, pr)
    assert r.slope == pytest.approx(pr[-1] / p0[-1], rel=1e-9)


def test_linear_fit_degenerate():
    with pytest.raises(ValueError):
        linear_fit([1, 1, 1], [1, 2, 3])
    assert math.isnan(linear_fit([0, 1], [0, 1]).slope_sigma)


def test_drift_stats_definitions():
    const = drift_stats(OffsetSeries(1.0, np.full(500, 3.0)), 100)
    assert np.all(const.means == 3.0) and np.all(const.rms == 0) and const.sigma == 0 and const.peak_to_peak == 0
    g = drift_stats(OffsetSeries(1.0, np.random.default_rng(0).normal(0, 2.2, 20_000)), 100)
    assert g.sigma == pytest.approx(2.2, rel=0.05)
    ramp = drift_stats(OffsetSeries(1.0, np.linspace(0, 5, 50_001)), 100)
    assert ramp.peak_to_peak == pytest.approx(5.0, abs=0.02)


def test_drift_stats_partial_and_oversized_bins():
    s = OffsetSeries(1.0, np.arange(250.0))
    d = drift_stats(s, 100)
    assert d.means.tolist() == [49.5, 149.5, 224.5]
    one = drift_stats(s, 10_000)
    assert one.means.size == 1
    with pytest.raises(ValueError):
        drift_stats(s, 0)


def test_exports():
    h = _peaked()
    lines = h.to_csv().splitlines()
    assert lines[0] == "bin_center_ps,counts" and lines[1].startswith("-60000,")
    assert len(lines) == 12002
    r = linear_fit([0, 1, 2], [0, 1, 2.1])
    assert set(json.loads(r.to_json())) >= {"slope", "intercept", "slope_sigma", "r_squared"}

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qcoexist.photonics import (
    FWHM_PER_SIGMA,
    ArmSpec,
    DetectorSpec,
    PairSourceSpec,
    TaggerSpec,
    apply_dead_time,
    attenuate,
    background_stream,
    detect,
    generate_pairs,
    merge_streams,
    quantize,
    simulate_link,
    substream,
)

IDEAL = DetectorSpec(efficiency=1.0, jitter_sigma=0.0, dark_rate=0.0, dead_time=0.0)
EXACT = TaggerSpec(jitter_sigma=0.0, resolution=1)


def test_defaults_from_fwhm():
    assert PairSourceSpec().photon_sigma == pytest.approx(250 / 2.3548, rel=1e-4)
    assert DetectorSpec().jitter_sigma == pytest.approx(50 / FWHM_PER_SIGMA)
    assert TaggerSpec().jitter_sigma == pytest.approx(10 / FWHM_PER_SIGMA)
    assert PairSourceSpec().pair_rate == pytest.approx(4e6)


def test_pair_count_is_poisson_mean():
    src = PairSourceSpec(mean_pairs_per_pulse=0.02)
    a, b = generate_pairs(src, 5e12, seed=3)
    expected = 0.02 * 1e9
    assert abs(a.size - expected) <= 3 * math.sqrt(expected)
    assert a.size == b.size


def test_single_period_support():
    src = PairSourceSpec(mean_pairs_per_pulse=0.5)
    for seed in range(20):
        a, b = generate_pairs(src, src.pulse_period, seed)
        assert np.all(np.abs(np.concatenate([a, b])) < 6 * src.photon_sigma)


def test_generate_pairs_deterministic_and_validated():
    src = PairSourceSpec()
    x = generate_pairs(src, 1e9, seed=11)
    y = generate_pairs(src, 1e9, seed=11)
    assert x[0].tobytes() == y[0].tobytes() and x[1].tobytes() == y[1].tobytes()
    with pytest.raises(ValueError):
        generate_pairs(src, 100.0, seed=1)
    with pytest.raises(ValueError):
        PairSourceSpec(mean_pairs_per_pulse=1.0)


def test_pair_offsets_independent_per_photon():
    src = PairSourceSpec(mean_pairs_per_pulse=0.5)
    a, b = generate_pairs(src, 2e9, seed=5)
    d = b - a
    assert np.std(d) == pytest.approx(math.sqrt(2) * src.photon_sigma, rel=0.02)
    centers = np.round(a / src.pulse_period) * src.pulse_period
    assert abs(np.corrcoef(a - centers, b - centers)[0, 1]) < 0.01
    assert abs(np.mean(d)) < 3 * np.std(d) / math.sqrt(d.size)


def test_attenuate():
    x = np.arange(1_000_000, dtype=np.float64)
    assert np.array_equal(attenuate(x, 1.0, 1), x)
    assert attenuate(x, 0.0, 1).size == 0
    kept = attenuate(x, 0.0131, 2)
    sd = math.sqrt(1e6 * 0.0131 * (1 - 0.0131))
    assert abs(kept.size - 13100) <= 3 * sd
    assert np.all(np.diff(kept) > 0)
    with pytest.raises(ValueError):
        attenuate(x, 1.5, 1)


def test_background_stream_count_and_exponential_gaps():
    assert background_stream(0.0, 1e12, 1).size == 0
    t = background_stream(2.78e4, 1e12, 4)
    assert abs(t.size - 27800) <= 3 * math.sqrt(27800)
    assert np.all(np.diff(t) >= 0) and t[0] >= 0 and t[-1] < 1e12
    gaps = np.diff(t) / 1e12
    assert stats.kstest(gaps, "expon", args=(0, 1 / 2.78e4)).pvalue > 0.01


def test_background_stream_offset_window():
    t = background_stream(1e5, 1e11, 9, start=5e11)
    assert t.min() >= 5e11 and t.max() < 6e11
    with pytest.raises(ValueError):
        background_stream(-1.0, 1e9, 1)


def test_detect_identity_settings():
    x = np.sort(np.random.default_rng(0).uniform(0, 1e9, 1000)).round()
    out = detect(x, IDEAL, EXACT, seed=1)
    assert out.dtype == np.int64
    assert np.array_equal(out, x.astype(np.int64))


def test_dead_time_rule():
    out = detect(np.array([0.0, 10_000.0, 40_000.0]), DetectorSpec(1.0, 0.0, 0.0, 25_000.0), EXACT, seed=1)
    assert out.tolist() == [0, 40_000]


def test_dead_time_measured_from_accepted_event():
    t = np.array([0.0, 6.0, 12.0, 15.0, 30.0])
    assert apply_dead_time(t, 10.0).tolist() == [0.0, 12.0, 30.0]


@given(st.lists(st.floats(0, 1e6), max_size=200), st.floats(0, 1e4))
def test_dead_time_gaps(values, dead):
    t = np.sort(np.array(values, dtype=np.float64))
    out = apply_dead_time(t, dead)
    if out.size > 1 and dead > 0:
        assert np.min(np.diff(out)) >= dead
    assert out.size <= t.size
    if t.size:
        assert out[0] == t[0]


def test_jitter_width():
    det = DetectorSpec(1.0, 40.0, 0.0, 0.0)
    tag = TaggerSpec(30.0, 1)
    x = np.arange(100_000) * 1e6
    out = detect(x, det, tag, seed=2)
    assert np.std(out - x) == pytest.approx(50.0, rel=0.05)


def test_detect_efficiency_and_background():
    x = np.arange(100_000) * 1e5 + 1e4
    out = detect(x, DetectorSpec(0.5, 0.0, 0.0, 0.0), EXACT, seed=3)
    assert abs(out.size - 50_000) <= 3 * math.sqrt(25_000)
    bg = np.array([5.0, 7.0])
    out = detect(np.empty(0), IDEAL, EXACT, seed=3, background=bg)
    assert out.tolist() == [5, 7]


def test_quantize_resolution():
    assert quantize(np.array([0.4, 14.9, 15.1]), 10).tolist() == [0, 10, 20]


def test_negative_times_dropped():
    out = detect(np.array([0.0, 1000.0]), DetectorSpec(1.0, 500.0, 0.0, 0.0), EXACT, seed=4)
    assert np.all(out >= 0)


def test_merge_streams():
    x = np.array([1, 5, 9])
    assert np.array_equal(merge_streams(x, np.empty(0, dtype=np.int64)), x)
    m = merge_streams(x, np.array([2, 5, 10]))
    assert m.tolist() == [1, 2, 5, 5, 9, 10]
    with pytest.raises(ValueError):
        merge_streams(np.array([3, 1]))


@given(st.lists(st.integers(0, 10**9)), st.lists(st.integers(0, 10**9)))
def test_merge_sorted_and_lossless(a, b):
    a, b = np.sort(np.array(a, dtype=np.int64)), np.sort(np.array(b, dtype=np.int64))
    m = merge_streams(a, b)
    assert m.size == a.size + b.size
    assert np.all(np.diff(m) >= 0)


def test_substreams_independent_of_role_order():
    x = substream(1, "noise", "a", 0).random(4)
    y = substream(1, "noise", "b", 0).random(4)
    z = substream(1, "noise", "a", 0).random(4)
    assert not np.allclose(x, y)
    assert np.array_equal(x, z)


def test_link_singles_rates():
    src = PairSourceSpec(mean_pairs_per_pulse=0.02)
    arm_a = ArmSpec(0.1, DetectorSpec(0.8, 20.0, 500.0, 0.0), 2e4)
    arm_b = ArmSpec(0.3, DetectorSpec(0.8, 20.0, 100.0, 0.0))
    a, b = simulate_link(src, 1e12, (arm_a, arm_b), TaggerSpec(), seed=8)
    for arm, t in ((arm_a, a), (arm_b, b)):
        expected = src.pair_rate * arm.efficiency + arm.noise_rate
        assert abs(t.size - expected) <= 3 * math.sqrt(expected)
        assert np.all(np.diff(t) >= 0)


def test_link_chunking_preserves_law():
    src = PairSourceSpec(mean_pairs_per_pulse=0.05)
    arms = (ArmSpec(0.5, DetectorSpec(1.0, 0.0, 1e3, 0.0)), ArmSpec(0.5, DetectorSpec(1.0, 0.0, 1e3, 0.0)))
    a1, b1 = simulate_link(src, 2e11, arms, TaggerSpec(), seed=1)
    a2, b2 = simulate_link(src, 2e11, arms, TaggerSpec(), seed=1, chunk_events=10_000)
    n = src.pair_rate * 0.2 * 0.5 + 200
    assert abs(a1.size - n) <= 3 * math.sqrt(n) and abs(a2.size - n) <= 3 * math.sqrt(n)
    assert abs(b1.size - b2.size) <= 6 * math.sqrt(n)


def test_link_matches_reference_pipeline_statistically():
    """Coincidence fraction of the fast path equals the pair-by-pair pipeline."""
    src = PairSourceSpec(mean_pairs_per_pulse=0.02, photon_sigma=0.0)
    det = DetectorSpec(1.0, 0.0, 0.0, 0.0)
    ta, tb = 0.3, 0.6
    a, b = simulate_link(src, 5e11, (ArmSpec(ta, det), ArmSpec(tb, det)), EXACT, seed=2)
    fast = np.intersect1d(a, b).size
    pa, pb = generate_pairs(src, 5e11, substream(2, "ref"))
    keep_a = substream(2, "ref", "a").random(pa.size) < ta
    keep_b = substream(2, "ref", "b").random(pb.size) < tb
    slow = np.count_nonzero(keep_a & keep_b)
    expected = src.pair_rate * 0.5 * ta * tb
    assert abs(fast - expected) <= 4 * math.sqrt(expected)
    assert abs(slow - expected) <= 4 * math.sqrt(expected)


def test_link_determinism_and_arm_isolation():
    src = PairSourceSpec()
    base = (ArmSpec(0.2, DetectorSpec(), 1e4), ArmSpec(0.3, DetectorSpec()))
    x = simulate_link(src, 1e11, base, TaggerSpec(), seed=5)
    y = simulate_link(src, 1e11, base, TaggerSpec(), seed=5)
    assert x[0].tobytes() == y[0].tobytes() and x[1].tobytes() == y[1].tobytes()
    # extra noise on arm A must not move a single tag of arm B
    noisier = (ArmSpec(0.2, DetectorSpec(dark_rate=900.0), 5e4), base[1])
    z = simulate_link(src, 1e11, noisier, TaggerSpec(), seed=5)
    assert z[1].tobytes() == x[1].tobytes()
    assert z[0].size > x[0].size


def test_link_zero_duration():
    a, b = simulate_link(PairSourceSpec(), 0.0, (ArmSpec(), ArmSpec()), TaggerSpec(), seed=1)
    assert a.size == 0 and b.size == 0


def test_spec_validation():
    with pytest.raises(ValueError):
        DetectorSpec(efficiency=1.2)
    with pytest.raises(ValueError):
        DetectorSpec(dead_time=-1.0)
    with pytest.raises(ValueError):
        TaggerSpec(resolution=0)
    with pytest.raises(ValueError):
        ArmSpec(transmittance=2.0)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qomsim import presets
from qomsim._validation import ValidationError
from qomsim.correlations import count_in_window
from qomsim.detection import (
    BandpassSpec,
    DetectorSpec,
    FiberSpec,
    Photons,
    TimestampStream,
    apply_attenuator,
    apply_bandpass,
    apply_beamsplitter,
    apply_dichroic,
    apply_fiber,
    dead_time_filter,
    detect,
    read_stream_binary,
    read_streams_csv,
    write_stream_binary,
    write_streams_csv,
)
from qomsim.spdc import generate_events


def photons_at(wavelengths, t=None):
    lam = np.asarray(wavelengths, dtype=float)
    times = np.zeros(lam.size) if t is None else np.asarray(t, dtype=float)
    return Photons(times, lam, np.arange(lam.size), np.zeros(lam.size, np.int8))


def test_detector_spec_validation():
    with pytest.raises(ValidationError):
        DetectorSpec(efficiency=1.5)
    with pytest.raises(ValidationError):
        DetectorSpec(dark_count_rate_cps=-1.0)
    assert DetectorSpec() == DetectorSpec(0.8, 100.0, 50.0, 30.0)


def test_beamsplitter_counts_binomial(rng):
    n = 100_000
    a, b = apply_beamsplitter(photons_at(np.full(n, 1500.0)), 0.5, rng)
    assert len(a) + len(b) == n
    assert abs(len(a) - n / 2) < 5 * math.sqrt(n / 4)


@pytest.mark.parametrize("ratio", [0.0, 1.0, 1.5])
def test_beamsplitter_rejects_closed_ratio(ratio):
    with pytest.raises(ValidationError):
        apply_beamsplitter(photons_at([1500.0]), ratio, 0)


def test_beamsplitter_splits_half_the_pairs():
    ev = generate_events(presets.qom_a(), presets.pump_a(), 5.0, seed=3)
    a, b = apply_beamsplitter(Photons.from_events(ev), 0.5, 7)
    split = np.intersect1d(a.pair_id, b.pair_id).size
    n = len(ev)
    assert abs(split / n - 0.5) < 5 * math.sqrt(0.25 / n)


def test_bandpass_transmission_profile():
    spec = BandpassSpec(1400.0, 50.0)
    assert spec.transmission(1400.0) == pytest.approx(1.0)
    assert spec.transmission(1425.0) == pytest.approx(0.5)
    assert spec.transmission(1400.0 + 3 * 50.0) < 1e-3
    kept = apply_bandpass(photons_at(np.full(1000, 1400.0)), spec, 1)
    assert len(kept) == 1000


def test_bandpass_selects_signal_of_qom_b():
    ev = generate_events(presets.qom_b(), presets.pump_b(200.0), 5.0, seed=2)
    kept = apply_bandpass(Photons.from_events(ev), BandpassSpec(1400.0, 50.0), 4)
    hist, edges = np.histogram(kept.wavelength_nm, bins=np.arange(1300.0, 1600.0, 2.0))
    peak = 0.5 * (edges[np.argmax(hist)] + edges[np.argmax(hist) + 1])
    assert peak == pytest.approx(1391.0, abs=2.0)
    # the 1484 nm partners are blocked
    assert np.sum(np.abs(kept.wavelength_nm - 1484.0) < 5) < 0.01 * np.sum(np.abs(kept.wavelength_nm - 1391.0) < 5)


def test_dichroic_routes_by_wavelength():
    short, long_ = apply_dichroic(photons_at([1391.0, 1484.0, 1437.9, 1438.0]), 1438.0)
    assert short.wavelength_nm.tolist() == [1391.0, 1437.9]
    assert long_.wavelength_nm.tolist() == [1484.0, 1438.0]


def test_attenuator(rng):
    n = 50_000
    out = apply_attenuator(photons_at(np.full(n, 1500.0)), 0.2, rng)
    assert abs(len(out) - 0.2 * n) < 5 * math.sqrt(n * 0.16)
    with pytest.raises(ValidationError):
        apply_attenuator(photons_at([1500.0]), 1.2, rng)


def test_fiber_delays():
    fiber = FiberSpec(3.0, 17.0, 1550.0, base_delay_ps=100.0)
    assert fiber.delay_ps(1550.0) == pytest.approx(100.0)
    out = apply_fiber(photons_at([1391.0, 1484.0]), fiber)
    dt_ps = (out.t_s[1] - out.t_s[0]) * 1e12
    assert dt_ps == pytest.approx(51.0 * (1484.0 - 1391.0))
    assert 51.0 * 94.0 == pytest.approx(4794.0)


def test_zero_length_fiber_is_identity():
    ph = photons_at([1391.0, 1484.0], [1e-3, 2e-3])
    out = apply_fiber(ph, FiberSpec(length_km=0.0))
    assert np.array_equal(out.t_s, ph.t_s)


def test_detect_zero_efficiency_is_empty():
    spec = DetectorSpec(efficiency=0.0, dark_count_rate_cps=0.0, jitter_sigma_ps=0.0, dead_time_ns=0.0)
    assert len(detect(photons_at(np.full(100, 1500.0), np.linspace(0, 1, 100)), spec, 1.0, 0)) == 0


def test_detect_identity_configuration():
    t = np.sort(np.random.default_rng(0).random(1000))
    s = detect(photons_at(np.full(t.size, 1500.0), t), DetectorSpec.ideal(), 1.0, 0)
    assert np.array_equal(s.times_s, t)


def test_dark_counts_are_poisson():
    spec = DetectorSpec(efficiency=1.0, dark_count_rate_cps=1000.0, jitter_sigma_ps=0.0, dead_time_ns=0.0)
    for seed in range(5):
        n = len(detect(Photons.empty(), spec, 10.0, seed))
        assert abs(n - 1e4) < 5 * 100


def test_detect_output_sorted_with_dead_time(rng):
    t = np.sort(rng.random(200_000) * 0.01)
    s = detect(photons_at(np.full(t.size, 1500.0), t), DetectorSpec(), 0.01, rng)
    gaps = np.diff(s.times_s)
    assert np.all(gaps >= 30e-9 * (1 - 1e-12))
    assert np.all((s.times_s >= 0) & (s.times_s <= 0.01))
    assert len(s) <= t.size + s.meta["dark_counts"]


def dead_time_oracle(times, dead):
    kept, last = [], -np.inf
    for x in times:
        if x - last >= dead and x > last:
            kept.append(True)
            last = x
        else:
            kept.append(False)
    return np.array(kept, dtype=bool)


@given(st.lists(st.floats(0, 1e-6), max_size=60), st.floats(0, 2e-7))
def test_dead_time_filter_matches_sequential_oracle(times, dead):
    t = np.sort(np.array(times, dtype=float))
    assert np.array_equal(dead_time_filter(t, dead), dead_time_oracle(t, dead))


def test_ideal_chain_coincidences_equal_split_pairs():
    ev = generate_events(presets.qom_a(), presets.pump_a(), 2.0, seed=8)
    a, b = apply_beamsplitter(Photons.from_events(ev), 0.5, 1)
    sa = detect(a, DetectorSpec.ideal(), 2.0, 2, "A")
    sb = detect(b, DetectorSpec.ideal(), 2.0, 3, "B")
    split = np.intersect1d(a.pair_id, b.pair_id).size
    # both photons keep the shared emission time, so a +-1 fs window catches
    # every split pair and no accidental
    assert count_in_window(sa.times_s, sb.times_s, -1e-3, 1e-3) == split


def test_timestamp_stream_rejects_unsorted():
    with pytest.raises(ValidationError):
        TimestampStream("x", [2.0, 1.0], 3.0)


def test_streams_csv_round_trip(tmp_path):
    s1 = TimestampStream("A", [0.1, 0.25, 0.7], 1.0)
    s2 = TimestampStream("B", [1.0 / 3.0], 1.0)
    path = tmp_path / "s.csv"
    write_streams_csv(path, [s1, s2], {"scenario_sha256": "abc"})
    streams, header = read_streams_csv(path)
    assert header["scenario_sha256"] == "abc"
    assert streams["A"].times_s.tolist() == [0.1, 0.25, 0.7]
    assert streams["B"].times_s[0] == 1.0 / 3.0
    assert streams["B"].duration_s == 1.0


def test_streams_csv_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("channel_id,t_s\nA,notanumber\n")
    with pytest.raises(ValidationError, match="malformed row"):
        read_streams_csv(path)
    path.write_text("a,b\n")
    with pytest.raises(ValidationError):
        read_streams_csv(path)


def test_external_csv_without_header_comments(tmp_path):
    path = tmp_path / "ext.csv"
    path.write_text("channel_id,t_s\nA,0.5\nA,1.5\nB,0.7\n")
    streams, header = read_streams_csv(path, duration_s=2.0)
    assert header == {}
    assert streams["A"].duration_s == 2.0 and len(streams["A"]) == 2


def test_binary_round_trip(tmp_path):
    t = np.sort(np.random.default_rng(1).random(1000))
    path = tmp_path / "A.bin"
    write_stream_binary(path, TimestampStream("A", t, 1.0))
    assert path.stat().st_size == 8 * t.size
    back = read_stream_binary(path, duration_s=1.0)
    assert back.channel_id == "A"
    assert np.array_equal(back.times_s, t)

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qomsim import presets
from qomsim._validation import ValidationError
from qomsim.correlations import CoincidenceHistogram, centered_edges, coincidence_histogram
from qomsim.detection import DetectorSpec, FiberSpec, Photons, apply_beamsplitter, apply_fiber, detect
from qomsim.spdc import generate_events, idler_wavelength
from qomsim.spectroscopy import (
    SpectrumReconstructor,
    delay_to_wavelength,
    reconstruct_spectrum,
    symmetry_center_ps,
    timing_fwhm_ps,
)

FIBER = FiberSpec(3.0, 17.0)


def test_zero_delay_is_degenerate():
    assert delay_to_wavelength(0.0, FIBER, 723.0) == pytest.approx((1446.0, 1446.0))


def test_delay_for_qom_b_pair():
    s, i = delay_to_wavelength(4794.0, FIBER, 718.0)
    assert s == pytest.approx(1391.0, abs=0.5)
    assert i == pytest.approx(1485.0, abs=0.5)
    assert delay_to_wavelength(-4794.0, FIBER, 718.0) == (s, i)


@pytest.mark.parametrize("dt,expected", [
    (510.0, (1441.0173, 1451.0173)),
    (4794.0, (1400.5261, 1494.5260)),
    (10000.0, (1354.5776, 1550.6560)),
])
def test_delay_matches_root_finding_oracle(dt, expected):
    assert delay_to_wavelength(dt, FIBER, 723.0) == pytest.approx(expected, abs=1e-3)


@given(signal=st.floats(1000.0, 1445.9))
def test_delay_inverts_forward_model(signal):
    idler = idler_wavelength(723.0, signal)
    dt = FIBER.ps_per_nm * (idler - signal)
    s, i = delay_to_wavelength(dt, FIBER, 723.0)
    assert s == pytest.approx(signal, rel=1e-9)
    assert i == pytest.approx(idler, rel=1e-9)


def test_delay_array_input():
    s, i = delay_to_wavelength(np.array([0.0, 510.0]), FIBER, 723.0)
    assert s.shape == i.shape == (2,)


def test_delay_errors():
    with pytest.raises(ValidationError):
        delay_to_wavelength(100.0, FiberSpec(3.0, 0.0), 723.0)
    with pytest.raises(ValidationError, match="physical domain"):
        delay_to_wavelength(10000.0, FIBER, 723.0, max_wavelength_nm=1500.0)


def test_resolution_from_timing_jitter():
    assert timing_fwhm_ps() == pytest.approx(2 * math.sqrt(2 * math.log(2)) * math.sqrt(2) * 50.0)
    h = CoincidenceHistogram(10.0, centered_edges(10.0, 3000.0), np.zeros(601), 1.0)
    spec = reconstruct_spectrum(h, FIBER, 723.0)
    assert spec.resolution_nm == pytest.approx(166.5 / 51.0, rel=1e-3)
    longer = reconstruct_spectrum(h, FiberSpec(6.0, 17.0), 723.0)
    assert longer.resolution_nm == pytest.approx(spec.resolution_nm / 2)


def histogram_from_pairs(signal_nm, pump_nm, fiber, bin_ps=10.0, span_ps=30000.0, seed=0):
    """Synthetic post-fiber histogram: random which-arm assignment, no jitter."""
    idler = idler_wavelength(pump_nm, signal_nm)
    dt = fiber.ps_per_nm * (idler - signal_nm)
    sign = np.random.default_rng(seed).choice([-1.0, 1.0], dt.size)
    edges = centered_edges(bin_ps, span_ps)
    counts, _ = np.histogram(sign * dt, bins=edges)
    return CoincidenceHistogram(bin_ps, edges, counts, 1.0)


def test_flat_pair_spectrum_stays_flat():
    rng = np.random.default_rng(1)
    signal = rng.uniform(1380.0, 1440.0, 400_000)
    h = histogram_from_pairs(signal, 723.0, FIBER)
    spec = reconstruct_spectrum(h, FIBER, 723.0, lambda_bin_nm=2.0, subtract_background=False,
                                lambda_range_nm=(1300, 1600))
    inside = (spec.lambda_nm > 1385) & (spec.lambda_nm < 1435)
    y = spec.intensity[inside]
    assert y.std() / y.mean() < 0.03
    # counts are conserved: every pair adds to a signal bin and an idler bin
    assert spec.intensity.sum() == pytest.approx(2 * h.total, rel=1e-9)


def test_symmetry_center_recovers_offset():
    rng = np.random.default_rng(2)
    h = histogram_from_pairs(rng.normal(1391.0, 2.0, 50_000), 723.0, FIBER)
    shifted = CoincidenceHistogram(h.bin_width_ps, h.edges_ps, np.roll(h.counts, 13), 1.0)
    assert symmetry_center_ps(shifted) == pytest.approx(130.0, abs=10.0)
    assert symmetry_center_ps(CoincidenceHistogram(10.0, h.edges_ps, np.zeros_like(h.counts), 1.0)) == 0.0


def simulated_spectrum(metasurface, pump, duration_s, seed):
    ev = generate_events(metasurface, pump, duration_s, seed=seed)
    ph = apply_fiber(Photons.from_events(ev), FIBER)
    a, b = apply_beamsplitter(ph, 0.5, seed + 1)
    det = DetectorSpec()
    sa = detect(a, det, duration_s, seed + 2, "A")
    sb = detect(b, det, duration_s, seed + 3, "B")
    h = coincidence_histogram(sa, sb, 10.0, 30000.0)
    return reconstruct_spectrum(h, FIBER, pump.wavelength_nm, lambda_range_nm=(1300, 1650))


@pytest.fixture(scope="module")
def spectrum_a():
    return simulated_spectrum(presets.qom_a(), presets.pump_a(100.0), 20.0, 11)


def test_end_to_end_qom_a(spectrum_a):
    peaks = spectrum_a.peaks()
    assert peaks[0]["center_nm"] == pytest.approx(1446.0, abs=1.0)
    # intrinsic 2.8 nm line convolved with the 3.3 nm timing resolution
    assert peaks[0]["fwhm_nm"] == pytest.approx(4.3, abs=1.0)


def test_end_to_end_qom_b():
    spec = simulated_spectrum(presets.qom_b(), presets.pump_b(100.0), 20.0, 21)
    centers = sorted(p["center_nm"] for p in spec.peaks()[:2])
    assert centers[0] == pytest.approx(1391.0, abs=1.0)
    assert centers[1] == pytest.approx(1484.0, abs=1.0)


def test_end_to_end_qom_c():
    spec = simulated_spectrum(presets.qom_c(), presets.pump_c(100.0), 20.0, 31)
    peaks = spec.peaks()
    centers = sorted(p["center_nm"] for p in peaks[:4])
    expected = sorted([1359.0, idler_wavelength(725.0, 1359.0), 1429.0, idler_wavelength(725.0, 1429.0)])
    assert centers == pytest.approx(expected, abs=1.0)
    by_center = {round(p["center_nm"]): p for p in peaks[:4]}
    md = min(by_center.items(), key=lambda kv: abs(kv[0] - 1429))[1]
    ed = min(by_center.items(), key=lambda kv: abs(kv[0] - 1359))[1]
    assert md["fwhm_nm"] < ed["fwhm_nm"]


def test_reconstructor_estimator(spectrum_a):
    rng = np.random.default_rng(3)
    h = histogram_from_pairs(rng.normal(1440.0, 1.0, 50_000), 723.0, FIBER)
    shifted = CoincidenceHistogram(h.bin_width_ps, h.edges_ps, np.roll(h.counts, 20), 1.0)
    model = SpectrumReconstructor(zero_delay_ps="auto", subtract_background=False)
    spec = model.fit_transform(shifted)
    assert model.zero_delay_ == pytest.approx(200.0, abs=10.0)
    centers = sorted(p["center_nm"] for p in spec.peaks()[:2])
    assert centers[0] == pytest.approx(1440.0, abs=0.5)
    assert model.get_params()["pump_nm"] == 723.0


def test_reconstructor_requires_fit():
    from sklearn.exceptions import NotFittedError

    h = CoincidenceHistogram(10.0, centered_edges(10.0, 3000.0), np.zeros(601), 1.0)
    with pytest.raises(NotFittedError):
        SpectrumReconstructor().transform(h)


def test_spectrum_outputs(tmp_path, spectrum_a):
    spectrum_a.to_csv(tmp_path / "s.csv", {"scenario_sha256": "abc"})
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[:2] == ["# scenario_sha256=abc", "lambda_nm,intensity,lambda_err_nm"]
    spectrum_a.to_json(tmp_path / "s.json")
    meta = json.loads((tmp_path / "s.json").read_text())
    assert meta["resolution_nm"] == pytest.approx(spectrum_a.resolution_nm)
    assert meta["fiber_length_km"] == 3.0


@pytest.mark.parametrize("seed", range(4))
def test_round_trip_recovers_peaks_within_resolution(seed):
    from qomsim.optics import Metasurface, Resonance
    from qomsim.spdc import PumpConfig

    rng = np.random.default_rng(seed)
    center = float(rng.uniform(1370.0, 1430.0))
    ms = Metasurface("r", [Resonance("ED", center, float(rng.uniform(300, 1000)), 0.0)])
    spec = simulated_spectrum(ms, PumpConfig(723.0, 1000.0), 5.0, 40 + seed)
    found = sorted(p["center_nm"] for p in spec.peaks()[:2])
    expected = sorted([center, idler_wavelength(723.0, center)])
    assert np.all(np.abs(np.array(found) - expected) <= spec.resolution_nm)

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qomsim import presets
from qomsim._validation import ValidationError
from qomsim.optics import (
    Metasurface,
    Resonance,
    enhancement,
    fwhm,
    load_metasurface,
    lorentzian,
    measured_fwhm,
    transmission_spectrum,
    write_transmission_csv,
)


def single(center=1446.0, q=330.0, axis=0.0, kappa=3.5):
    return Metasurface("one", [Resonance("ED-BIC", center, q, axis, kappa)])


def test_fwhm_examples():
    assert fwhm(Resonance("ED", 1446.0, 330.0)) == pytest.approx(4.3818, abs=1e-4)
    assert round(fwhm(Resonance("ED", 1446.0, 330.0)), 2) == 4.38
    assert fwhm(Resonance("MD", 1512.0, 1000.0)) == pytest.approx(1.512)
    assert fwhm(Resonance("X", 1234.5, 1.0)) == 1234.5


def test_resonance_validation():
    with pytest.raises(ValidationError):
        Resonance("bad", 1446.0, 0.0)
    with pytest.raises(ValidationError):
        Resonance("bad", -1.0, 330.0)
    assert Resonance("r", 1400.0, 100.0, pol_axis_deg=190.0).pol_axis_deg == pytest.approx(10.0)


def test_metasurface_validation():
    with pytest.raises(ValidationError):
        Metasurface("empty", [])
    with pytest.raises(ValidationError):
        Metasurface("dup", [Resonance("a", 1400.0, 100.0), Resonance("b", 1400.0, 200.0)])
    with pytest.raises(ValidationError):
        Metasurface("chi", [Resonance("a", 1400.0, 100.0)], chi2_pm_per_V=0.0)


def test_enhancement_peak_is_one_plus_kappa_q():
    assert enhancement(single(kappa=1.0), 1446.0, 0.0) == pytest.approx(331.0)
    ms = single()
    assert enhancement(ms, 1446.0) == pytest.approx(1.0 + 3.5 * 330.0)
    half = 1.0 + 3.5 * 330.0 / 2.0
    w = 1446.0 / 330.0
    assert enhancement(ms, 1446.0 + w / 2) == pytest.approx(half)
    assert enhancement(ms, 1446.0 - w / 2) == pytest.approx(half)


def test_enhancement_far_detuned_is_baseline():
    assert enhancement(single(), 1000.0) == pytest.approx(1.0, abs=0.05)
    assert enhancement(single(), 1e6) == pytest.approx(1.0, abs=1e-6)


def test_enhancement_returns_float_for_scalar_and_array_for_array():
    assert isinstance(enhancement(single(), 1446.0), float)
    out = enhancement(single(), np.array([1440.0, 1446.0]))
    assert out.shape == (2,)


def test_enhancement_rejects_nonpositive_wavelength():
    with pytest.raises(ValidationError):
        enhancement(single(), 0.0)


@given(theta=st.floats(-360, 360), axis=st.floats(0, 179.9))
def test_malus_law(theta, axis):
    ms = single(axis=axis)
    excess = enhancement(ms, 1446.0, theta) - 1.0
    expected = 3.5 * 330.0 * math.cos(math.radians(theta - axis)) ** 2
    assert excess == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_zero_coupling_at_orthogonal_polarization():
    assert enhancement(single(axis=0.0), 1446.0, 90.0) == pytest.approx(1.0, abs=1e-9)


@given(lam=st.floats(500, 3000), pol=st.floats(0, 180))
def test_enhancement_at_least_one_and_peak_at_center(lam, pol):
    ms = presets.qom_a()
    value = enhancement(ms, lam, pol)
    assert value >= 1.0
    assert enhancement(single(), 1446.0) >= enhancement(single(), lam)


@pytest.mark.parametrize("center,q", [(1446.0, 330.0), (1512.0, 1000.0), (1359.0, 50.0)])
def test_measured_linewidth_matches_q(center, q):
    ms = single(center, q)
    w = center / q
    grid = np.linspace(center - 10 * w, center + 10 * w, 20001)
    measured = measured_fwhm(grid, enhancement(ms, grid) - 1.0)
    assert measured == pytest.approx(w, rel=0.01)


def test_lorentzian_unit_peak():
    assert lorentzian(1446.0, 1446.0, 4.0) == pytest.approx(1.0)
    assert lorentzian(1448.0, 1446.0, 4.0) == pytest.approx(0.5)


def test_transmission_has_peaks_at_both_modes_with_their_widths():
    ms = presets.qom_a()
    grid = np.arange(1400.0, 1560.0, 0.01)
    spec = transmission_spectrum(ms, grid, pol_deg=45.0)
    lam = np.array([p[0] for p in spec])
    t = np.array([p[1] for p in spec])
    assert np.all((t >= 0) & (t <= 1))
    for center, width in ((1446.0, 4.38), (1512.0, 1.512)):
        window = np.abs(lam - center) < 6 * width
        peak = lam[window][np.argmax(t[window])]
        assert peak == pytest.approx(center, abs=0.05)
        sub_lam, sub_t = lam[window], t[window]
        baseline = np.interp(sub_lam, [sub_lam[0], sub_lam[-1]], [sub_t[0], sub_t[-1]])
        measured = measured_fwhm(sub_lam, sub_t - baseline)
        assert round(measured, 1) == pytest.approx(round(width, 1), abs=0.15)


def test_transmission_orthogonal_polarization_is_featureless():
    ms = single(axis=0.0)
    grid = np.linspace(1400, 1500, 501)
    t = np.array([p[1] for p in transmission_spectrum(ms, grid, pol_deg=90.0)])
    assert np.all(np.diff(t) >= -1e-12)


def test_transmission_single_point_and_empty_grid():
    assert transmission_spectrum(single(), []) == []
    [(lam, t)] = transmission_spectrum(single(), [1446.0])
    assert lam == 1446.0 and 0 <= t <= 1


def test_transmission_rejects_unsorted_grid():
    with pytest.raises(ValidationError):
        transmission_spectrum(single(), [1450.0, 1440.0])


def test_transmission_fano_shape_is_asymmetric():
    ms = Metasurface("f", [Resonance("ED", 1446.0, 330.0, fano_asymmetry=2.0)])
    w = 1446.0 / 330.0
    lo = dict(transmission_spectrum(ms, [1446.0 - w]))[1446.0 - w]
    hi = dict(transmission_spectrum(ms, [1446.0 + w]))[1446.0 + w]
    assert lo != pytest.approx(hi, abs=1e-3)


def test_transmission_csv(tmp_path):
    path = tmp_path / "t.csv"
    write_transmission_csv(path, transmission_spectrum(single(), [1440.0, 1446.0]))
    lines = path.read_text().splitlines()
    assert lines[0] == "wavelength_nm,transmittance"
    assert len(lines) == 3


def test_metasurface_config_round_trip(tmp_path):
    ms = Metasurface("fano", [Resonance("ED", 1400.0, 300.0, 10.0, 2.0, fano_asymmetry=1.5)], 420.0, 480.0)
    path = tmp_path / "ms.json"
    path.write_text(json.dumps(ms.to_dict()))
    assert load_metasurface(path) == ms


def test_metasurface_config_missing_field():
    with pytest.raises(ValidationError, match="resonances"):
        Metasurface.from_dict({"name": "x"})

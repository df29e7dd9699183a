"""Parametric optical response of resonant metasurfaces.

Resonances are described by their center wavelength, quality factor,
polarization axis and a peak-enhancement scale ``kappa``.  The local
vacuum-field enhancement seen by a spontaneously emitted photon is

    E(lam) = 1 + sum_r kappa_r * Q_r * L_r(lam) * cos^2(theta - theta_r)

with ``L_r`` a unit-peak Lorentzian of width ``lam_r / Q_r``.  Far from every
resonance the enhancement tends to 1, which is the unpatterned-film baseline.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._validation import ValidationError, check_positive

DEFAULT_KAPPA = 3.5


@dataclass(frozen=True)
class Resonance:
    """A quasi-BIC mode."""

    label: str
    center_wavelength_nm: float
    q_factor: float
    pol_axis_deg: float = 0.0
    peak_enhancement_scale: float = DEFAULT_KAPPA
    fano_asymmetry: Optional[float] = None

    def __post_init__(self):
        check_positive(self.center_wavelength_nm, "center_wavelength_nm")
        check_positive(self.q_factor, "q_factor")
        check_positive(self.peak_enhancement_scale, "peak_enhancement_scale")
        # stored folded into [0, 180)
        object.__setattr__(self, "pol_axis_deg", float(self.pol_axis_deg) % 180.0)

    @property
    def fwhm_nm(self):
        return fwhm(self)

    @property
    def peak_enhancement(self):
        return self.peak_enhancement_scale * self.q_factor

    def coupling(self, pump_pol_deg):
        """Malus-law coupling cos^2 between pump polarization and mode axis."""
        return math.cos(math.radians(pump_pol_deg - self.pol_axis_deg)) ** 2


@dataclass(frozen=True)
class Metasurface:
    name: str
    resonances: tuple = field(default_factory=tuple)
    chi2_pm_per_V: float = 450.0
    film_thickness_nm: float = 500.0

    def __post_init__(self):
        object.__setattr__(self, "resonances", tuple(self.resonances))
        if not self.resonances:
            raise ValidationError(f"metasurface {self.name!r} needs at least one resonance")
        centers = [r.center_wavelength_nm for r in self.resonances]
        if len(set(centers)) != len(centers):
            raise ValidationError(
                f"metasurface {self.name!r} has duplicate resonance center wavelengths"
            )
        check_positive(self.chi2_pm_per_V, "chi2_pm_per_V")
        check_positive(self.film_thickness_nm, "film_thickness_nm")

    def resonance(self, label):
        for r in self.resonances:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self):
        return {
            "name": self.name,
            "chi2": self.chi2_pm_per_V,
            "thickness_nm": self.film_thickness_nm,
            "resonances": [
                {
                    "label": r.label,
                    "center_nm": r.center_wavelength_nm,
                    "q": r.q_factor,
                    "pol_axis_deg": r.pol_axis_deg,
                    "kappa": r.peak_enhancement_scale,
                    **({"fano_q": r.fano_asymmetry} if r.fano_asymmetry is not None else {}),
                }
                for r in self.resonances
            ],
        }

    @classmethod
    def from_dict(cls, data):
        """Build from the declarative config layout (see :meth:`to_dict`)."""
        try:
            resonances = [
                Resonance(
                    label=str(r["label"]),
                    center_wavelength_nm=float(r["center_nm"]),
                    q_factor=float(r["q"]),
                    pol_axis_deg=float(r.get("pol_axis_deg", 0.0)),
                    peak_enhancement_scale=float(r.get("kappa", DEFAULT_KAPPA)),
                    fano_asymmetry=(None if r.get("fano_q") is None else float(r["fano_q"])),
                )
                for r in data["resonances"]
            ]
            return cls(
                name=str(data["name"]),
                resonances=resonances,
                chi2_pm_per_V=float(data.get("chi2", 450.0)),
                film_thickness_nm=float(data.get("thickness_nm", 500.0)),
            )
        except KeyError as exc:
            raise ValidationError(f"metasurface config is missing field {exc.args[0]!r}") from None


def load_metasurface(path):
    with open(path, encoding="utf-8") as fh:
        return Metasurface.from_dict(json.load(fh))


def fwhm(resonance):
    """Linewidth ``lambda_0 / Q`` in nm."""
    return resonance.center_wavelength_nm / resonance.q_factor


def lorentzian(wavelength_nm, center_nm, fwhm_nm):
    """Unit-peak Lorentzian."""
    x = 2.0 * (np.asarray(wavelength_nm, dtype=float) - center_nm) / fwhm_nm
    return 1.0 / (1.0 + x * x)


def enhancement(metasurface, wavelength_nm, pump_pol_deg=0.0):
    """Vacuum-field enhancement factor (>= 1) at ``wavelength_nm``.

    Works elementwise on arrays and returns a float for scalar input.
    """
    lam = np.asarray(wavelength_nm, dtype=float)
    if np.any(lam <= 0):
        raise ValidationError("wavelength must be positive")
    total = np.ones_like(lam)
    for r in metasurface.resonances:
        c = r.coupling(pump_pol_deg)
        if c == 0.0:
            continue
        total = total + r.peak_enhancement * c * lorentzian(lam, r.center_wavelength_nm, r.fwhm_nm)
    return float(total) if total.ndim == 0 else total


def _fano_profile(eps, q):
    # Normalized so the maximum is 1; reduces to a Lorentzian as q -> inf.
    if q is None:
        return 1.0 / (1.0 + eps * eps)
    return (q + eps) ** 2 / ((1.0 + eps * eps) * (1.0 + q * q))


def transmission_spectrum(
    metasurface,
    wavelength_grid,
    pol_deg=0.0,
    *,
    background=(0.55, 0.65),
    feature_depth=0.35,
):
    """Display-grade white-light transmittance.

    A linear background rising from ``background[0]`` to ``background[1]``
    across the grid carries one narrow peak per polarization-coupled
    resonance, with the resonance's FWHM.  Resonances with a
    ``fano_asymmetry`` get an asymmetric Fano shape instead.  Values are
    clipped to [0, 1].

    Returns a list of ``(wavelength_nm, transmittance)`` tuples.
    """
    grid = np.asarray(wavelength_grid, dtype=float)
    if grid.size == 0:
        return []
    if grid.size > 1 and np.any(np.diff(grid) < 0):
        raise ValidationError("wavelength grid must be sorted ascending")
    lo, hi = grid[0], grid[-1]
    frac = np.zeros_like(grid) if hi == lo else (grid - lo) / (hi - lo)
    trans = background[0] + (background[1] - background[0]) * frac
    for r in metasurface.resonances:
        c = r.coupling(pol_deg)
        if c < 1e-12:
            continue
        eps = 2.0 * (grid - r.center_wavelength_nm) / r.fwhm_nm
        trans = trans + feature_depth * c * _fano_profile(eps, r.fano_asymmetry)
    trans = np.clip(trans, 0.0, 1.0)
    return list(zip(grid.tolist(), trans.tolist()))


def write_transmission_csv(path, spectrum):
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength_nm", "transmittance"])
        for lam, t in spectrum:
            writer.writerow([repr(lam), repr(t)])


def measured_fwhm(wavelength_nm: Sequence[float], values: Sequence[float], baseline=0.0):
    """FWHM of the tallest peak in a sampled curve, by linear interpolation."""
    x = np.asarray(wavelength_nm, dtype=float)
    y = np.asarray(values, dtype=float) - baseline
    i = int(np.argmax(y))
    half = y[i] / 2.0
    if half <= 0:
        return float("nan")
    left = i
    while left > 0 and y[left] > half:
        left -= 1
    right = i
    while right < y.size - 1 and y[right] > half:
        right += 1
    if y[left] > half or y[right] > half:
        return float("nan")
    xl = np.interp(half, [y[left], y[left + 1]], [x[left], x[left + 1]])
    xr = np.interp(half, [y[right], y[right - 1]], [x[right], x[right - 1]])
    return float(xr - xl)

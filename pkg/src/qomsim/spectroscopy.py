"""Two-photon fiber-assisted spectroscopy.

Both photons of a pair cross the same dispersive fiber before the beam
splitter, so their arrival-time difference is ``D * L * (lam_i - lam_s)``.
Together with energy conservation this fixes the pair; the histogram of
arrival-time differences therefore maps onto the pair spectrum.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks, peak_widths
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, check_positive
from .detection import DetectorSpec, FiberSpec

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def timing_fwhm_ps(*detectors):
    """Combined timing FWHM of a coincidence between the given detectors."""
    if not detectors:
        detectors = (DetectorSpec(), DetectorSpec())
    return FWHM_PER_SIGMA * math.sqrt(sum(d.jitter_sigma_ps ** 2 for d in detectors))


def _signal_from_separation(sep_nm, pump_nm):
    # positive root of k s^2 + (k d - 2) s - d = 0, with k = 1 / lam_p
    k = 1.0 / pump_nm
    d = np.asarray(sep_nm, dtype=float)
    kd = k * d
    root = np.sqrt(kd * kd + 4.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = ((2.0 - kd) + root) / (2.0 * k)
        large = 2.0 * d / (root + kd - 2.0)
    return np.where(kd < 2.0, small, large)


def delay_to_wavelength(dt_ps, fiber, pump_nm, max_wavelength_nm=None):
    """Pair wavelengths ``(lam_s, lam_i)`` with ``lam_s <= lam_i`` for a delay.

    The sign of ``dt_ps`` is folded away since either photon may reach
    either detector.  Works elementwise on arrays.

    Raises
    ------
    ValidationError
        For a dispersion-free fiber, or if the idler would exceed
        ``max_wavelength_nm`` or is not finite.
    """
    slope = fiber.ps_per_nm
    if slope == 0:
        raise ValidationError("fiber has zero dispersion: delays carry no wavelength information")
    check_positive(pump_nm, "pump_nm")
    sep = np.abs(np.asarray(dt_ps, dtype=float)) / abs(slope)
    lam_s = _signal_from_separation(sep, pump_nm)
    lam_i = lam_s + sep
    if not np.all(np.isfinite(lam_i)):
        raise ValidationError("delay maps outside the physical wavelength domain")
    if max_wavelength_nm is not None and np.any(lam_i > max_wavelength_nm):
        raise ValidationError(
            f"delay implies an idler beyond {max_wavelength_nm} nm, outside the physical domain"
        )
    if lam_s.ndim == 0:
        return float(lam_s), float(lam_i)
    return lam_s, lam_i


def symmetry_center_ps(histogram):
    """Delay about which a coincidence histogram is most nearly symmetric.

    Located from the maximum of the histogram's self-convolution, refined by
    a parabola through the three highest points.
    """
    h = np.asarray(histogram.counts, dtype=float)
    if h.sum() == 0:
        return 0.0
    h = h - np.median(h)
    conv = np.convolve(h, h)
    i = int(np.argmax(conv))
    shift = 0.0
    if 0 < i < conv.size - 1:
        y0, y1, y2 = conv[i - 1], conv[i], conv[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom != 0:
            shift = 0.5 * (y0 - y2) / denom
    # index i of the self-convolution corresponds to bin position i / 2
    pos = (i + shift) / 2.0
    centers = histogram.centers_ps
    return float(centers[0] + pos * histogram.bin_width_ps)


@dataclass
class ReconstructedSpectrum:
    """Coincidence counts per wavelength bin; each coincidence adds to both
    its signal and its idler bin."""

    lambda_nm: np.ndarray
    intensity: np.ndarray
    lambda_err_nm: np.ndarray
    resolution_nm: float
    bin_width_nm: float
    meta: dict = field(default_factory=dict)

    def peaks(self, min_prominence=0.05, smooth_nm=None):
        """Peak centers and FWHMs, largest first.

        Centers are intensity centroids over each peak's half-maximum
        width.  ``min_prominence`` is relative to the tallest peak.
        """
        y = np.asarray(self.intensity, dtype=float)
        if smooth_nm:
            n = max(1, int(round(smooth_nm / self.bin_width_nm)))
            y = np.convolve(y, np.ones(n) / n, mode="same")
        if y.max() <= 0:
            return []
        idx, _ = find_peaks(y, prominence=min_prominence * y.max())
        if idx.size == 0:
            return []
        widths, _, left, right = peak_widths(y, idx, rel_height=0.5)
        out = []
        for k, w, lft, rgt in zip(idx, widths, left, right):
            lo, hi = int(math.floor(lft)), int(math.ceil(rgt)) + 1
            seg = slice(max(lo, 0), min(hi, y.size))
            weights = y[seg]
            center = float(np.sum(self.lambda_nm[seg] * weights) / np.sum(weights))
            out.append({"center_nm": center, "fwhm_nm": float(w * self.bin_width_nm),
                        "height": float(y[k])})
        out.sort(key=lambda p: -p["height"])
        return out

    def to_csv(self, path, header=None):
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            for key, value in (header or {}).items():
                fh.write(f"# {key}={value}\n")
            writer = csv.writer(fh)
            writer.writerow(["lambda_nm", "intensity", "lambda_err_nm"])
            for row in zip(self.lambda_nm.tolist(), self.intensity.tolist(), self.lambda_err_nm.tolist()):
                writer.writerow([repr(v) for v in row])

    def metadata(self):
        return {"resolution_nm": self.resolution_nm, "bin_width_nm": self.bin_width_nm, **self.meta}

    def to_json(self, path):
        with open(Path(path), "w", encoding="utf-8") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _deposit(target, edges, lo, hi, weight):
    # spread weight uniformly over [lo, hi) into the bins given by edges
    for a, b, w in zip(lo.tolist(), hi.tolist(), weight.tolist()):
        if w == 0:
            continue
        i0 = max(int(np.searchsorted(edges, a, side="right")) - 1, 0)
        i1 = min(int(np.searchsorted(edges, b, side="left")), edges.size - 1)
        span = b - a
        if span <= 0:
            if 0 <= i0 < target.size:
                target[i0] += w
            continue
        for i in range(i0, i1):
            overlap = min(b, edges[i + 1]) - max(a, edges[i])
            if overlap > 0:
                target[i] += w * overlap / span
    return target


def reconstruct_spectrum(
    histogram,
    fiber,
    pump_nm,
    *,
    lambda_bin_nm=1.0,
    zero_delay_ps=0.0,
    timing_fwhm=None,
    subtract_background=True,
    lambda_range_nm=None,
):
    """Map a post-fiber coincidence histogram onto wavelength.

    Each delay bin is folded to ``|dt|``, converted to the signal and idler
    wavelength intervals it covers, and its counts are spread uniformly over
    those intervals.  Spreading by interval overlap carries the Jacobian of
    the delay-to-wavelength map, so a flat pair spectrum stays flat.

    Parameters
    ----------
    histogram : CoincidenceHistogram
    fiber : FiberSpec
    pump_nm : float
    lambda_bin_nm : float
    zero_delay_ps : float
        Delay offset between the two detector paths.
    timing_fwhm : float, optional
        Coincidence timing FWHM in ps; defaults to two default detectors.
    subtract_background : bool
        Remove the median bin content (the accidental floor) first.

    Returns
    -------
    ReconstructedSpectrum
        ``resolution_nm = timing_fwhm / (D * L)``.
    """
    if fiber.ps_per_nm == 0:
        raise ValidationError("reconstruction needs a dispersive fiber")
    check_positive(lambda_bin_nm, "lambda_bin_nm")
    slope = abs(fiber.ps_per_nm)
    counts = np.asarray(histogram.counts, dtype=float)
    if subtract_background:
        counts = np.clip(counts - np.median(counts), 0.0, None)
    e0 = histogram.edges_ps[:-1] - zero_delay_ps
    e1 = histogram.edges_ps[1:] - zero_delay_ps
    u0 = np.where(e0 >= 0, e0, np.where(e1 <= 0, -e1, 0.0))
    u1 = np.where(e0 >= 0, e1, np.where(e1 <= 0, -e0, np.maximum(-e0, e1)))
    s_hi, i_lo = delay_to_wavelength(u0, fiber, pump_nm)
    s_lo, i_hi = delay_to_wavelength(u1, fiber, pump_nm)

    if lambda_range_nm is None:
        lo, hi = float(np.min(s_lo)), float(np.max(i_hi))
    else:
        lo, hi = lambda_range_nm
    lo = math.floor(lo / lambda_bin_nm) * lambda_bin_nm
    hi = math.ceil(hi / lambda_bin_nm) * lambda_bin_nm
    n_bins = max(1, int(round((hi - lo) / lambda_bin_nm)))
    edges = lo + lambda_bin_nm * np.arange(n_bins + 1)
    intensity = np.zeros(n_bins)
    _deposit(intensity, edges, s_lo, s_hi, counts)
    _deposit(intensity, edges, i_lo, i_hi, counts)

    centers = 0.5 * (edges[1:] + edges[:-1])
    fwhm_t = timing_fwhm if timing_fwhm is not None else timing_fwhm_ps()
    resolution = fwhm_t / slope
    # per-photon wavelength spread: d(lam)/d(separation) = lam^2 / (lam^2 + partner^2)
    partner = 1.0 / (1.0 / pump_nm - 1.0 / np.maximum(centers, pump_nm * (1.0 + 1e-9)))
    lam_err = resolution * centers ** 2 / (centers ** 2 + partner ** 2)
    meta = {
        "fiber_length_km": fiber.length_km,
        "dispersion_ps_per_nm_km": fiber.dispersion_ps_per_nm_km,
        "pump_nm": pump_nm,
        "timing_fwhm_ps": fwhm_t,
        "zero_delay_ps": zero_delay_ps,
    }
    return ReconstructedSpectrum(centers, intensity, lam_err, resolution, float(lambda_bin_nm), meta)


class SpectrumReconstructor(BaseEstimator):
    """Estimator wrapper around :func:`reconstruct_spectrum`.

    ``fit`` learns the zero-delay offset from the histogram symmetry when
    ``zero_delay_ps="auto"``; ``transform`` maps a histogram to a spectrum.
    """

    def __init__(self, pump_nm=723.0, length_km=3.0, dispersion_ps_per_nm_km=17.0,
                 lambda_bin_nm=1.0, zero_delay_ps=0.0, timing_fwhm_ps=None,
                 subtract_background=True):
        self.pump_nm = pump_nm
        self.length_km = length_km
        self.dispersion_ps_per_nm_km = dispersion_ps_per_nm_km
        self.lambda_bin_nm = lambda_bin_nm
        self.zero_delay_ps = zero_delay_ps
        self.timing_fwhm_ps = timing_fwhm_ps
        self.subtract_background = subtract_background

    def fit(self, histogram, y=None):
        if self.zero_delay_ps == "auto":
            self.zero_delay_ = symmetry_center_ps(histogram)
        else:
            self.zero_delay_ = float(self.zero_delay_ps)
        self.fiber_ = FiberSpec(self.length_km, self.dispersion_ps_per_nm_km)
        return self

    def transform(self, histogram):
        check_is_fitted(self, "zero_delay_")
        return reconstruct_spectrum(
            histogram, self.fiber_, self.pump_nm, lambda_bin_nm=self.lambda_bin_nm,
            zero_delay_ps=self.zero_delay_, timing_fwhm=self.timing_fwhm_ps,
            subtract_background=self.subtract_background,
        )

    def fit_transform(self, histogram, y=None):
        return self.fit(histogram).transform(histogram)

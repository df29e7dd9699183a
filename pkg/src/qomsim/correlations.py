"""Coincidence counting and second-order correlation estimates.

All delays are ``t_b - t_a`` in picoseconds, computed as
``(t_b - t_a) * 1e12`` from float64 seconds.  Every counting routine in this
module bins exactly those numbers, so results are reproducible bit for bit
against a plain all-pairs loop.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from ._validation import ValidationError, check_positive, check_times

MIN_HISTOGRAM_BINS = 100
_CHUNK = 1 << 15


class UndefinedEstimateError(ValidationError):
    """A correlation estimate needs nonzero singles rates."""


def _times(stream):
    return check_times(getattr(stream, "times_s", stream))


def _duration(*streams):
    durations = [s.duration_s for s in streams if hasattr(s, "duration_s")]
    return min(durations) if durations else None


def iter_delays_ps(ta, tb, lo_ps, hi_ps):
    """Yield chunks of all delays ``d = (tb - ta) * 1e12`` with ``lo <= d < hi``.

    Windowed merge-join: for each click in ``ta`` the matching range of
    ``tb`` is located by binary search and expanded, so the work is
    proportional to the inputs plus the matches.  Candidates are selected
    with a margin of a few float64 ulps and then filtered on the exact delay
    values, which keeps the result identical to brute-force pairing.
    """
    ta = np.asarray(ta, dtype=float)
    tb = np.asarray(tb, dtype=float)
    if ta.size == 0 or tb.size == 0:
        return
    tmax = max(abs(ta[0]), abs(ta[-1]), abs(tb[0]), abs(tb[-1]))
    margin_s = 16 * np.spacing(tmax) + 1e-18
    lo_s, hi_s = lo_ps * 1e-12 - margin_s, hi_ps * 1e-12 + margin_s
    for start in range(0, ta.size, _CHUNK):
        a = ta[start:start + _CHUNK]
        left = np.searchsorted(tb, a + lo_s, side="left")
        right = np.searchsorted(tb, a + hi_s, side="right")
        counts = right - left
        total = int(counts.sum())
        if total == 0:
            continue
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        jb = np.repeat(left, counts) + offsets
        d = (tb[jb] - np.repeat(a, counts)) * 1e12
        keep = (d >= lo_ps) & (d < hi_ps)
        yield d[keep]


def centered_edges(bin_width_ps, span_ps):
    """Edges of bins centered on integer multiples of ``bin_width_ps``."""
    half = int(math.floor(span_ps / (2.0 * bin_width_ps)))
    return (np.arange(-half, half + 2) - 0.5) * bin_width_ps


def _histogram(ta, tb, edges):
    counts = np.zeros(edges.size - 1, dtype=np.int64)
    for d in iter_delays_ps(ta, tb, edges[0], edges[-1]):
        k = np.searchsorted(edges, d, side="right") - 1
        counts += np.bincount(k, minlength=counts.size)[: counts.size]
    return counts


def count_in_window(ta, tb, lo_ps, hi_ps):
    """Number of pairs with ``lo_ps <= t_b - t_a < hi_ps``."""
    return int(sum(d.size for d in iter_delays_ps(ta, tb, lo_ps, hi_ps)))


@dataclass
class CoincidenceHistogram:
    bin_width_ps: float
    edges_ps: np.ndarray
    counts: np.ndarray
    duration_s: float
    singles_a: int = 0
    singles_b: int = 0

    @property
    def centers_ps(self):
        return 0.5 * (self.edges_ps[1:] + self.edges_ps[:-1])

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def accidental_level(self):
        """Expected counts per bin from uncorrelated singles."""
        if not self.duration_s:
            return float("nan")
        return self.singles_a * self.singles_b * self.bin_width_ps * 1e-12 / self.duration_s

    def to_csv(self, path, header=None):
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            for key, value in (header or {}).items():
                fh.write(f"# {key}={value}\n")
            writer = csv.writer(fh)
            writer.writerow(["dt_center_ps", "dt_lo_ps", "dt_hi_ps", "counts"])
            for c, lo, hi, n in zip(self.centers_ps.tolist(), self.edges_ps[:-1].tolist(),
                                    self.edges_ps[1:].tolist(), self.counts.tolist()):
                writer.writerow([repr(c), repr(lo), repr(hi), n])


def coincidence_histogram(stream_a, stream_b, bin_width_ps, span_ps):
    """Histogram of ``t_b - t_a`` over a centered span.

    Parameters
    ----------
    stream_a, stream_b : TimestampStream or array of sorted seconds
    bin_width_ps : float
    span_ps : float
        Full width of the histogram; must hold at least 100 bins.
    """
    check_positive(bin_width_ps, "bin_width_ps")
    check_positive(span_ps, "span_ps")
    ta, tb = _times(stream_a), _times(stream_b)
    edges = centered_edges(bin_width_ps, span_ps)
    if edges.size - 1 < MIN_HISTOGRAM_BINS:
        raise ValidationError(
            f"span {span_ps} ps holds only {edges.size - 1} bins of {bin_width_ps} ps; "
            f"need at least {MIN_HISTOGRAM_BINS}"
        )
    duration = _duration(stream_a, stream_b)
    return CoincidenceHistogram(float(bin_width_ps), edges, _histogram(ta, tb, edges),
                                duration if duration is not None else float("nan"),
                                int(ta.size), int(tb.size))


@dataclass
class CorrelationEstimate:
    """g2(0) from coincidence and singles counts.

    ``value = R_c / (R_s * R_i * T_c)`` with rates ``R = counts / duration``
    and the coincidence window ``T_c``.
    """

    value: float
    std_error: float
    coincidences: int
    singles_s: int
    singles_i: int
    duration_s: float
    window_s: float
    delay_ps: float = 0.0
    accidentals_subtracted: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def rate_coincidence(self):
        return self.coincidences / self.duration_s

    @property
    def rate_s(self):
        return self.singles_s / self.duration_s

    @property
    def rate_i(self):
        return self.singles_i / self.duration_s

    @property
    def accidental_rate(self):
        return self.rate_s * self.rate_i * self.window_s

    def as_dict(self):
        return {
            "value": self.value,
            "std_error": self.std_error,
            "R_c": self.rate_coincidence,
            "R_s": self.rate_s,
            "R_i": self.rate_i,
            "T_c_s": self.window_s,
            "coincidences": self.coincidences,
            "singles_s": self.singles_s,
            "singles_i": self.singles_i,
            "duration_s": self.duration_s,
            "delay_ps": self.delay_ps,
            "accidentals_subtracted": self.accidentals_subtracted,
        }


def locate_peak_ps(ta, tb, bin_width_ps, search_ps, min_significance=5.0):
    """Delay of the coincidence peak, or 0 if no bin stands out.

    A bin counts as a peak when it exceeds the mean bin content by
    ``min_significance`` Poisson standard deviations; without that gate a
    flat histogram would hand back its largest noise excursion.
    """
    edges = centered_edges(bin_width_ps, 2.0 * search_ps)
    counts = _histogram(ta, tb, edges)
    if counts.sum() == 0:
        return 0.0
    mean = counts.mean()
    k = int(np.argmax(counts))
    if (counts[k] - mean) / math.sqrt(mean + 1.0) < min_significance:
        return 0.0
    return float(0.5 * (edges[k] + edges[k + 1]))


def _g2(stream_a, stream_b, window_ns, delay_ps, search_ps, subtract_accidentals):
    check_positive(window_ns, "window_ns")
    ta, tb = _times(stream_a), _times(stream_b)
    duration = _duration(stream_a, stream_b)
    if duration is None or not duration > 0:
        raise UndefinedEstimateError("streams need a positive duration")
    if ta.size == 0 or tb.size == 0:
        raise UndefinedEstimateError("zero singles rate: g2 is undefined")
    window_ps = window_ns * 1e3
    if delay_ps is None:
        delay_ps = locate_peak_ps(ta, tb, window_ps / 10.0, search_ps)
    n_c = count_in_window(ta, tb, delay_ps - window_ps / 2.0, delay_ps + window_ps / 2.0)
    n_s, n_i = ta.size, tb.size
    window_s = window_ps * 1e-12
    scale = duration / (n_s * n_i * window_s)
    value = n_c * scale
    # Poisson errors on N_c, N_s, N_i; an empty window still carries one count of uncertainty
    rel = math.sqrt(1.0 / max(n_c, 1) + 1.0 / n_s + 1.0 / n_i)
    err = max(value, scale) * rel
    if subtract_accidentals:
        value -= 1.0
    return CorrelationEstimate(float(value), float(err), int(n_c), int(n_s), int(n_i), float(duration),
                               window_s, float(delay_ps), bool(subtract_accidentals))


def g2_cross(stream_s, stream_i, window_ns=1.0, *, delay_ps=None, search_ps=10_000.0,
             subtract_accidentals=False):
    """Signal-idler cross-correlation ``g2_si(0) = R_c / (R_s R_i T_c)``.

    The window is centered on the coincidence peak, found automatically
    within ``+-search_ps`` unless ``delay_ps`` is given.  With
    ``subtract_accidentals`` the accidental rate ``R_s R_i T_c`` is removed
    from ``R_c`` (the reported value drops by exactly one).
    """
    return _g2(stream_s, stream_i, window_ns, delay_ps, search_ps, subtract_accidentals)


def g2_auto(stream_1, stream_2, window_ns=1.0, *, delay_ps=0.0, subtract_accidentals=False):
    """Autocorrelation from the two outputs of a Hanbury Brown-Twiss split.

    Same estimator as :func:`g2_cross`; the zero-delay point is fixed by the
    HBT geometry so no peak search is done by default.
    """
    return _g2(stream_1, stream_2, window_ns, delay_ps, 10_000.0, subtract_accidentals)


@dataclass
class CauchySchwarzResult:
    lhs: float
    lhs_error: float
    rhs: float
    rhs_error: float
    violated: bool
    sigma_violation: float

    def as_dict(self):
        return dict(self.__dict__)


def _value_error(g):
    if isinstance(g, CorrelationEstimate):
        return g.value, g.std_error
    value, error = g
    return float(value), float(error)


def cs_test(g_si, g_ss, g_ii):
    """Cauchy-Schwarz test ``g_si**2 <= g_ss * g_ii``.

    Each argument is a :class:`CorrelationEstimate` or a ``(value, error)``
    pair.  Errors are propagated to first order assuming the three estimates
    are independent; ``sigma_violation`` is ``(lhs - rhs) / sigma``.
    """
    si, dsi = _value_error(g_si)
    ss, dss = _value_error(g_ss)
    ii, dii = _value_error(g_ii)
    lhs, lhs_err = si * si, 2.0 * abs(si) * dsi
    rhs = ss * ii
    rhs_err = math.hypot(ii * dss, ss * dii)
    sigma = math.hypot(lhs_err, rhs_err)
    diff = lhs - rhs
    if sigma > 0:
        n_sigma = diff / sigma
    else:
        n_sigma = math.copysign(math.inf, diff) if diff else 0.0
    return CauchySchwarzResult(lhs, lhs_err, rhs, rhs_err, bool(lhs > rhs), n_sigma)


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of ``y = offset + amplitude * x**exponent``.

    Parameters
    ----------
    exponent : float or None, default=-1.0
        Fixed exponent, which makes the model linear in its remaining
        coefficients.  ``None`` fits the exponent as well.
    offset : float or None, default=1.0
        Fixed offset, or ``None`` to fit it.

    Attributes
    ----------
    amplitude_, exponent_, offset_ : float
    exponent_error_, amplitude_error_ : float
        One-sigma parameter errors from the fit covariance (nan when fixed
        or undetermined).
    """

    def __init__(self, exponent=-1.0, offset=1.0):
        self.exponent = exponent
        self.offset = offset

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, ensure_min_samples=2)
        x = X[:, 0]
        if np.any(x <= 0):
            raise ValidationError("power-law fit needs positive x")
        w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        self.n_features_in_ = X.shape[1]
        self.amplitude_error_ = self.exponent_error_ = math.nan
        if self.exponent is not None:
            self._fit_linear(x, y, w, float(self.exponent))
        else:
            self._fit_free(x, y, w)
        return self

    def _fit_linear(self, x, y, w, b):
        basis = x ** b
        sw = np.sqrt(w)
        if self.offset is None:
            A = np.column_stack([np.ones_like(x), basis]) * sw[:, None]
            coef, *_ = np.linalg.lstsq(A, y * sw, rcond=None)
            self.offset_, self.amplitude_ = float(coef[0]), float(coef[1])
        else:
            self.offset_ = float(self.offset)
            self.amplitude_ = float(np.sum(w * (y - self.offset_) * basis) / np.sum(w * basis * basis))
        self.exponent_ = b

    def _fit_free(self, x, y, w):
        off0 = float(self.offset) if self.offset is not None else float(np.min(y)) - 1e-9 * abs(np.min(y))
        excess = y - off0
        if np.all(np.abs(excess) <= 1e-12 * np.maximum(1.0, np.abs(y))):
            self.offset_, self.amplitude_, self.exponent_ = off0, 0.0, math.nan
            return
        pos = excess > 0
        if pos.sum() >= 2 and np.ptp(np.log(x[pos])) > 0:
            b0, loga = np.polyfit(np.log(x[pos]), np.log(excess[pos]), 1)
            p0 = [math.exp(loga), b0]
        else:
            p0 = [float(np.mean(excess)), -1.0]
        sigma = 1.0 / np.sqrt(w)
        if self.offset is None:
            def model(xx, a, b, c):
                return c + a * xx ** b
            p0 = p0 + [off0]
        else:
            def model(xx, a, b):
                return off0 + a * xx ** b
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            try:
                popt, pcov = curve_fit(model, x, y, p0=p0, sigma=sigma, maxfev=20000)
            except RuntimeError:
                popt, pcov = np.asarray(p0, float), np.full((len(p0), len(p0)), np.nan)
        perr = np.sqrt(np.abs(np.diag(pcov))) if np.all(np.isfinite(pcov)) else np.full(len(popt), np.nan)
        self.amplitude_, self.exponent_ = float(popt[0]), float(popt[1])
        self.amplitude_error_, self.exponent_error_ = float(perr[0]), float(perr[1])
        self.offset_ = float(popt[2]) if self.offset is None else off0

    def predict(self, X):
        check_is_fitted(self, "amplitude_")
        X = check_array(X)
        b = 0.0 if math.isnan(self.exponent_) else self.exponent_
        return self.offset_ + self.amplitude_ * X[:, 0] ** b


@dataclass
class PowerScanFit:
    offset: float
    amplitude: float
    fit_quality: float
    reduced_chi2: float
    free_amplitude: float
    free_exponent: float
    free_exponent_error: float

    def as_dict(self):
        return dict(self.__dict__)


def power_scan_fit(points, errors=None):
    """Fit ``g2(P) = 1 + a / P`` to a pump-power scan.

    Parameters
    ----------
    points : sequence of (power, g2)
    errors : sequence of float, optional
        One-sigma g2 errors, used as weights and for the reduced chi-square.

    Returns
    -------
    PowerScanFit
        ``amplitude`` is ``a`` and ``fit_quality`` the coefficient of
        determination.  The ``free_*`` fields come from ``1 + a * P**b`` with
        ``b`` left free, for checking the inverse-power law.
    """
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValidationError("points must be a sequence of (power, g2) pairs")
    power, g = data[:, 0], data[:, 1]
    if np.unique(power).size < 4:
        raise ValidationError("power scan needs at least 4 distinct powers")
    if np.any(power <= 0):
        raise ValidationError("powers must be positive")
    weights = None
    if errors is not None:
        err = np.asarray(errors, dtype=float)
        if err.shape != g.shape or np.any(err <= 0):
            raise ValidationError("errors must be positive and match the points")
        weights = 1.0 / err ** 2
    X = power[:, None]
    fixed = PowerLawRegressor(exponent=-1.0, offset=1.0).fit(X, g, sample_weight=weights)
    free = PowerLawRegressor(exponent=None, offset=1.0).fit(X, g, sample_weight=weights)
    ss_tot = float(np.sum((g - g.mean()) ** 2))
    resid = g - fixed.predict(X)
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    chi2 = float(np.sum(resid ** 2 * weights)) / (g.size - 1) if weights is not None else math.nan
    return PowerScanFit(fixed.offset_, fixed.amplitude_, r2, chi2, free.amplitude_,
                        free.exponent_, free.exponent_error_)

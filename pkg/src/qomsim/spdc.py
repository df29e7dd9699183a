"""Photon-pair generation from pumped metasurfaces.

The pair rate per unit signal wavelength is the product of the vacuum-field
enhancement at the signal and at the energy-conserving idler wavelength,

    S(lam_s) = C * P * chi2**2 * E(lam_s) * E(lam_i(lam_s)),

evaluated on the half domain ``lam_s <= 2 * lam_p`` so every pair is counted
once with ``lam_s <= lam_i``.  Both photons must fall inside a collection
band (default 1200-1700 nm, the telecom detector window).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import constants
from scipy.integrate import trapezoid
from scipy.stats import nbinom

from ._validation import ValidationError, check_positive, check_random_state, substream
from .optics import Metasurface, enhancement, measured_fwhm

# pairs / (s nm mW (pm/V)^2); puts QOM-A at 9.6 mW near 1e3 detected
# coincidences per second with the default detectors.
DEFAULT_RATE_CONSTANT = 7.0e-10
DEFAULT_BAND_NM = (1200.0, 1700.0)
STATS_MODES = ("poisson", "thermal-cell")


@dataclass(frozen=True)
class PumpConfig:
    wavelength_nm: float
    power_mW: float = 9.6
    pol_deg: float = 0.0
    spot_diameter_um: float = 140.0
    coherent_group_id: Optional[str] = None

    def __post_init__(self):
        check_positive(self.wavelength_nm, "wavelength_nm")
        check_positive(self.power_mW, "power_mW", strict=False)
        check_positive(self.spot_diameter_um, "spot_diameter_um")

    def with_power(self, power_mW):
        return PumpConfig(self.wavelength_nm, power_mW, self.pol_deg,
                          self.spot_diameter_um, self.coherent_group_id)

    def with_wavelength(self, wavelength_nm):
        return PumpConfig(wavelength_nm, self.power_mW, self.pol_deg,
                          self.spot_diameter_um, self.coherent_group_id)


@dataclass(frozen=True)
class PairEvent:
    t_emit_s: float
    lambda_s_nm: float
    lambda_i_nm: float
    pump_index: int
    metasurface_index: int = 0


def idler_wavelength(pump_nm, signal_nm):
    """Energy-conserving partner wavelength ``(1/lam_p - 1/lam_s)**-1``.

    The map is its own inverse at fixed pump.  Raises ``ValidationError`` if
    any signal wavelength is not longer than the pump.
    """
    lam_p = np.asarray(pump_nm, dtype=float)
    lam_s = np.asarray(signal_nm, dtype=float)
    if np.any(lam_s <= lam_p):
        raise ValidationError("signal wavelength must exceed the pump wavelength")
    out = 1.0 / (1.0 / lam_p - 1.0 / lam_s)
    return float(out) if out.ndim == 0 else out


def pump_for_pair(lambda_a_nm, lambda_b_nm):
    """Pump wavelength that emits the pair ``(lambda_a, lambda_b)``."""
    return 1.0 / (1.0 / lambda_a_nm + 1.0 / lambda_b_nm)


def emission_domain(pump_nm, band_nm=DEFAULT_BAND_NM):
    """Signal-wavelength interval for which both photons land inside the band.

    Returns ``None`` when the interval is empty.
    """
    band_lo, band_hi = band_nm
    if band_hi <= pump_nm:
        return None
    lo = max(band_lo, idler_wavelength(pump_nm, band_hi)) if band_hi > pump_nm else band_lo
    hi = min(2.0 * pump_nm, band_hi)
    lo = max(lo, np.nextafter(pump_nm, np.inf))
    if lo >= hi:
        return None
    return lo, hi


def _signal_grid(metasurface, pump, lo, hi, coarse_step_nm=0.25, points_per_fwhm=40, span_fwhm=40):
    lam_p = pump.wavelength_nm
    pieces = [np.linspace(lo, hi, max(2, int(math.ceil((hi - lo) / coarse_step_nm)) + 1))]
    for r in metasurface.resonances:
        if r.coupling(pump.pol_deg) < 1e-12:
            continue
        c, w = r.center_wavelength_nm, r.fwhm_nm
        features = []
        if lo <= c <= hi:
            features.append((c, w))
        if c > lam_p:
            partner = idler_wavelength(lam_p, c)
            if lo <= partner <= hi:
                features.append((partner, w * (partner / c) ** 2))
        for center, width in features:
            a = max(lo, center - span_fwhm * width)
            b = min(hi, center + span_fwhm * width)
            n = int(math.ceil((b - a) / width * points_per_fwhm)) + 1
            pieces.append(np.linspace(a, b, max(n, 2)))
            pieces.append(np.array([center]))
    grid = np.unique(np.concatenate(pieces))
    return grid[(grid >= lo) & (grid <= hi)]


@dataclass
class SpectralDensity:
    """Pair rate per nm of signal wavelength for one (metasurface, pump)."""

    wavelength_nm: np.ndarray
    density: np.ndarray
    pump: PumpConfig
    metasurface: Metasurface
    prefactor: float
    patterned: bool = True
    domain: Optional[tuple] = None

    def density_at(self, signal_nm):
        """Evaluate S at arbitrary signal wavelengths (zero outside the domain)."""
        lam = np.atleast_1d(np.asarray(signal_nm, dtype=float))
        out = np.zeros_like(lam)
        if self.domain is None or self.prefactor == 0.0:
            return out
        lo, hi = self.domain
        inside = (lam >= lo) & (lam <= hi)
        if np.any(inside):
            ls = lam[inside]
            li = idler_wavelength(self.pump.wavelength_nm, ls)
            if self.patterned:
                es = enhancement(self.metasurface, ls, self.pump.pol_deg)
                ei = enhancement(self.metasurface, li, self.pump.pol_deg)
                out[inside] = self.prefactor * es * ei
            else:
                out[inside] = self.prefactor
        return out

    @property
    def total_rate(self):
        if self.wavelength_nm.size < 2:
            return 0.0
        return float(trapezoid(self.density, self.wavelength_nm))

    def photon_spectrum(self, wavelength_nm):
        """Single-photon spectrum: signal half plus the Jacobian-mapped idler half.

        Integrates to twice the pair rate, one count per photon.
        """
        lam = np.asarray(wavelength_nm, dtype=float)
        out = self.density_at(lam)
        lam_p = self.pump.wavelength_nm
        idler_side = lam > 2.0 * lam_p
        if np.any(idler_side):
            li = lam[idler_side]
            ls = idler_wavelength(lam_p, li)
            out[idler_side] += self.density_at(ls) * (ls / li) ** 2
        return out

    def photon_grid(self):
        """Sorted grid covering both the signal half and its idler image."""
        if self.wavelength_nm.size == 0:
            return self.wavelength_nm
        idlers = idler_wavelength(self.pump.wavelength_nm, self.wavelength_nm)
        return np.unique(np.concatenate([self.wavelength_nm, idlers]))

    def peak_wavelength(self):
        grid = self.photon_grid()
        return float(grid[np.argmax(self.photon_spectrum(grid))])

    def peak_fwhm(self):
        """FWHM of the tallest peak of the single-photon spectrum (nm)."""
        grid = self.photon_grid()
        return measured_fwhm(grid, self.photon_spectrum(grid))

    def coherence_time_s(self):
        """``lam^2 / (c * dlam)`` at the tallest spectral peak."""
        if self.wavelength_nm.size < 2:
            return float("nan")
        lam = self.peak_wavelength()
        width = self.peak_fwhm()
        if not np.isfinite(width) or width <= 0:
            width = float(self.wavelength_nm[-1] - self.wavelength_nm[0])
        return (lam * 1e-9) ** 2 / (constants.c * width * 1e-9)

    def sample(self, rng, size):
        """Draw signal wavelengths from the normalized density (exact inverse CDF
        of the piecewise-linear interpolant)."""
        x, d = self.wavelength_nm, self.density
        seg = 0.5 * (d[1:] + d[:-1]) * np.diff(x)
        cdf = np.concatenate(([0.0], np.cumsum(seg)))
        target = rng.random(size) * cdf[-1]
        k = np.clip(np.searchsorted(cdf, target, side="right") - 1, 0, seg.size - 1)
        r = target - cdf[k]
        h = x[k + 1] - x[k]
        d0 = d[k]
        a = (d[k + 1] - d0) / (2.0 * h)
        disc = np.sqrt(np.maximum(d0 * d0 + 4.0 * a * r, 0.0))
        denom = d0 + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, 2.0 * r / denom, 0.0)
        return x[k] + np.clip(s, 0.0, h)


def pair_spectral_density(
    metasurface,
    pump,
    *,
    rate_constant=DEFAULT_RATE_CONSTANT,
    band_nm=DEFAULT_BAND_NM,
    patterned=True,
    grid=None,
):
    """Pair spectral density S(lam_s) in pairs / s / nm.

    ``patterned=False`` replaces the enhancement by 1 everywhere, i.e. an
    unpatterned film of the same material.
    """
    prefactor = rate_constant * pump.power_mW * metasurface.chi2_pm_per_V ** 2
    domain = emission_domain(pump.wavelength_nm, band_nm)
    if domain is None:
        empty = np.zeros(0)
        return SpectralDensity(empty, empty, pump, metasurface, prefactor, patterned, None)
    if grid is None:
        grid = _signal_grid(metasurface, pump, *domain)
    else:
        grid = np.asarray(grid, dtype=float)
    sd = SpectralDensity(grid, np.zeros_like(grid), pump, metasurface, prefactor, patterned, domain)
    sd.density = sd.density_at(grid)
    return sd


def total_pair_rate(metasurface, pump, **kwargs):
    """Pairs per second emitted into the collection band; linear in power."""
    return pair_spectral_density(metasurface, pump, **kwargs).total_rate


@dataclass
class EventTable:
    """Column-oriented list of :class:`PairEvent` records, sorted by time."""

    t_emit_s: np.ndarray
    lambda_s_nm: np.ndarray
    lambda_i_nm: np.ndarray
    pump_index: np.ndarray
    metasurface_index: np.ndarray
    duration_s: float
    pump_wavelengths_nm: tuple = ()
    stats_mode: str = "poisson"
    cell_duration_s: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.t_emit_s.size)

    def __getitem__(self, i):
        return PairEvent(
            float(self.t_emit_s[i]),
            float(self.lambda_s_nm[i]),
            float(self.lambda_i_nm[i]),
            int(self.pump_index[i]),
            int(self.metasurface_index[i]),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def select(self, mask):
        return EventTable(
            self.t_emit_s[mask], self.lambda_s_nm[mask], self.lambda_i_nm[mask],
            self.pump_index[mask], self.metasurface_index[mask], self.duration_s,
            self.pump_wavelengths_nm, self.stats_mode, dict(self.cell_duration_s),
        )

    def energy_mismatch(self):
        """Relative violation of 1/lam_s + 1/lam_i = 1/lam_p for every event."""
        lam_p = np.asarray(self.pump_wavelengths_nm, dtype=float)[self.pump_index]
        lhs = 1.0 / self.lambda_s_nm + 1.0 / self.lambda_i_nm
        return np.abs(lhs * lam_p - 1.0)

    def to_csv(self, path, header_comment=None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write("t_emit_s,lambda_s_nm,lambda_i_nm,pump_index,metasurface_index\n")
            rows = np.column_stack([self.t_emit_s, self.lambda_s_nm, self.lambda_i_nm])
            for (t, ls, li), p, m in zip(rows.tolist(), self.pump_index.tolist(),
                                         self.metasurface_index.tolist()):
                fh.write(f"{t!r},{ls!r},{li!r},{p},{m}\n")

    @classmethod
    def from_csv(cls, path, pump_wavelengths_nm=(), duration_s=None):
        with open(path, encoding="utf-8") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        body = rows[1:]
        arr = np.array([[float(x) for x in r[:3]] for r in body]).reshape(-1, 3)
        pumps = np.array([int(r[3]) for r in body], dtype=np.int64)
        ms = np.array([int(r[4]) if len(r) > 4 else 0 for r in body], dtype=np.int64)
        dur = duration_s if duration_s is not None else (float(arr[:, 0].max()) if len(body) else 0.0)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], pumps, ms, dur, tuple(pump_wavelengths_nm))


def _cell_counts_nonzero(rng, n_cells, mean, modes):
    """Indices and (>= 1) pair counts of occupied coherence cells.

    Cell counts follow a negative binomial with ``modes`` degrees of freedom;
    ``modes=1`` is the geometric (Bose-Einstein) law.  Only occupied cells
    are materialized, so very short cells cost nothing.
    """
    p = modes / (modes + mean)
    p_empty = p ** modes
    p_occupied = -math.expm1(modes * math.log(p))
    if p_occupied <= 0.0 or n_cells == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    n_occupied = rng.binomial(n_cells, p_occupied)
    if n_occupied == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if n_occupied * 2 > n_cells:
        idx = np.sort(rng.permutation(n_cells)[:n_occupied])
    else:
        idx = np.sort(rng.choice(n_cells, size=n_occupied, replace=False))
    u = p_empty + rng.random(n_occupied) * p_occupied
    counts = nbinom.ppf(np.minimum(u, np.nextafter(1.0, 0.0)), modes, p).astype(np.int64)
    return idx.astype(np.int64), np.maximum(counts, 1)


def _emission_times(rng, rate, start, length, mode, cell_s, modes):
    if rate <= 0 or length <= 0:
        return np.zeros(0)
    if mode == "poisson":
        n = rng.poisson(rate * length)
        return start + np.sort(rng.random(n)) * length
    n_cells = int(round(length / cell_s))
    idx, counts = _cell_counts_nonzero(rng, n_cells, rate * cell_s, modes)
    cells = np.repeat(idx, counts)
    t = start + (cells + rng.random(cells.size)) * cell_s
    return np.sort(t)


def _chunks(duration, chunk_s, cell_s):
    if cell_s is not None:
        cells_per_chunk = max(1, int(round(chunk_s / cell_s)))
        step = cells_per_chunk * cell_s
        n_total = max(1, int(math.ceil(duration / cell_s - 1e-9)))
        n_chunks = int(math.ceil(n_total / cells_per_chunk))
        out = []
        for k in range(n_chunks):
            cells = min(cells_per_chunk, n_total - k * cells_per_chunk)
            out.append((k, k * step, cells * cell_s))
        return out
    n_chunks = max(1, int(math.ceil(duration / chunk_s - 1e-9)))
    return [(k, k * chunk_s, min(chunk_s, duration - k * chunk_s)) for k in range(n_chunks)]


def generate_events(
    metasurfaces,
    pumps,
    duration_s,
    stats_mode="poisson",
    seed=0,
    *,
    rate_constant=DEFAULT_RATE_CONSTANT,
    band_nm=DEFAULT_BAND_NM,
    coherence_time_s=None,
    thermal_modes=1.0,
    chunk_s=1.0,
    n_jobs=1,
):
    """Monte Carlo pair events from every metasurface under every pump.

    Parameters
    ----------
    metasurfaces : Metasurface or sequence of Metasurface
        All surfaces sit inside every pump spot (spatial multiplexing).
    pumps : PumpConfig or sequence of PumpConfig
        Pumps add incoherently.
    duration_s : float
        Length of the simulated record.
    stats_mode : {"poisson", "thermal-cell"}
        ``poisson`` draws a homogeneous Poisson process at the total pair
        rate.  ``thermal-cell`` partitions time into coherence cells and draws
        the pair number per cell from a negative binomial with
        ``thermal_modes`` modes (geometric for one mode).
    seed : int
        Root seed.  Each (metasurface, pump, time chunk) gets its own named
        substream, so results do not depend on ``n_jobs``.
    coherence_time_s : float, optional
        Cell duration override.  Defaults to ``lam**2 / (c * dlam)`` of the
        emission peak, which is picoseconds for nm-wide resonances.

    Returns
    -------
    EventTable
    """
    if stats_mode not in STATS_MODES:
        raise ValidationError(f"unknown stats_mode {stats_mode!r}; expected one of {STATS_MODES}")
    check_positive(duration_s, "duration_s")
    check_positive(chunk_s, "chunk_s")
    check_positive(thermal_modes, "thermal_modes")
    if seed is None:
        raise ValidationError("generate_events requires an explicit seed")
    if isinstance(metasurfaces, Metasurface):
        metasurfaces = [metasurfaces]
    if isinstance(pumps, PumpConfig):
        pumps = [pumps]
    metasurfaces, pumps = list(metasurfaces), list(pumps)

    tasks = []
    cell_durations = {}
    for mi, ms in enumerate(metasurfaces):
        for pi, pump in enumerate(pumps):
            sd = pair_spectral_density(ms, pump, rate_constant=rate_constant, band_nm=band_nm)
            rate = sd.total_rate
            if rate <= 0:
                continue
            cell_s = None
            if stats_mode == "thermal-cell":
                cell_s = coherence_time_s if coherence_time_s is not None else sd.coherence_time_s()
                check_positive(cell_s, "coherence_time_s")
                cell_durations[(mi, pi)] = cell_s
            for k, start, length in _chunks(duration_s, chunk_s, cell_s):
                tasks.append((mi, pi, k, start, length, sd, rate, cell_s))

    def run(task):
        mi, pi, k, start, length, sd, rate, cell_s = task
        rng = substream(seed, "source", mi, pi, "chunk", k)
        t = _emission_times(rng, rate, start, length, stats_mode, cell_s, thermal_modes)
        t = t[t < duration_s]
        lam_s = sd.sample(rng, t.size)
        return mi, pi, t, lam_s

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(task) for task in tasks]

    pump_nm = np.array([p.wavelength_nm for p in pumps], dtype=float)
    if results:
        t = np.concatenate([r[2] for r in results])
        lam_s = np.concatenate([r[3] for r in results])
        pidx = np.concatenate([np.full(r[2].size, r[1], dtype=np.int64) for r in results])
        midx = np.concatenate([np.full(r[2].size, r[0], dtype=np.int64) for r in results])
    else:
        t = lam_s = np.zeros(0)
        pidx = midx = np.zeros(0, dtype=np.int64)
    order = np.lexsort((pidx, midx, t))
    t, lam_s, pidx, midx = t[order], lam_s[order], pidx[order], midx[order]
    lam_i = idler_wavelength(pump_nm[pidx], lam_s) if t.size else np.zeros(0)
    return EventTable(
        t, lam_s, np.atleast_1d(lam_i), pidx, midx, float(duration_s),
        tuple(pump_nm.tolist()), stats_mode, cell_durations,
    )


def classical_light(rate_cps, duration_s, mode="poisson", seed=0, *, coherence_time_s=None,
                    thermal_modes=1.0):
    """Arrival times of a classical single-beam source (laser or thermal).

    Used as a reference for correlation measurements: coherent light is a
    Poisson process, chaotic light uses the same coherence-cell model as the
    pair generator.
    """
    if mode not in STATS_MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    check_positive(duration_s, "duration_s")
    check_positive(rate_cps, "rate_cps", strict=False)
    rng = check_random_state(seed)
    if mode == "thermal-cell":
        if coherence_time_s is None:
            raise ValidationError("thermal light needs coherence_time_s")
        check_positive(coherence_time_s, "coherence_time_s")
        n_cells = int(math.ceil(duration_s / coherence_time_s))
        t = _emission_times(rng, rate_cps, 0.0, n_cells * coherence_time_s, mode,
                            coherence_time_s, thermal_modes)
        return t[t < duration_s]
    return _emission_times(rng, rate_cps, 0.0, duration_s, mode, None, thermal_modes)

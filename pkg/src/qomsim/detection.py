"""Optical routing and photon detection: pairs in, timestamp streams out.

Photons travel as a :class:`Photons` batch (parallel arrays of emission or
arrival time, wavelength, pair id and role).  Each stage is a pure function
of the batch plus its own random generator, so per-channel processing is
independent and reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._validation import (
    ValidationError,
    check_fraction,
    check_positive,
    check_random_state,
    check_times,
)

PS = 1e-12
NS = 1e-9


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float = 0.8
    dark_count_rate_cps: float = 100.0
    jitter_sigma_ps: float = 50.0
    dead_time_ns: float = 30.0

    def __post_init__(self):
        check_fraction(self.efficiency, "efficiency")
        check_positive(self.dark_count_rate_cps, "dark_count_rate_cps", strict=False)
        check_positive(self.jitter_sigma_ps, "jitter_sigma_ps", strict=False)
        check_positive(self.dead_time_ns, "dead_time_ns", strict=False)

    @classmethod
    def ideal(cls):
        return cls(efficiency=1.0, dark_count_rate_cps=0.0, jitter_sigma_ps=0.0, dead_time_ns=0.0)


@dataclass(frozen=True)
class FiberSpec:
    length_km: float = 3.0
    dispersion_ps_per_nm_km: float = 17.0
    reference_wavelength_nm: float = 1550.0
    base_delay_ps: float = 0.0

    def __post_init__(self):
        check_positive(self.length_km, "length_km", strict=False)

    @property
    def ps_per_nm(self):
        """Total group-delay slope D*L."""
        return self.dispersion_ps_per_nm_km * self.length_km

    def delay_ps(self, wavelength_nm):
        return self.base_delay_ps + self.ps_per_nm * (np.asarray(wavelength_nm, float) - self.reference_wavelength_nm)


@dataclass(frozen=True)
class BandpassSpec:
    """Flat-top filter; transmission ``T0 * exp(-ln2 * |2 d / fwhm|**order)``."""

    center_nm: float
    fwhm_nm: float
    transmission_peak: float = 1.0
    order: float = 4.0

    def __post_init__(self):
        check_positive(self.center_nm, "center_nm")
        check_positive(self.fwhm_nm, "fwhm_nm")
        check_fraction(self.transmission_peak, "transmission_peak")
        check_positive(self.order, "order")

    def transmission(self, wavelength_nm):
        x = np.abs(2.0 * (np.asarray(wavelength_nm, float) - self.center_nm) / self.fwhm_nm)
        return self.transmission_peak * np.exp(-math.log(2.0) * x ** self.order)


@dataclass
class Photons:
    """A batch of photons in flight."""

    t_s: np.ndarray
    wavelength_nm: np.ndarray
    pair_id: np.ndarray
    role: np.ndarray  # 0 signal, 1 idler

    def __len__(self):
        return int(self.t_s.size)

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z, z.copy(), np.zeros(0, np.int64), np.zeros(0, np.int8))

    @classmethod
    def from_events(cls, events):
        """Both photons of every pair, signal first, sharing the emission time."""
        n = len(events)
        ids = np.arange(n, dtype=np.int64)
        return cls(
            np.concatenate([events.t_emit_s, events.t_emit_s]),
            np.concatenate([events.lambda_s_nm, events.lambda_i_nm]),
            np.concatenate([ids, ids]),
            np.concatenate([np.zeros(n, np.int8), np.ones(n, np.int8)]),
        )

    @classmethod
    def from_times(cls, t_s, wavelength_nm=1550.0):
        t = np.asarray(t_s, dtype=float)
        return cls(t, np.full(t.size, float(wavelength_nm)), np.arange(t.size, dtype=np.int64),
                   np.zeros(t.size, np.int8))

    def take(self, mask):
        return Photons(self.t_s[mask], self.wavelength_nm[mask], self.pair_id[mask], self.role[mask])


@dataclass
class TimestampStream:
    """Sorted detector clicks of one channel.

    ``pair_id`` keeps the originating pair of each click (-1 for dark
    counts) when the stream was simulated; external data leaves it None.
    """

    channel_id: str
    times_s: np.ndarray
    duration_s: float
    pair_id: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times_s = check_times(self.times_s, f"stream {self.channel_id!r}")
        check_positive(self.duration_s, "duration_s", strict=False)

    def __len__(self):
        return int(self.times_s.size)

    @property
    def rate_cps(self):
        return len(self) / self.duration_s if self.duration_s > 0 else float("nan")


def apply_beamsplitter(photons, ratio=0.5, seed=None):
    """Route each photon independently to arm A with probability ``ratio``.

    Both photons of a pair can exit the same port; such pairs never make a
    cross-arm coincidence.
    """
    check_fraction(ratio, "ratio", open_interval=True)
    rng = check_random_state(seed)
    to_a = rng.random(len(photons)) < ratio
    return photons.take(to_a), photons.take(~to_a)


def apply_dichroic(photons, cutoff_nm):
    """Deterministic wavelength routing: shorter than ``cutoff_nm`` to the first output."""
    check_positive(cutoff_nm, "cutoff_nm")
    short = photons.wavelength_nm < cutoff_nm
    return photons.take(short), photons.take(~short)


def apply_bandpass(photons, spec, seed=None):
    rng = check_random_state(seed)
    keep = rng.random(len(photons)) < spec.transmission(photons.wavelength_nm)
    return photons.take(keep)


def apply_attenuator(photons, transmission, seed=None):
    """Wavelength-independent loss (coupling, optics)."""
    transmission = check_fraction(transmission, "transmission")
    rng = check_random_state(seed)
    return photons.take(rng.random(len(photons)) < transmission)


def apply_fiber(photons, fiber):
    """Delay every photon by the linear group delay of ``fiber``."""
    if fiber.length_km == 0:
        return photons
    delay = fiber.delay_ps(photons.wavelength_nm) * PS
    return Photons(photons.t_s + delay, photons.wavelength_nm, photons.pair_id, photons.role)


def dead_time_filter(times_s, dead_time_s):
    """Mask of clicks surviving a non-extending dead time.

    A click is kept if it comes at least ``dead_time_s`` after the previous
    *kept* click and strictly after it.  Only clicks closer than the dead
    time to their predecessor are candidates for removal, so the Python loop
    visits just those.
    """
    t = np.asarray(times_s, dtype=float)
    keep = np.ones(t.size, dtype=bool)
    if t.size < 2:
        return keep
    gaps = np.diff(t)
    close = np.flatnonzero((gaps < dead_time_s) | (gaps <= 0.0)) + 1
    last = -np.inf
    for i in close.tolist():
        if keep[i - 1]:
            last = t[i - 1]
        if t[i] - last < dead_time_s or t[i] <= last:
            keep[i] = False
    return keep


def detect(photons, spec, duration_s, seed=None, channel_id="ch"):
    """Single-photon detector model.

    Efficiency thinning, Gaussian timing jitter, Poissonian dark counts and a
    non-extending dead time, in that order.  Clicks outside
    ``[0, duration_s]`` are dropped.
    """
    check_positive(duration_s, "duration_s")
    rng = check_random_state(seed)
    n_in = len(photons)
    hit = rng.random(n_in) < spec.efficiency
    t = photons.t_s[hit]
    pid = photons.pair_id[hit]
    if spec.jitter_sigma_ps > 0 and t.size:
        t = t + rng.normal(0.0, spec.jitter_sigma_ps * PS, t.size)
    n_dark = rng.poisson(spec.dark_count_rate_cps * duration_s) if spec.dark_count_rate_cps > 0 else 0
    if n_dark:
        t = np.concatenate([t, rng.random(n_dark) * duration_s])
        pid = np.concatenate([pid, np.full(n_dark, -1, dtype=np.int64)])
    inside = (t >= 0.0) & (t <= duration_s)
    t, pid = t[inside], pid[inside]
    order = np.argsort(t, kind="stable")
    t, pid = t[order], pid[order]
    keep = dead_time_filter(t, spec.dead_time_ns * NS)
    meta = {
        "photons_in": int(n_in),
        "dark_counts": int(n_dark),
        "dead_time_losses": int(keep.size - keep.sum()),
    }
    return TimestampStream(channel_id, t[keep], float(duration_s), pid[keep], meta)


# --- stream I/O -------------------------------------------------------------

def write_streams_csv(path, streams, header=None):
    """One CSV holding any number of channels, rows ``channel_id,t_s``."""
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        if header:
            for key, value in header.items():
                fh.write(f"# {key}={value}\n")
        for s in streams:
            fh.write(f"# duration_s[{s.channel_id}]={s.duration_s!r}\n")
        fh.write("channel_id,t_s\n")
        for s in streams:
            cid = s.channel_id
            fh.writelines(f"{cid},{t!r}\n" for t in s.times_s.tolist())


def read_streams_csv(path, duration_s=None):
    """Inverse of :func:`write_streams_csv`.

    Returns ``(streams, header)`` with ``streams`` keyed by channel id.
    Streams without a recorded duration get ``duration_s`` or, failing that,
    their last timestamp.
    """
    header, durations, columns = {}, {}, {}
    with open(Path(path), encoding="utf-8") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key.startswith("duration_s[") and key.endswith("]"):
                    durations[key[len("duration_s["):-1]] = float(value)
                else:
                    header[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    head = next(reader, None)
    if head is None or [h.strip() for h in head[:2]] != ["channel_id", "t_s"]:
        raise ValidationError(f"{path}: expected a 'channel_id,t_s' header row")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            columns.setdefault(row[0].strip(), []).append(float(row[1]))
        except (IndexError, ValueError):
            raise ValidationError(f"{path}: malformed row {lineno}: {row!r}") from None
    streams = {}
    for cid, values in columns.items():
        times = np.asarray(values, dtype=float)
        dur = durations.get(cid, duration_s)
        if dur is None:
            dur = float(times[-1]) if times.size else 0.0
        streams[cid] = TimestampStream(cid, times, dur)
    return streams, header


def write_stream_binary(path, stream):
    """Compact record: little-endian float64 seconds, no header."""
    np.asarray(stream.times_s, dtype="<f8").tofile(Path(path))


def read_stream_binary(path, channel_id=None, duration_s=None):
    times = np.fromfile(Path(path), dtype="<f8")
    cid = channel_id if channel_id is not None else Path(path).stem
    if duration_s is None:
        duration_s = float(times[-1]) if times.size else 0.0
    return TimestampStream(cid, times, duration_s)

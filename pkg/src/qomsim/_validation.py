"""Input validation and seeding helpers shared by every module."""

from __future__ import annotations

import numbers
import zlib

import numpy as np


class ValidationError(ValueError):
    """Raised when an argument violates a documented precondition."""


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValidationError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValidationError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ValidationError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_fraction(value, name, *, open_interval=False):
    value = check_positive(value, name, strict=False)
    if open_interval and not 0.0 < value < 1.0:
        raise ValidationError(f"{name} must lie in (0, 1), got {value!r}")
    if value > 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_times(times, name="times"):
    """Return ``times`` as a 1-d float64 array, rejecting unsorted input."""
    arr = np.asarray(times, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if arr.size > 1 and np.any(np.diff(arr) < 0):
        raise ValidationError(f"{name} must be sorted ascending")
    return arr


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    Accepts None, an int, a SeedSequence or an existing Generator (returned
    unchanged so callers can thread one generator through several stages).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def substream(seed, *keys):
    """Independent generator for a named substream of a root seed.

    Keys are hashed with CRC32, so adding a new named consumer never shifts
    the draws of existing ones.
    """
    if seed is None:
        raise ValidationError("a root seed is required for named substreams")
    spawn_key = tuple(zlib.crc32(str(k).encode("utf-8")) for k in keys)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(ss))

"""Probability histograms on N circular bins.

Bin ``i`` corresponds to the angle ``i * 360 / N`` degrees. Histograms are
immutable; every producing function returns a fresh object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (EmptyInput, IndexOutOfRange, LengthMismatch, NegativeMass, OutOfRange,
                     ValidationError, ZeroTotal)

SUM_TOL = 1e-9
NEG_CLAMP = -1e-12
QUANTILE_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Histogram:
    """Non-negative masses on ``n_bins`` circular bins.

    ``normalized`` is False only for histograms built with
    ``new_histogram(..., normalize=False, allow_unnormalized=True)``; such
    objects are meant for intermediate computations (finite differences,
    partial sums) and skip the unit-total check.
    """

    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def __len__(self) -> int:
        return self.n_bins

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Histogram):
            return NotImplemented
        return self.n_bins == other.n_bins and bool(np.all(self.values == other.values))

    def allclose(self, other: "Histogram", atol: float = SUM_TOL) -> bool:
        return self.n_bins == other.n_bins and bool(np.allclose(self.values, other.values, rtol=0, atol=atol))

    def tolist(self) -> list[float]:
        return self.values.tolist()

    def to_json(self) -> str:
        return json.dumps(self.tolist())


def new_histogram(values: Iterable[float], normalize: bool = False,
                  allow_unnormalized: bool = False) -> Histogram:
    """Validate ``values`` and wrap them in a :class:`Histogram`.

    Entries in ``[-1e-12, 0)`` are clamped to zero. With ``normalize`` the
    entries are divided by their sum. Without it the sum must already be 1
    within 1e-9 unless ``allow_unnormalized`` is set.
    """
    a = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float).ravel()
    if a.size == 0:
        raise EmptyInput("histogram needs at least one bin")
    if not np.all(np.isfinite(a)):
        raise ValidationError("histogram entries must be finite")
    if np.any(a < NEG_CLAMP):
        raise NegativeMass(f"negative entry {a.min():.3g} in histogram")
    a = np.where(a < 0, 0.0, a)
    if a.size < 2:
        raise EmptyInput("a circular histogram needs N >= 2 bins")
    total = a.sum()
    if normalize:
        if total == 0:
            raise ZeroTotal("cannot normalize a histogram with zero mass")
        return Histogram(a / total, normalized=True)
    if abs(total - 1.0) > SUM_TOL:
        if allow_unnormalized:
            return Histogram(a, normalized=False)
        raise ZeroTotal(f"histogram sums to {total!r}, expected 1 (pass normalize=True)")
    return Histogram(a, normalized=True)


def as_histogram(h) -> Histogram:
    """Coerce arrays and sequences to a normalized Histogram."""
    if isinstance(h, Histogram):
        return h
    return new_histogram(h)


def one_hot(j: int, n_bins: int) -> Histogram:
    if not 0 <= j < n_bins:
        raise IndexOutOfRange(f"bin {j} outside 0..{n_bins - 1}")
    a = np.zeros(n_bins)
    a[j] = 1.0
    return Histogram(a)


def uniform(n_bins: int) -> Histogram:
    return Histogram(np.full(n_bins, 1.0 / n_bins))


@dataclass(frozen=True, eq=False)
class CumulativeDistribution:
    """Prefix sums of a histogram with periodic extension.

    ``at(i)`` accepts any integer: ``prefix(i + N) = prefix(i) + total``.
    """

    prefix: np.ndarray
    total: float

    def __post_init__(self):
        object.__setattr__(self, "prefix", _frozen(self.prefix))

    @property
    def n_bins(self) -> int:
        return self.prefix.shape[0]

    def at(self, i: int) -> float:
        q, r = divmod(int(i), self.n_bins)
        return float(self.prefix[r] + q * self.total)

    def quantile(self, m: float) -> int:
        return quantile(self, m)


def cumulative(h) -> CumulativeDistribution:
    values = np.asarray(h, dtype=float)
    prefix = np.cumsum(values)
    return CumulativeDistribution(prefix, float(prefix[-1]))


def quantile(c: CumulativeDistribution, m: float) -> int:
    """Smallest bin index ``i`` with ``prefix[i] >= m``."""
    if not (m > 0 and m <= c.total + QUANTILE_TOL):
        raise OutOfRange(f"quantile level {m!r} outside (0, {c.total}]")
    i = int(np.searchsorted(c.prefix, m, side="left"))
    # levels within rounding of the total map to the last bin
    return min(i, c.n_bins - 1)


def rotate(h, k: int) -> Histogram:
    """Shift mass ``k`` bins forward: ``out[i] = h[(i - k) mod N]``."""
    h = as_histogram(h) if not isinstance(h, Histogram) else h
    return Histogram(np.roll(h.values, int(k)), normalized=h.normalized)


def check_pair(s, t) -> tuple[np.ndarray, np.ndarray]:
    """Return ``s`` and ``t`` as float arrays of equal length."""
    a = np.asarray(s, dtype=float)
    b = np.asarray(t, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise LengthMismatch(f"histogram lengths differ: {a.shape} vs {b.shape}")
    return a, b


def load_histogram(path: str | Path, normalize: bool = False) -> Histogram:
    """Read a histogram from a JSON array or a one-value-per-line CSV file."""
    text = Path(path).read_text()
    stripped = text.strip()
    if stripped.startswith("["):
        values = json.loads(stripped)
    else:
        values = []
        for line in stripped.splitlines():
            cell = line.split(",")[-1].strip()
            if not cell or cell[0].isalpha() or cell.startswith("#"):
                continue  # blank, header or comment
            values.append(float(cell))
    return new_histogram(values, normalize=normalize)


def dump_histogram(h: Sequence[float] | Histogram, path: str | Path) -> None:
    """Write a JSON array, or one value per line when ``path`` ends in ``.csv``."""
    values = np.asarray(h, dtype=float).tolist()
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text("".join(f"{v!r}\n" for v in values))
    else:
        path.write_text(json.dumps(values) + "\n")

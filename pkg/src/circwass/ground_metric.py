"""Arc-length ground distances on the circle and increasing maps of them.

A ground metric is ``f(d)`` where ``d`` is the circular bin distance and
``f`` is one of: linear, power, Huber, chord or step. The adaptive variant
blends ``f`` of learned class-centroid distances with ``f`` of arc length.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import AsymmetricInput, BadParameter, DimensionMismatch, IndexOutOfRange, MissingClass


class MetricKind(str, enum.Enum):
    LINEAR = "linear"
    POWER = "power"
    HUBER = "huber"
    CHORD = "chord"
    STEP = "step"


@dataclass(frozen=True)
class GroundMetricSpec:
    """Which increasing function of arc length to use, with its parameters.

    ``rho`` is only read for POWER, ``tau`` only for HUBER. CHORD needs
    ``n_bins`` for its radius ``N / 2pi``.
    """

    kind: MetricKind = MetricKind.LINEAR
    rho: float = 2.0
    tau: float = 1.0
    n_bins: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if self.kind is MetricKind.POWER and not self.rho > 0:
            raise BadParameter(f"power exponent must be positive, got {self.rho}")
        if self.kind is MetricKind.HUBER and not self.tau > 0:
            raise BadParameter(f"Huber knee must be positive, got {self.tau}")
        if self.n_bins is not None and self.n_bins < 2:
            raise BadParameter("n_bins must be at least 2")

    @classmethod
    def linear(cls, n_bins=None):
        return cls(MetricKind.LINEAR, n_bins=n_bins)

    @classmethod
    def power(cls, rho, n_bins=None):
        return cls(MetricKind.POWER, rho=rho, n_bins=n_bins)

    @classmethod
    def huber(cls, tau, n_bins=None):
        return cls(MetricKind.HUBER, tau=tau, n_bins=n_bins)

    @classmethod
    def chord(cls, n_bins):
        return cls(MetricKind.CHORD, n_bins=n_bins)

    @classmethod
    def step(cls, n_bins=None):
        return cls(MetricKind.STEP, n_bins=n_bins)

    def with_bins(self, n_bins: int) -> "GroundMetricSpec":
        if self.n_bins == n_bins:
            return self
        return GroundMetricSpec(self.kind, self.rho, self.tau, n_bins)

    @property
    def shape(self) -> str:
        """'linear', 'convex' or 'concave' as a function of arc length."""
        if self.kind is MetricKind.LINEAR or (self.kind is MetricKind.POWER and self.rho == 1):
            return "linear"
        if self.kind is MetricKind.HUBER or (self.kind is MetricKind.POWER and self.rho > 1):
            return "convex"
        return "concave"

    @property
    def is_convex(self) -> bool:
        return self.shape in ("linear", "convex")

    @property
    def label(self) -> str:
        if self.kind is MetricKind.POWER:
            return f"power{self.rho:g}"
        if self.kind is MetricKind.HUBER:
            return f"huber{self.tau:g}"
        return self.kind.value

    def __call__(self, d):
        """Vectorised ``f(d)`` with no domain check (any ``d >= 0``)."""
        d = np.asarray(d, dtype=float)
        kind = self.kind
        if kind is MetricKind.LINEAR:
            return d
        if kind is MetricKind.POWER:
            return d ** self.rho
        if kind is MetricKind.HUBER:
            tau = self.tau
            return np.where(d <= tau, d * d, tau * (2.0 * d - tau))
        if kind is MetricKind.CHORD:
            if self.n_bins is None:
                raise BadParameter("chord metric needs n_bins")
            r = self.n_bins / (2.0 * np.pi)
            return 2.0 * r * np.sin(d / (2.0 * r))
        return (d != 0).astype(float)


def arc_length(i: int, j: int, n_bins: int) -> int:
    if not (0 <= i < n_bins and 0 <= j < n_bins):
        raise IndexOutOfRange(f"bins ({i}, {j}) outside 0..{n_bins - 1}")
    d = abs(i - j)
    return min(d, n_bins - d)


def arc_length_matrix(n_bins: int) -> np.ndarray:
    idx = np.arange(n_bins)
    d = np.abs(idx[:, None] - idx[None, :])
    return np.minimum(d, n_bins - d)


def apply_metric(spec: GroundMetricSpec, d: float) -> float:
    if d < 0:
        raise BadParameter(f"distance must be non-negative, got {d}")
    if spec.n_bins is not None and d > spec.n_bins / 2:
        raise BadParameter(f"distance {d} exceeds the half circumference {spec.n_bins / 2}")
    return float(spec(d))


def ground_matrix(spec: GroundMetricSpec, n_bins: int) -> np.ndarray:
    """``D[i, j] = f(arc_length(i, j))`` as a read-only N x N array."""
    if n_bins < 2:
        raise BadParameter("need at least 2 bins")
    spec = spec.with_bins(n_bins)
    D = np.asarray(spec(arc_length_matrix(n_bins)), dtype=float)
    D.setflags(write=False)
    return D


def line_ground_matrix(spec: GroundMetricSpec, n_bins: int) -> np.ndarray:
    """``D[i, j] = f(|i - j|)``: bins on a segment, no wraparound."""
    idx = np.arange(n_bins)
    return np.asarray(spec.with_bins(n_bins)(np.abs(idx[:, None] - idx[None, :])), dtype=float)


def centroid_distances(features_by_class: Mapping[int, Sequence[Sequence[float]]],
                       n_classes: int | None = None) -> np.ndarray:
    """Pairwise l1 distances between per-class mean feature vectors."""
    if n_classes is None:
        n_classes = max(features_by_class) + 1 if features_by_class else 0
    centroids = []
    dim = None
    for c in range(n_classes):
        feats = features_by_class.get(c)
        if feats is None or len(feats) == 0:
            raise MissingClass(f"class {c} has no feature vectors")
        arr = np.asarray(feats, dtype=float)
        if arr.ndim != 2:
            raise DimensionMismatch(f"class {c}: expected a list of vectors")
        if dim is None:
            dim = arr.shape[1]
        elif arr.shape[1] != dim:
            raise DimensionMismatch(f"class {c} has dimension {arr.shape[1]}, expected {dim}")
        centroids.append(arr.mean(axis=0))
    C = np.stack(centroids)
    return np.abs(C[:, None, :] - C[None, :, :]).sum(axis=2)


def rescale_distances(d_bar: np.ndarray, n_bins: int) -> np.ndarray:
    """Scale ``d_bar`` so its largest entry equals ``n_bins / 2``."""
    d_bar = np.asarray(d_bar, dtype=float)
    top = d_bar.max()
    if top <= 0:
        return np.zeros_like(d_bar)
    return d_bar * (n_bins / 2.0 / top)


def blend_adaptive(d_bar, spec: GroundMetricSpec, blend_weight: float) -> np.ndarray:
    """``(f(d_bar) + w * f(arc)) / (1 + w)`` for a learned distance matrix."""
    d_bar = np.asarray(d_bar, dtype=float)
    if d_bar.ndim != 2 or d_bar.shape[0] != d_bar.shape[1]:
        raise AsymmetricInput("d_bar must be square")
    if not np.allclose(d_bar, d_bar.T, rtol=0, atol=1e-12):
        raise AsymmetricInput("d_bar must be symmetric")
    if blend_weight < 0:
        raise BadParameter("blend weight must be non-negative")
    n = d_bar.shape[0]
    spec = spec.with_bins(n)
    learned = spec(d_bar)
    if blend_weight == 0:
        return np.asarray(learned, dtype=float)
    return (learned + blend_weight * ground_matrix(spec, n)) / (1.0 + blend_weight)


def blend_schedule(rounds: int = 10, start: float = 10.0) -> np.ndarray:
    """Blend weights decaying linearly from ``start`` to 0 over ``rounds``."""
    if rounds < 1:
        raise BadParameter("need at least one round")
    if rounds == 1:
        return np.array([0.0])
    return np.linspace(start, 0.0, rounds)


def matrix_to_json(D) -> str:
    return json.dumps(np.asarray(D, dtype=float).tolist())

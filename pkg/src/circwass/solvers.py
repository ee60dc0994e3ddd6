"""Closed-form Wasserstein losses between histograms on a circle or a line.

Every solver here is exact for its ground-metric family:

* one-hot targets, any ground metric: ``sum_i s_i f(d(i, j*))`` in O(N)
* arc length: the median of the prefix differences, O(N)
* convex increasing ``f`` of arc length: the circle is cut at the optimal
  offset, found by bisection on the slope of the cut cost
* step metric: half the l1 distance
* the line (no wraparound) with the monotone quantile coupling

Gradients are taken with respect to the histogram entries. Chaining through
a softmax is left to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Integral

import numpy as np

from .errors import BadParameter, IndexOutOfRange, LengthMismatch, NonConvexSpec
from .ground_metric import GroundMetricSpec, MetricKind, arc_length_matrix, ground_matrix
from .histogram import check_pair
from .oracle import lp_exact
from .result import LossValue


@dataclass(frozen=True)
class QuantilePrecision:
    """Resolution ``M = 1/eps`` of the cut-offset grid for convex costs."""

    M: int = 10**8

    def __post_init__(self):
        if self.M < 2 or math.log2(self.M) > 60:
            raise BadParameter(f"precision M must be in [2, 2**60], got {self.M}")

    def check(self, n_bins: int) -> None:
        if self.M < n_bins:
            raise BadParameter(f"precision M={self.M} is below the bin count {n_bins}")


DEFAULT_PRECISION = QuantilePrecision()


def _spec_for(spec: GroundMetricSpec, n: int) -> GroundMetricSpec:
    return spec.with_bins(n)


def _check_index(j: int, n: int) -> int:
    if not 0 <= j < n:
        raise IndexOutOfRange(f"target bin {j} outside 0..{n - 1}")
    return int(j)


def one_hot_weights(j_star: int, spec: GroundMetricSpec, n: int) -> np.ndarray:
    d = arc_length_matrix(n)[_check_index(j_star, n)]
    return np.asarray(_spec_for(spec, n)(d), dtype=float)


def one_hot_loss(s, j_star: int, spec: GroundMetricSpec) -> LossValue:
    s = np.asarray(s, dtype=float)
    w = one_hot_weights(j_star, spec, s.shape[0])
    return LossValue(float(s @ w), "one_hot")


def one_hot_grad(s, j_star: int, spec: GroundMetricSpec) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return one_hot_weights(j_star, spec, s.shape[0])


def _prefix_differences(s, t) -> np.ndarray:
    s, t = check_pair(s, t)
    return np.cumsum(s - t)


def _lower_median(phi: np.ndarray) -> float:
    k = (phi.shape[-1] - 1) // 2
    return float(np.partition(phi, k)[k])


def linear_circular(s, t) -> LossValue:
    """Arc-length transport cost: ``sum_j |phi_j - median(phi)|``.

    ``phi`` are the prefix sums of ``s - t``. The lower median is reported
    as ``alpha_star``; every point of the median interval gives the same
    value. Runs in O(N) through ``np.partition``.
    """
    phi = _prefix_differences(s, t)
    alpha = _lower_median(phi)
    return LossValue(float(np.abs(phi - alpha).sum()), "linear_circular", alpha_star=alpha)


def linear_circular_grad(s, t) -> np.ndarray:
    """Subgradient of :func:`linear_circular` with the median held fixed.

    Component ``n`` is ``sum_{j >= n} sign(phi_j - alpha)``. For an even bin
    count ``alpha`` is taken at the middle of the median interval, which is
    where the loss is differentiable in every prefix difference.
    """
    phi = _prefix_differences(s, t)
    n = phi.shape[0]
    if n % 2:
        alpha = _lower_median(phi)
    else:
        lo, hi = np.partition(phi, [n // 2 - 1, n // 2])[[n // 2 - 1, n // 2]]
        alpha = 0.5 * (lo + hi)
    signs = np.sign(phi - alpha)
    return np.cumsum(signs[::-1])[::-1]


def step_l1(s, t) -> LossValue:
    s, t = check_pair(s, t)
    return LossValue(0.5 * float(np.abs(s - t).sum()), "step_l1")


def step_l1_grad(s, t) -> np.ndarray:
    s, t = check_pair(s, t)
    return 0.5 * np.sign(s - t)


# -- convex costs ----------------------------------------------------------
#
# With S, T the prefix sums of s, t and T extended periodically
# (T(y + N) = T(y) + 1), cutting the circle at offset alpha pairs mass level
# m with source bin S^-1(m) and target position T^-1(m + alpha). The cost
#     C(alpha) = int_0^1 f(|S^-1(m) - T^-1(m + alpha)|) dm
# is convex and piecewise linear in alpha; its minimum is the circular
# transport cost. All helpers below work on a batch of rows at once.


def _levels(h: np.ndarray) -> np.ndarray:
    c = np.minimum(np.cumsum(h, axis=-1), 1.0)
    c[..., -1] = 1.0
    return c


def _extend(T: np.ndarray) -> np.ndarray:
    return np.concatenate([T - 1.0, T, T + 1.0], axis=-1)


def _bsearch(A: np.ndarray, q: np.ndarray, side: str) -> np.ndarray:
    """Row-wise ``searchsorted``: ``A`` is (B, K), ``q`` is (B, Q)."""
    if A.shape[0] == 1:
        return np.searchsorted(A[0], q[0], side=side)[None, :]
    # rows live in [-1, 3]; shifting row r by 8r keeps them globally sorted
    shift = 8.0 * np.arange(A.shape[0])[:, None]
    idx = np.searchsorted((A + shift).ravel(), (q + shift).ravel(), side=side)
    return idx.reshape(q.shape) - A.shape[1] * np.arange(A.shape[0])[:, None]


class _CutProblem:
    """Batched circular (or line) transport between rows of ``s`` and ``t``."""

    def __init__(self, s: np.ndarray, t: np.ndarray, f: GroundMetricSpec):
        self.n = s.shape[1]
        self.f = f
        self.S = _levels(s)
        self.T = _levels(t)
        self.T_ext = _extend(self.T)

    def slope(self, alpha: np.ndarray) -> np.ndarray:
        """Right derivative of C at ``alpha``, one value per row.

        Every target level has exactly one periodic copy ``T[j] + k`` in the
        window ``(alpha, alpha + 1]``. Picking ``k`` per level, rather than
        filtering the three stored copies, keeps a level from being counted
        twice when ``T[j] + 1`` rounds (e.g. a mass of 1e-97).
        """
        n = self.n
        x = self.T - alpha[:, None]
        k = -np.floor(x)
        r = x + k
        top = r <= 0
        r = np.where(top, 1.0, r)
        k = np.where(top, k + 1, k)
        src = _bsearch(self.S, np.minimum(r, 1.0), "left")
        y = np.arange(n)[None, :] + n * k
        return (self.f(np.abs(src - y - 1)) - self.f(np.abs(src - y))).sum(axis=1)

    def cost(self, alpha: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        """C(alpha) evaluated exactly by merging the quantile breakpoints."""
        S, T_ext = (self.S, self.T_ext) if rows is None else (self.S[rows], self.T_ext[rows])
        n = self.n
        bps = np.concatenate([np.zeros((S.shape[0], 1)), S, np.clip(T_ext - alpha[:, None], 0.0, 1.0)], axis=1)
        bps.sort(axis=1)
        lo, hi = bps[:, :-1], bps[:, 1:]
        lengths = hi - lo
        mid = 0.5 * (lo + hi)
        x = _bsearch(S, mid, "left")
        y = _bsearch(T_ext, mid + alpha[:, None], "left") - n
        return (lengths * self.f(np.abs(x - y))).sum(axis=1)

    def search(self, M: int, refine: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Minimise C over alpha in [-1, 1]; returns (values, alphas)."""
        B = self.S.shape[0]
        lo = np.full(B, -M, dtype=np.int64)
        hi = np.full(B, M, dtype=np.int64)
        # invariant: slope(lo) < 0 <= slope(hi), after clamping the ends
        at_lo = self.slope(lo / M) >= 0
        at_hi = self.slope(hi / M) < 0
        hi = np.where(at_lo, lo, hi)
        lo = np.where(at_hi, hi, lo)
        active = hi - lo > 1
        while active.any():
            mid = (lo + hi) // 2
            up = self.slope(mid / M) >= 0
            hi = np.where(active & up, mid, hi)
            lo = np.where(active & ~up, mid, lo)
            active = hi - lo > 1
        alpha = hi / M
        values = self.cost(alpha)
        if refine:
            values, alpha = self._refine(lo / M, alpha, values)
        return values, alpha

    def _refine(self, a_lo, a_hi, values):
        """Snap to the exact breakpoint of C inside ``(a_lo, a_hi]``.

        Breakpoints sit where a shifted target level meets a source level,
        ``alpha = T_ext[l] - S[k]``. C is linear between them, so the
        minimum over the bracket is at one of them or at ``a_hi``.
        """
        B = self.S.shape[0]
        K = self.T_ext.shape[1]
        src = np.concatenate([np.zeros((B, 1)), self.S], axis=1)
        first = _bsearch(self.T_ext, src + a_lo[:, None], "right")
        found_rows, found_alpha = [], []
        offset = 0
        while True:
            idx = first + offset
            ok = idx < K
            cand = np.take_along_axis(self.T_ext, np.minimum(idx, K - 1), axis=1) - src
            ok &= (cand > a_lo[:, None]) & (cand <= a_hi[:, None])
            if not ok.any():
                break
            rows, cols = np.nonzero(ok)
            found_rows.append(rows)
            found_alpha.append(cand[rows, cols])
            offset += 1
        if not found_rows:
            return values, a_hi
        rows = np.concatenate(found_rows)
        cand_alpha = np.concatenate(found_alpha)
        cand_cost = self.cost(cand_alpha, rows)
        best = values.copy()
        alpha = a_hi.copy()
        order = np.lexsort((cand_cost, rows))
        rows, cand_alpha, cand_cost = rows[order], cand_alpha[order], cand_cost[order]
        lead = np.ones(rows.size, dtype=bool)
        lead[1:] = rows[1:] != rows[:-1]
        r, c_alpha, c_cost = rows[lead], cand_alpha[lead], cand_cost[lead]
        better = c_cost < best[r]
        best[r[better]] = c_cost[better]
        alpha[r[better]] = c_alpha[better]
        return best, alpha

    def potentials(self, alpha: np.ndarray) -> np.ndarray:
        """Dual potentials of the source bins for the coupling cut at ``alpha``.

        Walking up the mass levels, the source index steps from ``k`` to
        ``k + 1`` at level ``S[k]`` while paired with target ``y_k``, so
        ``u[k+1] - u[k] = c(k+1, y_k) - c(k, y_k)``. At the optimal cut one
        source level coincides with a target level and its pairing is
        ambiguous; that step is fixed instead by closing the loop around the
        circle (the steps sum to zero).
        """
        n = self.n
        level = self.S + alpha[:, None]
        y = _bsearch(self.T_ext, level, "left") - n
        k = np.arange(n)[None, :]
        steps = self.f(np.abs(k + 1 - y)) - self.f(np.abs(k - y))
        # distance from each source level to the nearest target level
        right = np.minimum(_bsearch(self.T_ext, level, "left"), 3 * n - 1)
        left = np.maximum(right - 1, 0)
        gap = np.minimum(np.abs(np.take_along_axis(self.T_ext, right, 1) - level),
                         np.abs(np.take_along_axis(self.T_ext, left, 1) - level))
        cut = np.argmin(gap, axis=1)
        rows = np.arange(steps.shape[0])
        steps[rows, cut] = 0.0
        steps[rows, cut] = -steps.sum(axis=1)
        u = np.concatenate([np.zeros((steps.shape[0], 1)), np.cumsum(steps[:, :-1], axis=1)], axis=1)
        return u - u.mean(axis=1, keepdims=True)


def _as_batch(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[None, :] if a.ndim == 1 else a


def _require_convex(spec: GroundMetricSpec) -> None:
    if not spec.is_convex:
        raise NonConvexSpec(f"{spec.label} is not convex in arc length; use lp_exact")


def convex_circular_batch(s, t, spec: GroundMetricSpec,
                          prec: QuantilePrecision = DEFAULT_PRECISION,
                          refine: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`convex_circular`; returns ``(values, alpha_stars)``."""
    s, t = _as_batch(s), _as_batch(t)
    if s.shape != t.shape:
        raise LengthMismatch(f"shapes differ: {s.shape} vs {t.shape}")
    _require_convex(spec)
    prec.check(s.shape[1])
    return _CutProblem(s, t, _spec_for(spec, s.shape[1])).search(prec.M, refine)


def convex_circular_grad_batch(s, t, spec: GroundMetricSpec,
                               prec: QuantilePrecision = DEFAULT_PRECISION,
                               alpha: np.ndarray | None = None) -> np.ndarray:
    s, t = _as_batch(s), _as_batch(t)
    _require_convex(spec)
    prob = _CutProblem(s, t, _spec_for(spec, s.shape[1]))
    if alpha is None:
        _, alpha = prob.search(prec.M)
    return prob.potentials(np.asarray(alpha, dtype=float))


def convex_circular(s, t, spec: GroundMetricSpec,
                    prec: QuantilePrecision = DEFAULT_PRECISION) -> LossValue:
    """Transport cost for a convex increasing function of arc length.

    The optimal cut offset is bracketed on the ``1/M`` grid by bisection on
    the sign of the slope of C, then snapped to the exact breakpoint inside
    the bracket. Each evaluation costs O(N log N); the whole search is
    O(N log N log M).
    """
    s, t = check_pair(s, t)
    values, alpha = convex_circular_batch(s, t, spec, prec)
    return LossValue(float(values[0]), "convex_circular", alpha_star=float(alpha[0]))


def convex_circular_grad(s, t, spec: GroundMetricSpec,
                         prec: QuantilePrecision = DEFAULT_PRECISION) -> np.ndarray:
    """Gradient of :func:`convex_circular` along mass-preserving directions.

    Returned as the source dual potentials centred to zero mean, so
    ``g[a] - g[b]`` is the derivative of moving mass from bin ``b`` to ``a``.
    """
    s, t = check_pair(s, t)
    return convex_circular_grad_batch(s, t, spec, prec)[0]


def line_wasserstein(s, t, spec: GroundMetricSpec) -> LossValue:
    """Monotone-coupling cost on a segment: ``int f(|S^-1(m) - T^-1(m)|) dm``.

    This is the optimal transport cost for linear and convex ``f``. For
    concave ``f`` it is the cost of the quantile coupling, an upper bound.
    """
    s, t = check_pair(s, t)
    prob = _CutProblem(s[None, :], t[None, :], _spec_for(spec, s.shape[0]))
    return LossValue(float(prob.cost(np.zeros(1))[0]), "line_wasserstein")


def one_hot_index(target) -> int | None:
    """Bin index if ``target`` is an index or an exact one-hot histogram."""
    if isinstance(target, Integral):
        return int(target)
    t = np.asarray(target, dtype=float)
    if t.ndim == 1:
        nz = np.flatnonzero(t)
        if nz.size == 1 and t[nz[0]] == 1.0:
            return int(nz[0])
    return None


def dispatch_loss(s, target, spec: GroundMetricSpec,
                  prec: QuantilePrecision = DEFAULT_PRECISION) -> LossValue:
    """Route to the fastest exact solver for ``(target, spec)``."""
    s = np.asarray(s, dtype=float)
    j = one_hot_index(target)
    if j is not None:
        return one_hot_loss(s, j, spec)
    if spec.shape == "linear":
        return linear_circular(s, target)
    if spec.kind is MetricKind.STEP:
        return step_l1(s, target)
    if spec.is_convex:
        return convex_circular(s, target, spec, prec)
    value, _ = lp_exact(s, target, ground_matrix(spec, s.shape[0]))
    return value


def dispatch_grad(s, target, spec: GroundMetricSpec,
                  prec: QuantilePrecision = DEFAULT_PRECISION) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    j = one_hot_index(target)
    if j is not None:
        return one_hot_grad(s, j, spec)
    if spec.shape == "linear":
        return linear_circular_grad(s, target)
    if spec.kind is MetricKind.STEP:
        return step_l1_grad(s, target)
    if spec.is_convex:
        return convex_circular_grad(s, target, spec, prec)
    value, _ = lp_exact(s, target, ground_matrix(spec, s.shape[0]))
    return value.info["u"] - value.info["u"].mean()


def cross_entropy(s, j_star: int) -> float:
    s = np.asarray(s, dtype=float)
    return float(-np.log(s[_check_index(j_star, s.shape[0])]))


__all__ = [
    "QuantilePrecision", "one_hot_loss", "one_hot_grad", "linear_circular", "linear_circular_grad",
    "convex_circular", "convex_circular_grad", "convex_circular_batch", "convex_circular_grad_batch",
    "line_wasserstein", "step_l1", "step_l1_grad", "dispatch_loss", "dispatch_grad", "cross_entropy",
]

"""Conservative target labels: one-hot mixed with wrapped unimodal and uniform mass."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import BadParameter, IndexOutOfRange
from .histogram import Histogram


class Family(str, enum.Enum):
    BINOMIAL = "binomial"
    POISSON = "poisson"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class SmoothingSpec:
    """Shape of the smoothing distribution and the mixture weights.

    The unimodal part has ``K + 1`` bins. ``xi`` weights the unimodal part
    and ``eta`` the uniform part; the one-hot keeps ``1 - xi - eta``.
    """

    family: Family = Family.BINOMIAL
    K: int = 4
    p: float = 0.5
    lam: float = 1.0
    sigma2: float = 1.0
    xi: float = 0.1
    eta: float = 0.05
    softmax_gaussian: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.K < 0 or int(self.K) != self.K:
            raise BadParameter(f"K must be a non-negative integer, got {self.K}")
        if not (0 <= self.xi <= 1 and 0 <= self.eta <= 1):
            raise BadParameter("xi and eta must lie in [0, 1]")
        if self.xi + self.eta > 1 + 1e-12:
            raise BadParameter(f"xi + eta = {self.xi + self.eta} exceeds 1")

    def pmf(self) -> np.ndarray:
        if self.family is Family.BINOMIAL:
            return binomial_pmf(self.K, self.p)
        if self.family is Family.POISSON:
            return poisson_pmf(self.K, self.lam)
        return gaussian_pmf(self.K, self.sigma2, softmax=self.softmax_gaussian)


@dataclass(frozen=True)
class ConservativeLabel:
    histogram: Histogram
    j_star: int

    @property
    def values(self) -> np.ndarray:
        return self.histogram.values

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.histogram.values, dtype=dtype)


def binomial_pmf(K: int, p: float) -> np.ndarray:
    """Binomial(K, p) probabilities for k = 0..K, evaluated in log space."""
    if K < 0:
        raise BadParameter("K must be non-negative")
    if not 0 < p < 1:
        raise BadParameter(f"p must lie in (0, 1), got {p}")
    k = np.arange(K + 1)
    logp = gammaln(K + 1) - gammaln(k + 1) - gammaln(K - k + 1) + k * np.log(p) + (K - k) * np.log1p(-p)
    return np.exp(logp)


def poisson_pmf(K: int, lam: float) -> np.ndarray:
    """Poisson(lam) masses on k = 0..K, renormalised to sum to one."""
    if K < 0:
        raise BadParameter("K must be non-negative")
    if not lam > 0:
        raise BadParameter(f"lambda must be positive, got {lam}")
    k = np.arange(K + 1)
    logp = k * np.log(lam) - lam - gammaln(k + 1)
    w = np.exp(logp - logp.max())
    return w / w.sum()


def gaussian_pmf(K: int, sigma2: float, softmax: bool = True) -> np.ndarray:
    """Gaussian density at x = 0..K with mean K/2, made discrete.

    With ``softmax`` (the default) the density values go through
    ``exp(v) / sum(exp(v))``; otherwise they are divided by their sum.
    """
    if K < 0:
        raise BadParameter("K must be non-negative")
    if not sigma2 > 0:
        raise BadParameter(f"sigma2 must be positive, got {sigma2}")
    x = np.arange(K + 1)
    dens = np.exp(-((x - K / 2.0) ** 2) / (2.0 * sigma2)) / np.sqrt(2.0 * np.pi * sigma2)
    if softmax:
        e = np.exp(dens - dens.max())
        return e / e.sum()
    return dens / dens.sum()


def wrap_center(pmf, j_star: int, n_bins: int) -> np.ndarray:
    """Lay ``pmf`` on the circle with entry ``floor(K/2)`` on ``j_star``.

    Entries that land on the same bin after wrapping are summed.
    """
    pmf = np.asarray(pmf, dtype=float)
    if not 0 <= j_star < n_bins:
        raise IndexOutOfRange(f"bin {j_star} outside 0..{n_bins - 1}")
    K = pmf.shape[0] - 1
    bins = (j_star - K // 2 + np.arange(K + 1)) % n_bins
    out = np.zeros(n_bins)
    np.add.at(out, bins, pmf)
    return out


def conservative_label(j_star: int, n_bins: int, spec: SmoothingSpec) -> ConservativeLabel:
    """``(1 - xi - eta) onehot(j*) + xi wrapped_pmf + eta / N``."""
    if not 0 <= j_star < n_bins:
        raise IndexOutOfRange(f"bin {j_star} outside 0..{n_bins - 1}")
    terms = np.zeros((5, n_bins))
    terms[0, j_star] = 1.0
    terms[1, j_star] = -spec.xi
    terms[2, j_star] = -spec.eta
    terms[3] = spec.xi * wrap_center(spec.pmf(), j_star, n_bins)
    terms[4] = spec.eta / n_bins
    # one rounding per bin, so decimal-exact mixtures such as 0.89375 stay exact
    t = np.array([math.fsum(col) for col in terms.T])
    return ConservativeLabel(Histogram(t), j_star)


def conservative_labels(j_stars, n_bins: int, spec: SmoothingSpec) -> np.ndarray:
    """Stacked labels for an array of true bins, shape (len(j_stars), N)."""
    j_stars = np.asarray(j_stars, dtype=int)
    base = conservative_label(0, n_bins, spec).values
    idx = (np.arange(n_bins)[None, :] - j_stars[:, None]) % n_bins
    return base[idx]

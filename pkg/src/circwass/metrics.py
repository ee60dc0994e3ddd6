"""Angular error statistics for binned pose predictions."""

from __future__ import annotations

import numpy as np

from .errors import BadParameter, LengthMismatch


def _pair(pred_bins, true_bins, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred_bins, dtype=int).ravel()
    t = np.asarray(true_bins, dtype=int).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} predictions for {t.size} labels")
    if p.size == 0:
        raise LengthMismatch("need at least one prediction")
    if n_bins < 2:
        raise BadParameter("need at least 2 bins")
    return p % n_bins, t % n_bins


def bin_errors(pred_bins, true_bins, n_bins: int) -> np.ndarray:
    """Circular distance in bins for each prediction."""
    p, t = _pair(pred_bins, true_bins, n_bins)
    d = np.abs(p - t)
    return np.minimum(d, n_bins - d)


def angular_errors(pred_bins, true_bins, n_bins: int) -> np.ndarray:
    """Per-sample absolute angular error in degrees."""
    return bin_errors(pred_bins, true_bins, n_bins) * (360.0 / n_bins)


def maad(pred_bins, true_bins, n_bins: int) -> float:
    """Mean absolute angular deviation in degrees."""
    return float(angular_errors(pred_bins, true_bins, n_bins).mean())


mean_ae = maad


def median_ae(pred_bins, true_bins, n_bins: int) -> float:
    return float(np.median(angular_errors(pred_bins, true_bins, n_bins)))


def acc_at(pred_bins, true_bins, n_bins: int, threshold_radians: float) -> float:
    """Fraction of samples whose angular error is strictly below the threshold."""
    if not 0 < threshold_radians <= np.pi:
        raise BadParameter(f"threshold must lie in (0, pi], got {threshold_radians}")
    err = bin_errors(pred_bins, true_bins, n_bins) * (2.0 * np.pi / n_bins)
    return float(np.mean(err < threshold_radians))


def regression_error(probs, true_bins, spec) -> float:
    """Mean ``f(d(argmax s, j*))``: the non-differentiable regression surrogate."""
    probs = np.asarray(probs, dtype=float)
    n = probs.shape[1]
    d = bin_errors(probs.argmax(axis=1), true_bins, n)
    return float(np.mean(spec.with_bins(n)(d)))


def summary(pred_bins, true_bins, n_bins: int) -> dict[str, float]:
    return {
        "maad": maad(pred_bins, true_bins, n_bins),
        "median_ae": median_ae(pred_bins, true_bins, n_bins),
        "acc_pi_8": acc_at(pred_bins, true_bins, n_bins, np.pi / 8),
        "acc_pi_4": acc_at(pred_bins, true_bins, n_bins, np.pi / 4),
    }

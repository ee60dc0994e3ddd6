"""Synthetic circular-label data and a small softmax classifier to train on it.

The classifier is a one-hidden-layer tanh network with hand-written
backpropagation. Any loss in the package can drive it: the solvers supply
the gradient with respect to the softmax output and the chain through the
softmax is closed form, ``dL/dz = s * (g - <s, g>)``.
"""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import metrics
from .errors import BadParameter, DivergedLoss, MissingClass
from .ground_metric import (GroundMetricSpec, MetricKind, arc_length_matrix, blend_adaptive,
                            blend_schedule, centroid_distances, ground_matrix, rescale_distances)
from .labels import Family, SmoothingSpec, conservative_labels
from .solvers import QuantilePrecision, convex_circular_batch, convex_circular_grad_batch

log = logging.getLogger(__name__)


# -- data ------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Label corruption: wrapped-binomial inlier offsets plus uniform outliers.

    With probability ``outlier_rate`` a label is replaced by a uniformly drawn
    bin; otherwise it is shifted by ``Binomial(K, p) - K // 2`` bins.
    """

    K: int = 0
    p: float = 0.5
    outlier_rate: float = 0.0

    def __post_init__(self):
        if self.K < 0:
            raise BadParameter("noise K must be non-negative")
        if not 0 < self.p < 1:
            raise BadParameter("noise p must lie in (0, 1)")
        if not 0 <= self.outlier_rate <= 1:
            raise BadParameter("outlier rate must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    features: np.ndarray
    true_bins: np.ndarray
    noisy_bins: np.ndarray
    n_bins: int
    noise: NoiseSpec
    seed: int

    def __len__(self) -> int:
        return self.true_bins.shape[0]

    @property
    def samples(self):
        return list(zip(self.features, self.true_bins.tolist(), self.noisy_bins.tolist()))


def angle_features(bins, n_bins: int, harmonics: int = 3) -> np.ndarray:
    theta = 2.0 * np.pi * np.asarray(bins, dtype=float) / n_bins
    cols = []
    for h in range(1, harmonics + 1):
        cols += [np.cos(h * theta), np.sin(h * theta)]
    return np.stack(cols, axis=1)


def gen_synthetic(n_bins: int, n_samples: int, noise: NoiseSpec = NoiseSpec(), seed: int = 0,
                  harmonics: int = 3, feature_noise: float = 0.1) -> SyntheticDataset:
    """Balanced classes, harmonic angle embeddings plus Gaussian jitter."""
    if n_bins < 4:
        raise BadParameter("need at least 4 bins")
    if n_samples < n_bins:
        raise BadParameter("need at least one sample per bin")
    rng = np.random.default_rng(seed)
    true = rng.permutation(np.arange(n_samples) % n_bins)
    X = angle_features(true, n_bins, harmonics)
    X = X + feature_noise * rng.standard_normal(X.shape)

    offsets = rng.binomial(noise.K, noise.p, size=n_samples) - noise.K // 2 if noise.K else np.zeros(n_samples, int)
    noisy = (true + offsets) % n_bins
    outlier = rng.random(n_samples) < noise.outlier_rate
    noisy = np.where(outlier, rng.integers(0, n_bins, size=n_samples), noisy)
    return SyntheticDataset(X, true, noisy.astype(int), n_bins, noise, seed)


# -- losses ------------------------------------------------------------------

@dataclass(frozen=True)
class LossConfig:
    """``kind`` is "ce" or "wasserstein"; ``smoothing`` turns on conservative labels."""

    kind: str = "ce"
    metric: Optional[GroundMetricSpec] = None
    smoothing: Optional[SmoothingSpec] = None
    precision: int = 10**6

    def __post_init__(self):
        if self.kind not in ("ce", "wasserstein"):
            raise BadParameter(f"unknown loss kind {self.kind!r}")
        if self.kind == "wasserstein" and self.metric is None:
            object.__setattr__(self, "metric", GroundMetricSpec.linear())

    @property
    def name(self) -> str:
        head = "ce" if self.kind == "ce" else f"wass-{self.metric.label}"
        return head + (f"-{self.smoothing.family.value}" if self.smoothing else "")


DEFAULT_SMOOTHING = {
    Family.BINOMIAL: dict(K=10, p=0.5),
    Family.POISSON: dict(K=10, lam=5.0),
    Family.GAUSSIAN: dict(K=10, sigma2=2.5),
}


def parse_loss(name: str, xi: float = 0.1, eta: float = 0.05, **smoothing) -> LossConfig:
    """Build a :class:`LossConfig` from names like ``wass-power2-binomial``.

    Grammar: ``ce[-family]`` or ``wass-<metric>[-family]`` where metric is
    ``linear``, ``power<rho>``, ``huber<tau>``, ``chord`` or ``step`` and
    family is ``binomial``, ``poisson``, ``gaussian`` or ``onehot``.
    """
    parts = name.strip().lower().split("-")
    head, rest = parts[0], parts[1:]
    if head == "ce":
        kind, metric = "ce", None
    elif head in ("wass", "wasserstein"):
        if not rest:
            raise BadParameter(f"loss {name!r} needs a metric")
        kind, metric = "wasserstein", _parse_metric(rest.pop(0))
    else:
        raise BadParameter(f"unknown loss {name!r}")
    spec = None
    if rest:
        fam = rest.pop(0)
        if fam != "onehot":
            family = Family(fam)
            params = {**DEFAULT_SMOOTHING[family], **smoothing}
            spec = SmoothingSpec(family=family, xi=xi, eta=eta, **params)
    if rest:
        raise BadParameter(f"trailing parts in loss name {name!r}")
    return LossConfig(kind, metric, spec)


def _parse_metric(token: str) -> GroundMetricSpec:
    m = re.fullmatch(r"(linear|power|huber|chord|step)([0-9.]*)", token)
    if not m:
        raise BadParameter(f"unknown metric {token!r}")
    kind, num = m.groups()
    if kind == "power":
        return GroundMetricSpec.power(float(num or 2))
    if kind == "huber":
        return GroundMetricSpec.huber(float(num or 1))
    return GroundMetricSpec(MetricKind(kind))


def _linear_batch(s, t):
    phi = np.cumsum(s - t, axis=1)
    n = phi.shape[1]
    part = np.partition(phi, [(n - 1) // 2, n // 2], axis=1)
    lower = part[:, (n - 1) // 2]
    mid = 0.5 * (lower + part[:, n // 2])
    value = np.abs(phi - lower[:, None]).sum(axis=1)
    signs = np.sign(phi - mid[:, None])
    grad = np.cumsum(signs[:, ::-1], axis=1)[:, ::-1]
    return value, grad


def loss_and_grad(probs: np.ndarray, labels: np.ndarray, loss: LossConfig,
                  D: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample loss and its gradient with respect to the logits."""
    B, n = probs.shape
    if loss.kind == "ce":
        if loss.smoothing is None:
            target = np.zeros_like(probs)
            target[np.arange(B), labels] = 1.0
        else:
            target = conservative_labels(labels, n, loss.smoothing)
        logp = np.log(np.clip(probs, 1e-300, None))
        return -(target * logp).sum(axis=1), probs - target

    spec = loss.metric.with_bins(n)
    if loss.smoothing is None:
        if D is None:
            D = ground_matrix(spec, n)
        g = D[:, labels].T
        value = (probs * g).sum(axis=1)
    else:
        if D is not None:
            raise BadParameter("a learned ground matrix only supports one-hot targets")
        t = conservative_labels(labels, n, loss.smoothing)
        if spec.shape == "linear":
            value, g = _linear_batch(probs, t)
        elif spec.kind is MetricKind.STEP:
            value, g = 0.5 * np.abs(probs - t).sum(axis=1), 0.5 * np.sign(probs - t)
        elif spec.is_convex:
            prec = QuantilePrecision(loss.precision)
            value, alpha = convex_circular_batch(probs, t, spec, prec)
            g = convex_circular_grad_batch(probs, t, spec, prec, alpha=alpha)
        else:
            raise BadParameter(f"no closed form to train {spec.label} against dense targets")
    dz = probs * (g - (probs * g).sum(axis=1, keepdims=True))
    return value, dz


# -- model -------------------------------------------------------------------

@dataclass
class ToyModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, n_features: int, n_bins: int, hidden: int = 32, seed: int = 0) -> "ToyModel":
        """Random hidden layer; the head starts at zero so every bin begins equally likely.

        A random head lets some bins win early and starve their neighbours
        of gradient, which losses linear in ``s`` never recover from.
        """
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((n_features, hidden)) / np.sqrt(n_features), np.zeros(hidden),
                   np.zeros((hidden, n_bins)), np.zeros(n_bins))

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]

    def hidden(self, X) -> np.ndarray:
        return np.tanh(X @ self.W1 + self.b1)

    def forward(self, X) -> tuple[np.ndarray, np.ndarray]:
        h = self.hidden(X)
        z = h @ self.W2 + self.b2
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return h, e / e.sum(axis=1, keepdims=True)

    def predict_proba(self, X) -> np.ndarray:
        return self.forward(X)[1]

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def backward(self, X, h, dz) -> list[np.ndarray]:
        dpre = (dz @ self.W2.T) * (1.0 - h * h)
        return [X.T @ dpre, dpre.sum(axis=0), h.T @ dz, dz.sum(axis=0)]


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _SGD:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


# -- training ----------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    eval_maad: float
    expected_arc: float
    blend_weight: float = float("nan")
    loss_before_swap: float = float("nan")
    loss_after_swap: float = float("nan")


HISTORY_FIELDS = [f for f in EpochRecord.__dataclass_fields__]


@dataclass
class TrainResult:
    model: ToyModel
    history: list[EpochRecord] = field(default_factory=list)
    ground: Optional[np.ndarray] = None

    def __iter__(self):
        yield self.model
        yield self.history


def learned_distances(model: ToyModel, X, labels, n_bins: int) -> np.ndarray:
    """Centroid l1 distances of the l2-normalised hidden features per class."""
    h = model.hidden(X)
    h = h / np.maximum(np.linalg.norm(h, axis=1, keepdims=True), 1e-12)
    groups = {c: h[labels == c] for c in range(n_bins)}
    return centroid_distances(groups, n_bins)


def train_toy(data: SyntheticDataset, loss: LossConfig | str = "ce", epochs: int = 30,
              lr: float = 0.01, adaptive: bool = False, seed: int = 0,
              batch_size: int | None = 256, optimizer: str = "adam", hidden: int = 32,
              eval_data: SyntheticDataset | None = None, rounds: int = 10,
              rescale: bool = True) -> TrainResult:
    """Fit a :class:`ToyModel` on the noisy labels of ``data``.

    ``eval_maad`` is measured against the true bins of ``eval_data`` (or of
    ``data`` when no evaluation set is given). ``batch_size=None`` runs full
    batch gradient descent. With ``adaptive`` the ground matrix is rebuilt
    before every epoch from class centroids of the hidden features, blended
    with arc length using weights decaying from 10 to 0 over ``rounds``
    epochs. Plain SGD on the full batch decreases the training loss
    monotonically for ``lr`` up to about 0.5 with cross-entropy; scale it
    down by the largest ground distance for Wasserstein losses.
    """
    if isinstance(loss, str):
        loss = parse_loss(loss)
    if epochs < 1 or not lr > 0:
        raise BadParameter("epochs must be >= 1 and lr > 0")
    if len(data) == 0:
        raise BadParameter("empty dataset")
    if adaptive and (loss.kind != "wasserstein" or loss.smoothing is not None):
        raise BadParameter("adaptive ground metrics need a Wasserstein loss with one-hot targets")
    n = data.n_bins
    X, y = data.features, data.noisy_bins
    ev = eval_data if eval_data is not None else data
    rng = np.random.default_rng(seed)
    model = ToyModel.init(X.shape[1], n, hidden, seed=int(rng.integers(2**31)))
    params = model.params()
    if optimizer not in ("adam", "sgd"):
        raise BadParameter(f"unknown optimizer {optimizer!r}")
    opt = _Adam(params, lr) if optimizer == "adam" else _SGD(params, lr)
    arc = arc_length_matrix(n)
    schedule = blend_schedule(rounds)
    D = None
    history = []
    for epoch in range(epochs):
        rec = {}
        if adaptive:
            weight = float(schedule[min(epoch, rounds - 1)])
            D_new = _adaptive_ground(model, X, y, n, loss.metric, weight, rescale, D)
            if D is not None:
                _, p = model.forward(X)
                rec["loss_before_swap"] = float(loss_and_grad(p, y, loss, D)[0].mean())
                rec["loss_after_swap"] = float(loss_and_grad(p, y, loss, D_new)[0].mean())
            D = D_new
            rec["blend_weight"] = weight

        order = rng.permutation(len(y)) if batch_size else np.arange(len(y))
        step = batch_size or len(y)
        total = 0.0
        for start in range(0, len(y), step):
            idx = order[start:start + step]
            h, p = model.forward(X[idx])
            values, dz = loss_and_grad(p, y[idx], loss, D)
            total += float(values.sum())
            grads = model.backward(X[idx], h, dz / len(idx))
            opt.step(params, grads)
        train_loss = total / len(y)
        if not np.isfinite(train_loss) or not all(np.all(np.isfinite(q)) for q in params):
            raise DivergedLoss(f"loss became non-finite at epoch {epoch}")

        p_train = model.predict_proba(X)
        expected_arc = float((p_train * arc[:, y].T).sum(axis=1).mean())
        eval_maad = metrics.maad(model.predict(ev.features), ev.true_bins, n)
        history.append(EpochRecord(epoch, train_loss, eval_maad, expected_arc, **rec))
        log.debug("epoch %d loss %.5g maad %.3f", epoch, train_loss, eval_maad)
    return TrainResult(model, history, D)


def _adaptive_ground(model, X, y, n, metric, weight, rescale, previous):
    try:
        d_bar = learned_distances(model, X, y, n)
    except MissingClass:
        log.warning("a class has no training samples; keeping the arc-length ground matrix")
        return ground_matrix(metric, n) if previous is None else previous
    if rescale:
        d_bar = rescale_distances(d_bar, n)
    return blend_adaptive(d_bar, metric, weight)


def history_to_csv(history: list[EpochRecord], extra: dict | None = None, header: bool = True) -> str:
    """CSV with one row per epoch; ``extra`` adds constant leading columns."""
    extra = extra or {}
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=[*extra, *HISTORY_FIELDS], lineterminator="\n")
    if header:
        w.writeheader()
    for rec in history:
        row = {k: (repr(v) if isinstance(v, float) else v) for k, v in asdict(rec).items()}
        w.writerow({**extra, **row})
    return buf.getvalue()


def _record(row: dict) -> EpochRecord:
    return EpochRecord(int(row["epoch"]), *(float(row[k]) for k in HISTORY_FIELDS[1:]))


def history_from_csv(text: str) -> list[EpochRecord]:
    """Inverse of :func:`history_to_csv`; extra columns are ignored."""
    return [_record(row) for row in csv.DictReader(io.StringIO(text))]


def history_table_from_csv(text: str, keys=("loss", "seed")) -> dict[tuple, list[EpochRecord]]:
    """Group a multi-run history CSV by its leading key columns."""
    out: dict[tuple, list[EpochRecord]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        out.setdefault(tuple(row[k] for k in keys), []).append(_record(row))
    return out

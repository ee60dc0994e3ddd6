import numpy as np
import pytest
from scipy import stats

from circwass.errors import BadParameter, DivergedLoss
from circwass.ground_metric import GroundMetricSpec, MetricKind
from circwass.labels import Family, binomial_pmf
from circwass.toy import (EpochRecord, LossConfig, NoiseSpec, ToyModel, gen_synthetic, history_from_csv,
                          history_table_from_csv, history_to_csv, learned_distances, loss_and_grad, parse_loss,
                          train_toy)


# -- data ----------------------------------------------------------------------

def test_zero_noise_keeps_labels():
    d = gen_synthetic(8, 400, NoiseSpec(), seed=1)
    np.testing.assert_array_equal(d.noisy_bins, d.true_bins)
    assert len(d.samples) == 400 and d.features.shape == (400, 6)


def test_pure_outliers_are_uniform():
    d = gen_synthetic(12, 10_000, NoiseSpec(outlier_rate=1.0), seed=2)
    counts = np.bincount(d.noisy_bins, minlength=12)
    assert stats.chisquare(counts).pvalue > 0.01


def test_inlier_offsets_follow_binomial():
    n, K = 16, 4
    d = gen_synthetic(n, 20_000, NoiseSpec(K=K, p=0.5), seed=3)
    off = (d.noisy_bins - d.true_bins + K // 2) % n
    counts = np.bincount(off, minlength=n)
    expected = np.zeros(n)
    expected[:K + 1] = binomial_pmf(K, 0.5)
    m = len(d)
    sigma = np.sqrt(m * expected * (1 - expected))
    assert np.all(np.abs(counts - m * expected) <= 3 * sigma + 1e-9)


def test_noise_fraction_within_binomial_bound():
    n, m, rate = 36, 10_000, 0.2
    d = gen_synthetic(n, m, NoiseSpec(outlier_rate=rate), seed=4)
    # a uniform relabel keeps the true bin with probability 1/N
    q = rate * (1 - 1 / n)
    changed = np.sum(d.noisy_bins != d.true_bins)
    assert abs(changed - m * q) <= 3 * np.sqrt(m * q * (1 - q))


def test_features_are_deterministic():
    a = gen_synthetic(8, 100, NoiseSpec(K=2, outlier_rate=0.1), seed=5)
    b = gen_synthetic(8, 100, NoiseSpec(K=2, outlier_rate=0.1), seed=5)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.noisy_bins, b.noisy_bins)
    c = gen_synthetic(8, 100, seed=6)
    assert not np.array_equal(a.features, c.features)


@pytest.mark.parametrize("call", [
    lambda: gen_synthetic(3, 100), lambda: gen_synthetic(8, 7), lambda: NoiseSpec(K=-1),
    lambda: NoiseSpec(p=1.0), lambda: NoiseSpec(outlier_rate=1.5),
])
def test_data_parameter_errors(call):
    with pytest.raises(BadParameter):
        call()


# -- model and losses --------------------------------------------------------------

def test_forward_gives_histograms():
    rng = np.random.default_rng(0)
    m = ToyModel.init(6, 8, seed=0)
    for p in m.params():
        p += 0.3 * rng.standard_normal(p.shape)
    p = m.predict_proba(rng.standard_normal((50, 6)))
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def _numeric_logit_grad(loss, z, labels, h=1e-6):
    def f(zz):
        e = np.exp(zz - zz.max(axis=1, keepdims=True))
        return loss_and_grad(e / e.sum(axis=1, keepdims=True), labels, loss)[0].sum()
    g = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        g[idx] = (f(zp) - f(zm)) / (2 * h)
    return g


@pytest.mark.parametrize("name", ["ce", "ce-binomial", "wass-linear", "wass-power2", "wass-huber2",
                                  "wass-linear-gaussian", "wass-power2-binomial", "wass-step-poisson",
                                  "wass-chord"])
def test_logit_gradient_matches_finite_differences(name):
    rng = np.random.default_rng(1)
    n = 8
    z = rng.standard_normal((4, n))
    labels = rng.integers(0, n, 4)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    loss = parse_loss(name, xi=0.3, eta=0.1, K=4) if "-" in name[5:] or name.startswith("ce-") else parse_loss(name)
    _, dz = loss_and_grad(p, labels, loss)
    np.testing.assert_allclose(dz, _numeric_logit_grad(loss, z, labels), atol=1e-4)


def test_parse_loss_grammar():
    ce = parse_loss("ce")
    assert ce.kind == "ce" and ce.smoothing is None
    w = parse_loss("wass-power2-binomial")
    assert w.metric == GroundMetricSpec.power(2) and w.smoothing.family is Family.BINOMIAL
    assert w.smoothing.K == 10 and w.smoothing.xi == 0.1 and w.smoothing.eta == 0.05
    assert parse_loss("wass-huber2").metric == GroundMetricSpec.huber(2)
    assert parse_loss("wass-linear-onehot").smoothing is None
    assert parse_loss("wass-chord").metric.kind is MetricKind.CHORD
    assert parse_loss("ce-poisson", K=6, lam=2.0).smoothing.lam == 2.0
    assert parse_loss("wass-power2-binomial").name == "wass-" + GroundMetricSpec.power(2).label + "-binomial"


@pytest.mark.parametrize("name", ["mse", "wass", "wass-cubic", "wass-linear-binomial-extra", "ce-laplace"])
def test_parse_loss_rejects(name):
    with pytest.raises((BadParameter, ValueError)):
        parse_loss(name)


def test_dense_targets_need_closed_form():
    p = np.full((1, 8), 1 / 8)
    with pytest.raises(BadParameter):
        loss_and_grad(p, np.array([0]), LossConfig("wasserstein", GroundMetricSpec.chord(8),
                                                   parse_loss("ce-binomial").smoothing))


# -- training ----------------------------------------------------------------------

def test_ce_fits_clean_data():
    d = gen_synthetic(8, 800, NoiseSpec(), seed=0)
    model, history = train_toy(d, "ce", epochs=200, lr=0.01, seed=0)
    assert np.mean(model.predict(d.features) == d.true_bins) >= 0.99
    assert len(history) == 200


def test_same_seed_same_history():
    d = gen_synthetic(8, 300, NoiseSpec(K=2, outlier_rate=0.1), seed=1)
    a = train_toy(d, "wass-power2-binomial", epochs=5, seed=3).history
    b = train_toy(d, "wass-power2-binomial", epochs=5, seed=3).history
    assert history_to_csv(a) == history_to_csv(b)


@pytest.mark.parametrize("name, lr", [("wass-linear", 0.05), ("wass-power2", 0.005)])
def test_expected_arc_decreases_on_clean_data(name, lr):
    d = gen_synthetic(36, 2000, NoiseSpec(), seed=3)
    h = train_toy(d, name, epochs=50, lr=lr, batch_size=None, optimizer="sgd", seed=0).history
    arc = np.array([r.expected_arc for r in h])
    assert np.all(np.diff(arc) <= 0)
    assert arc[-1] < arc[0]


@pytest.mark.parametrize("name, lr", [("ce", 0.5), ("wass-linear", 0.05), ("wass-power2-binomial", 0.005)])
def test_train_loss_non_increasing_below_stability_threshold(name, lr):
    d = gen_synthetic(36, 2000, NoiseSpec(), seed=3)
    h = train_toy(d, name, epochs=50, lr=lr, batch_size=None, optimizer="sgd", seed=0).history
    assert np.all(np.diff([r.train_loss for r in h]) <= 1e-12)


def _swap_ratios(n, name):
    d = gen_synthetic(n, 3000, NoiseSpec(2 if n == 8 else 10, 0.5, 0.05), seed=0)
    h = train_toy(d, name, epochs=12, lr=0.01, adaptive=True, seed=0).history
    assert [r.blend_weight for r in h[:10]] == pytest.approx(np.linspace(10, 0, 10).tolist())
    return np.array([r.loss_after_swap / r.loss_before_swap for r in h[1:]])


def test_adaptive_swap_guard_8_bins():
    ratios = _swap_ratios(8, "wass-linear")
    assert np.all(ratios <= 1.1), ratios.round(3)


@pytest.mark.xfail(reason="known limitation: the last metric swaps at 36 bins raise the loss by more than 10%",
                   strict=False)
def test_adaptive_swap_guard_36_bins():
    ratios = _swap_ratios(36, "wass-power2")
    assert np.all(ratios <= 1.1), ratios.round(3)


def test_adaptive_requires_one_hot_wasserstein():
    d = gen_synthetic(8, 100, seed=0)
    with pytest.raises(BadParameter):
        train_toy(d, "ce", adaptive=True)
    with pytest.raises(BadParameter):
        train_toy(d, "wass-linear-binomial", adaptive=True)


def test_adaptive_keeps_arc_ground_when_a_class_is_missing(caplog):
    d = gen_synthetic(8, 80, seed=0)
    object.__setattr__(d, "noisy_bins", np.where(d.noisy_bins == 3, 4, d.noisy_bins))
    res = train_toy(d, "wass-linear", epochs=2, adaptive=True, seed=0)
    assert "no training samples" in caplog.text
    assert np.isfinite(res.history[-1].train_loss)


def test_learned_distances_shape():
    d = gen_synthetic(8, 200, seed=0)
    model = train_toy(d, "ce", epochs=3, seed=0).model
    D = learned_distances(model, d.features, d.true_bins, 8)
    assert D.shape == (8, 8) and np.all(np.diag(D) == 0) and np.array_equal(D, D.T)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    d = gen_synthetic(8, 200, seed=0)
    with pytest.raises(DivergedLoss):
        train_toy(d, "wass-power3", epochs=3, lr=np.inf, batch_size=None, optimizer="sgd", seed=0)
    bad = d.features.copy()
    bad[5, 0] = np.nan
    object.__setattr__(d, "features", bad)
    with pytest.raises(DivergedLoss):
        train_toy(d, "ce", epochs=1, seed=0)


@pytest.mark.parametrize("kwargs", [dict(epochs=0), dict(lr=0.0), dict(optimizer="rmsprop")])
def test_training_parameter_errors(kwargs):
    with pytest.raises(BadParameter):
        train_toy(gen_synthetic(8, 100, seed=0), "ce", **kwargs)


def test_history_csv_roundtrip():
    d = gen_synthetic(8, 200, seed=0)
    h = train_toy(d, "wass-linear", epochs=3, adaptive=True, seed=0).history
    # the first epoch has nan swap losses, so compare through the text form
    assert history_to_csv(history_from_csv(history_to_csv(h))) == history_to_csv(h)
    text = history_to_csv(h, {"loss": "a", "seed": 0}) + history_to_csv(h[:1], {"loss": "b", "seed": 1}, header=False)
    table = history_table_from_csv(text)
    assert set(table) == {("a", "0"), ("b", "1")} and len(table["a", "0"]) == 3
    assert text.splitlines()[0].startswith("loss,seed,epoch,train_loss,eval_maad")
    assert isinstance(table["b", "1"][0], EpochRecord)

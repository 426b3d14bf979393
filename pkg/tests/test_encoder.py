import numpy as np
import pytest

from helpers import central_difference, max_relative_error, unit
from tsclearn.assignment import Assignment
from tsclearn.encoder import (
    SGD,
    Mlp,
    balanced_draw,
    classify,
    cosine_lr,
    train_classifier,
)
from tsclearn.errors import DegenerateError, ValidationError
from tsclearn.losses import FeatureBatch, LossConfig, kcl_loss, tsc_loss
from tsclearn.targets import TargetSet


def test_zero_network_output_is_degenerate():
    net = Mlp([3, 4, 2])
    for p in net.params():
        p[...] = 0.0
    with pytest.raises(DegenerateError):
        net.forward(np.ones((1, 3)))


def test_identity_layer_returns_unit_input():
    net = Mlp([3, 3])
    net.weights[0][...] = np.eye(3)
    x = np.array([[0.0, 0.6, 0.8]])
    np.testing.assert_allclose(net.forward(x), x, atol=1e-15)


def test_outputs_are_unit_norm():
    net = Mlp([5, 64, 64, 4], seed=1)
    x = np.random.default_rng(0).standard_normal((100, 5))
    np.testing.assert_allclose(np.linalg.norm(net.forward(x), axis=1), 1.0, atol=1e-12)


def test_forward_rejects_wrong_width():
    with pytest.raises(ValidationError):
        Mlp([4, 3]).forward(np.ones((2, 5)))


def test_zero_upstream_gradient():
    net = Mlp([4, 6, 3], seed=2)
    _, acts = net.forward(np.random.default_rng(1).standard_normal((5, 4)), return_cache=True)
    for g in net.backward(acts, np.zeros((5, 3))):
        assert not np.any(g)


def test_single_layer_matches_closed_form():
    # loss = 0.5 * |v - a|^2 with v = normalize(x W + b)
    rng = np.random.default_rng(3)
    net = Mlp([4, 3], seed=3)
    net.biases[0][...] = rng.standard_normal(3)
    x = rng.standard_normal((1, 4))
    a = rng.standard_normal(3)
    v, acts = net.forward(x, return_cache=True)
    u = x @ net.weights[0] + net.biases[0]
    r = np.linalg.norm(u)
    gu = (np.eye(3) - np.outer(v[0], v[0])) @ (v[0] - a) / r
    gw, gb = net.backward(acts, v - a)
    np.testing.assert_allclose(gw, np.outer(x[0], gu), atol=1e-13)
    np.testing.assert_allclose(gb, gu, atol=1e-13)


def _end_to_end(seed, use_targets):
    """Relative error of every parameter gradient of loss(forward(x)) vs central differences."""
    rng = np.random.default_rng(seed)
    d_in, d = int(rng.integers(2, 5)), int(rng.integers(2, 4))
    n, C = int(rng.integers(2, 7)), int(rng.integers(2, 4))
    net = Mlp([d_in, 5, 4, d], seed=seed)
    for b in net.biases:
        b += 0.1 * rng.standard_normal(b.shape)
    x1, x2 = rng.standard_normal((n, d_in)), rng.standard_normal((n, d_in))
    y = rng.integers(C, size=n)
    cfg = LossConfig(k=int(rng.integers(1, 4)), lam=float(rng.uniform(0, 1)), tau=float(rng.uniform(0.1, 1)))
    ts = TargetSet(unit(rng, C, d), cfg.tau, 0.0)
    a = Assignment(tuple(int(s) for s in rng.permutation(C)), 0.0)

    def objective():
        batch = FeatureBatch(net.forward(x1), net.forward(x2), y)
        return tsc_loss(batch, ts, a, cfg) if use_targets else kcl_loss(batch, cfg)

    v1, acts1 = net.forward(x1, return_cache=True)
    v2, acts2 = net.forward(x2, return_cache=True)
    # skip draws that sit within reach of a ReLU kink, where the derivative is undefined
    if min(np.abs(p).min() for p in _pre_activations(net, x1) + _pre_activations(net, x2)) < 1e-3:
        return None
    res = objective()
    grads = [g1 + g2 for g1, g2 in zip(net.backward(acts1, res.grad_features), net.backward(acts2, res.grad_augmented))]
    analytic = np.concatenate([g.ravel() for g in grads])
    numeric = np.concatenate([central_difference(lambda: objective().loss, p).ravel() for p in net.params()])
    return max_relative_error(analytic, numeric)


def _pre_activations(net, x):
    out, h = [], x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = h @ w + b
        out.append(h)
        h = np.maximum(h, 0)
    return out


@pytest.mark.parametrize("use_targets", [False, True], ids=["kcl", "tsc"])
def test_end_to_end_gradient(use_targets):
    errors, seed = [], 0
    while len(errors) < 50:
        err = _end_to_end(seed, use_targets)
        seed += 1
        if err is not None:
            errors.append(err)
    assert max(errors) < 1e-4


def test_sgd_determinism():
    def run():
        net = Mlp([3, 8, 2], seed=5)
        opt = SGD(net.params(), 0.9, 1e-3)
        rng = np.random.default_rng(0)
        for step in range(20):
            x = rng.standard_normal((6, 3))
            v, acts = net.forward(x, return_cache=True)
            opt.step(net.backward(acts, v - 1.0), cosine_lr(0.1, step, 20))
        return net.params()

    for a, b in zip(run(), run()):
        assert np.array_equal(a, b)


def test_sgd_weight_decay_shrinks_without_gradient():
    p = np.ones(3)
    SGD([p], momentum=0.0, weight_decay=0.5).step([np.zeros(3)], lr=0.1)
    np.testing.assert_allclose(p, 0.95)


def test_cosine_schedule_endpoints():
    assert cosine_lr(0.2, 0, 100) == pytest.approx(0.2)
    assert cosine_lr(0.2, 50, 100) == pytest.approx(0.1)
    assert cosine_lr(0.2, 100, 100) == pytest.approx(0.0, abs=1e-15)


def test_checkpoint_round_trip(tmp_path):
    net = Mlp([4, 7, 3], seed=11)
    net.biases[0] += 0.25
    net.save(tmp_path / "ckpt.txt")
    back = Mlp.load(tmp_path / "ckpt.txt")
    assert back.widths == net.widths
    for a, b in zip(back.params(), net.params()):
        assert np.array_equal(a, b)


def test_classifier_separates_two_classes():
    rng = np.random.default_rng(6)
    y = np.repeat([0, 1], 40)
    x = unit(rng, 80, 3) * 0.2
    x[:, 0] += np.where(y == 0, -1.0, 1.0)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    clf = train_classifier(x, y, "balanced", steps=300)
    assert np.mean(classify(clf, x) == y) == 1.0


def test_balanced_draw_frequencies_on_skewed_labels():
    y = np.repeat([0, 1, 2], [1000, 100, 10])
    idx = balanced_draw(y, 10_000, np.random.default_rng(7))
    freq = np.bincount(y[idx], minlength=3) / 10_000
    np.testing.assert_allclose(freq, 1 / 3, atol=0.02)


def test_balanced_draw_rejects_empty_class():
    with pytest.raises(ValidationError):
        balanced_draw(np.array([0, 0, 2]), 10, np.random.default_rng(0), num_classes=3)


def test_classifier_beats_chance_on_random_features():
    rng = np.random.default_rng(8)
    x, y = unit(rng, 90, 4), rng.integers(3, size=90)
    clf = train_classifier(x, y, "instance", num_classes=3, steps=300)
    assert np.mean(clf.predict(x) == y) >= 1 / 3


def test_classifier_rejects_unknown_sampling():
    with pytest.raises(ValidationError):
        train_classifier(np.eye(2), [0, 1], "weighted")

import numpy as np
import pytest

from oracles import random_unit
from qensemble.circuits import CircuitSpec, build_core_variant, evaluate
from qensemble.optim import AdamState, adam_step, loss, loss_and_grad, parameter_shift_grad


def test_loss_exact_fit():
    labels = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert loss(labels, labels) == 0.0


def test_loss_single():
    assert loss([[0.0]], [[1.0]]) == 1.0


def test_loss_three_bits():
    # (1-0.5)^2 + (-1+0.5)^2 + (1-1)^2
    assert loss([[0.5, -0.5, 1.0]], [[1, -1, 1]]) == pytest.approx(0.5, abs=1e-15)


def test_loss_shape_mismatch():
    with pytest.raises(ValueError):
        loss(np.zeros((2, 3)), np.zeros((2, 2)))


def _fd_grad(spec, params, feats, labels, readout, h=1e-5):
    def f(p):
        return loss(evaluate(spec, p, feats, readout=readout), labels)
    g = np.zeros_like(params)
    for k in range(params.size):
        e = np.zeros_like(params)
        e[k] = h
        g[k] = (f(params + e) - f(params - e)) / (2 * h)
    return g


def test_shift_rule_matches_finite_difference(rng):
    spec = build_core_variant("V3", 2)
    params = rng.uniform(0, 1, spec.num_params)
    feats = np.array([random_unit(rng, 32) for _ in range(4)])
    labels = np.where(rng.random((4, 3)) < 0.5, -1.0, 1.0)
    ps = parameter_shift_grad(spec, params, feats, labels, (0, 1, 2))
    fd = _fd_grad(spec, params, feats, labels, (0, 1, 2))
    big = np.abs(fd) > 1e-6
    assert np.max(np.abs(ps[big] - fd[big]) / np.abs(fd[big])) < 1e-5


def test_independent_parameter_has_zero_gradient(rng):
    # no CNOTs: qubit 4's rotation cannot reach readout qubit 0
    spec = CircuitSpec("T", 5, ((),), (0,))
    params = rng.uniform(0, 1, spec.num_params)
    feats = random_unit(rng, 32)[None]
    g = parameter_shift_grad(spec, params, feats, [[1.0]], (0,))
    assert np.all(np.abs(g[12:15]) < 1e-10)
    assert np.any(np.abs(g[:3]) > 1e-6)


def test_duplicate_batch_doubles_gradient(rng):
    spec = build_core_variant("V2", 2)
    params = rng.uniform(0, 1, spec.num_params)
    feats = random_unit(rng, 32)[None]
    labels = np.array([[1.0, -1.0]])
    single = parameter_shift_grad(spec, params, feats, labels, (0, 1))
    double = parameter_shift_grad(spec, params, np.vstack([feats, feats]), np.vstack([labels, labels]), (0, 1))
    np.testing.assert_array_equal(double, 2 * single)


def test_loss_and_grad_returns_predictions(rng):
    spec = build_core_variant("V1", 1)
    params = rng.uniform(0, 1, spec.num_params)
    feats = np.array([random_unit(rng, 32) for _ in range(3)])
    labels = -np.ones((3, 2))
    value, _, preds = loss_and_grad(spec, params, feats, labels, (0, 1))
    np.testing.assert_allclose(preds, evaluate(spec, params, feats)[:, :2], atol=1e-14)
    assert value == pytest.approx(loss(preds, labels))


def test_adam_zero_gradient_is_fixed_point():
    state = AdamState.init(4)
    p = np.array([0.1, 0.2, 0.3, 0.4])
    _, q = adam_step(state, p, np.zeros(4))
    np.testing.assert_array_equal(p, q)


def test_adam_uniform_first_step():
    state = AdamState.init(3, lr=0.05)
    p = np.zeros(3)
    _, q = adam_step(state, p, np.full(3, 2.5))
    assert np.all(q < 0)
    assert np.ptp(q) == 0.0
    # first bias-corrected step has magnitude ~lr
    assert q[0] == pytest.approx(-0.05, rel=1e-6)


def test_adam_two_steps_hand_trace():
    # f(x) = x^2 from x0 = 1 with lr = 0.1, written out step by step
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    x = 1.0
    m = v = 0.0
    xs = []
    for t in (1, 2):
        g = 2 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        x = x - lr * mh / (vh ** 0.5 + eps)
        xs.append(x)
    state = AdamState.init(1, lr=lr)
    p = np.array([1.0])
    got = []
    for _ in range(2):
        state, p = adam_step(state, p, 2 * p)
        got.append(p[0])
    np.testing.assert_allclose(got, xs, rtol=0, atol=1e-12)
    assert state.step == 2 and np.all(state.v >= 0)


def test_adam_tiny_learning_rate():
    state = AdamState.init(5, lr=1e-12)
    p = np.ones(5)
    rng = np.random.default_rng(0)
    q = p
    for _ in range(10):
        state, q = adam_step(state, q, rng.normal(size=5))
    assert np.max(np.abs(q - p)) < 1e-9


def test_adam_length_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState.init(3), np.zeros(3), np.zeros(4))


def test_adam_does_not_mutate():
    state = AdamState.init(2)
    p = np.array([1.0, 2.0])
    adam_step(state, p, np.array([1.0, 1.0]))
    assert state.step == 0 and np.all(state.m == 0) and p[0] == 1.0

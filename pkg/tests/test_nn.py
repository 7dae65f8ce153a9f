import numpy as np
import pytest

from co3.nn import Layer, MlpStack, StaleCacheError, grad_check, l2_normalize

from oracles import mlp_straight_line


def test_zero_layer_relu_gives_zero():
    s = MlpStack([Layer(np.zeros((3, 4)), np.zeros(3), "relu")])
    assert not s.forward(np.ones((2, 4)))[0].any()


def test_identity_layer():
    s = MlpStack([Layer(np.eye(4), np.zeros(4))])
    x = np.arange(8.0).reshape(2, 4)
    np.testing.assert_array_equal(s.forward(x)[0], x)


def test_matches_straight_line(rng):
    s = MlpStack.create([5, 7, 3], rng)
    x = rng.normal(size=(6, 5))
    np.testing.assert_allclose(s.forward(x)[0], mlp_straight_line(s.layers, x), atol=1e-12, rtol=0)


def test_dim_mismatch():
    s = MlpStack.create([5, 3], np.random.default_rng(0))
    with pytest.raises(ValueError):
        s.forward(np.ones((2, 4)))
    with pytest.raises(ValueError):
        MlpStack([Layer(np.ones((3, 4)), np.zeros(3)), Layer(np.ones((2, 5)), np.zeros(2))])


def test_zero_upstream_gives_zero_grads(rng):
    s = MlpStack.create([4, 6, 2], rng)
    y, cache = s.forward(rng.normal(size=(3, 4)))
    s.backward(cache, np.zeros_like(y))
    assert all(not g.any() for g in s.gradients())


def test_linear_sum_hand_derivative(rng):
    w = rng.normal(size=(2, 3))
    s = MlpStack([Layer(w, np.zeros(2))])
    x = rng.normal(size=(4, 3))
    y, cache = s.forward(x)
    s.backward(cache, np.ones_like(y))
    np.testing.assert_allclose(s.layers[0].grad_weight, np.tile(x.sum(axis=0), (2, 1)), atol=1e-14)
    np.testing.assert_allclose(s.layers[0].grad_bias, [4.0, 4.0])


def test_stale_cache(rng):
    s = MlpStack.create([3, 2], rng)
    y, cache = s.forward(np.ones((1, 3)))
    s.mark_updated()
    with pytest.raises(StaleCacheError):
        s.backward(cache, y)


def _quadratic_loss(stack, x, target):
    def fn():
        stack.zero_grad()
        y, cache = stack.forward(x)
        r = y - target
        stack.backward(cache, r)
        return 0.5 * float(np.sum(r * r)), [g.copy() for g in stack.gradients()]

    return fn


def test_backward_matches_finite_differences(rng):
    s = MlpStack.create([4, 8, 8, 3], rng)
    x = rng.normal(size=(5, 4))
    err = grad_check(_quadratic_loss(s, x, rng.normal(size=(5, 3))), s.parameters(), 1e-6)
    assert err <= 1e-5


def test_input_gradient(rng):
    s = MlpStack.create([4, 6, 3], rng)
    x = rng.normal(size=(2, 4))
    dy = rng.normal(size=(2, 3))
    _, cache = s.forward(x)
    dx = s.backward(cache, dy)
    h = 1e-6
    for i in range(2):
        for j in range(4):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            num = (np.sum(s.forward(xp)[0] * dy) - np.sum(s.forward(xm)[0] * dy)) / (2 * h)
            assert abs(num - dx[i, j]) < 1e-7


def test_grad_check_detects_wrong_gradient(rng):
    s = MlpStack.create([3, 2], rng)
    x, t = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
    good = _quadratic_loss(s, x, t)

    def bad():
        loss, grads = good()
        grads[0] = grads[0] * 1.5 + 0.1
        return loss, grads

    assert grad_check(bad, s.parameters(), 1e-6) > 1e-2


def test_grad_check_restores_parameters(rng):
    s = MlpStack.create([3, 4, 2], rng)
    before = s.copy()
    grad_check(_quadratic_loss(s, rng.normal(size=(2, 3)), np.zeros((2, 2))), s.parameters(), 1e-6, coords=3)
    assert s.equals(before)


def test_l2_normalize_and_backward(rng):
    x = rng.normal(size=(5, 4))
    y, back = l2_normalize(x)
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-15)
    dy = rng.normal(size=y.shape)
    dx = back(dy)
    h = 1e-6
    num = np.zeros_like(x)
    for i in range(5):
        for j in range(4):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            num[i, j] = (np.sum(l2_normalize(xp)[0] * dy) - np.sum(l2_normalize(xm)[0] * dy)) / (2 * h)
    np.testing.assert_allclose(dx, num, atol=1e-8)


def test_l2_normalize_zero_row():
    with pytest.raises(ValueError):
        l2_normalize(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_bad_activation():
    with pytest.raises(ValueError):
        Layer(np.ones((1, 1)), np.zeros(1), "tanh")

import numpy as np
import pytest

from mutrl.agents.nn import (ACTIVATIONS, LOSSES, MLP, SGD, Adam, apply_gradient, flat_gradient, loss_and_grad,
                             network_update)
from mutrl.errors import TrainingDivergedError


def numeric_grad(net, x, target, loss, actions=None, eps=1e-6):
    def value():
        out = net.predict(x)
        pred = out[np.arange(len(x)), actions] if actions is not None else out[:, 0]
        return loss_and_grad(pred, target, loss)[0]

    grad = np.zeros_like(net.flat)
    for i in range(net.flat.size):
        old = net.flat[i]
        net.flat[i] = old + eps
        up = value()
        net.flat[i] = old - eps
        down = value()
        net.flat[i] = old
        grad[i] = (up - down) / (2 * eps)
    return grad


def analytic_grad(net, x, target, loss, actions=None):
    out, cache = net.forward(x)
    if actions is None:
        pred = out[:, 0]
    else:
        pred = out[np.arange(len(x)), actions]
    _, dpred = loss_and_grad(pred, target, loss)
    dout = np.zeros_like(out)
    if actions is None:
        dout[:, 0] = dpred
    else:
        dout[np.arange(len(x)), actions] = dpred
    return flat_gradient(net, cache, dout)


class TestGradients:
    @pytest.mark.parametrize("activation", ACTIVATIONS)
    @pytest.mark.parametrize("loss", LOSSES)
    def test_finite_differences(self, activation, loss):
        rng = np.random.default_rng(0)
        net = MLP((3, 8, 2), activation, rng=rng)
        net.flat += rng.normal(0, 0.3, net.flat.size)  # move off the small output init
        x = rng.normal(size=(20, 3))
        actions = rng.integers(2, size=20)
        target = rng.normal(0, 2, size=20)
        a = analytic_grad(net, x, target, loss, actions)
        n = numeric_grad(net, x, target, loss, actions)
        rel = np.max(np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n)))
        assert rel < 1e-4

    def test_two_hidden_layers_single_output(self):
        rng = np.random.default_rng(1)
        net = MLP((4, 6, 5, 1), "Tanh", rng=rng)
        x = rng.normal(size=(10, 4))
        target = rng.normal(size=10)
        assert np.allclose(analytic_grad(net, x, target, "MSE"), numeric_grad(net, x, target, "MSE"), atol=1e-8)

    def test_huber_matches_mse_in_quadratic_zone(self):
        pred = np.array([0.1, -0.4, 0.9])
        target = np.zeros(3)
        lh, gh = loss_and_grad(pred, target, "Huber")
        lm, gm = loss_and_grad(pred, target, "MSE")
        assert lh == pytest.approx(lm) and np.allclose(gh, gm)

    def test_negated_td_is_negated_mse(self):
        pred, target = np.array([1.0, 3.0]), np.array([0.0, 0.0])
        lm, gm = loss_and_grad(pred, target, "MSE")
        ln, gn = loss_and_grad(pred, target, "NegatedTD")
        assert ln == -lm and np.array_equal(gn, -gm)


class TestOptimizers:
    def test_zero_gradient_sgd_fixed_point(self):
        rng = np.random.default_rng(2)
        net = MLP((3, 4, 1), "ReLU", rng=rng)
        x = rng.normal(size=(5, 3))
        target = net.predict(x)[:, 0]
        before = net.flat.copy()
        network_update(net, SGD(0.1), x, target, "MSE")
        assert np.array_equal(net.flat, before)

    def test_sgd_step(self):
        rng = np.random.default_rng(3)
        net = MLP((2, 3, 1), "Tanh", rng=rng)
        x = rng.normal(size=(4, 2))
        target = rng.normal(size=4)
        g = analytic_grad(net, x, target, "MSE")
        before = net.flat.copy()
        network_update(net, SGD(0.05), x, target, "MSE")
        assert np.allclose(net.flat, before - 0.05 * g)

    def test_adam_recursion(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        opt = Adam(lr)
        w = np.array([1.0, -2.0])
        m = v = np.zeros(2)
        expected = w.copy()
        for t, g in enumerate([np.array([0.5, -1.0]), np.array([0.1, 0.3]), np.array([-0.2, 0.0])], start=1):
            opt.step(w, g)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            expected = expected - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
            assert np.allclose(w, expected, rtol=1e-12)

    def test_clipping_limits_step(self):
        net = MLP((1, 1), "Tanh", params=[np.array([[0.0]]), np.array([0.0])])
        x = np.array([[1.0]])
        dout = np.array([[100.0]])
        grad = apply_gradient(net, SGD(1.0), x, dout, max_grad_norm=1.0)
        assert np.linalg.norm(grad) > 1.0
        assert np.linalg.norm(net.flat) == pytest.approx(1.0)

    def test_nan_aborts(self):
        net = MLP((1, 2, 1), "Tanh", rng=np.random.default_rng(0))
        with pytest.raises(TrainingDivergedError):
            network_update(net, SGD(0.1), np.array([[np.nan]]), np.array([0.0]), "MSE")

    def test_empty_batch(self):
        net = MLP((1, 2, 1), "Tanh", rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            network_update(net, SGD(0.1), np.zeros((0, 1)), np.zeros(0), "MSE")


class TestMLP:
    def test_params_are_views(self):
        net = MLP((2, 3, 2), "ReLU", rng=np.random.default_rng(0))
        net.flat[:] = 0.0
        assert all(not p.any() for p in net.params)

    def test_copy_is_independent(self):
        net = MLP((2, 3, 2), "ReLU", rng=np.random.default_rng(0))
        twin = net.copy()
        net.flat += 1.0
        assert not np.array_equal(net.flat, twin.flat)
        twin.load(net)
        assert np.array_equal(net.flat, twin.flat)

    def test_seeded_init(self):
        a = MLP((4, 8, 2), "Tanh", rng=np.random.default_rng(5))
        b = MLP((4, 8, 2), "Tanh", rng=np.random.default_rng(5))
        assert np.array_equal(a.flat, b.flat)

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            MLP((1, 1), "Softplus")

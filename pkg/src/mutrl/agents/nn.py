"""A small fully-connected network with hand-written backpropagation.

Activation, loss and optimizer are plain string identifiers so that the
policy- and agent-level mutations can swap them without touching the
training loops.
"""

from __future__ import annotations

import numpy as np

from mutrl.errors import TrainingDivergedError

ACTIVATIONS = ("Tanh", "ReLU", "Sigmoid")
LOSSES = ("Huber", "MSE", "NegatedTD")
OPTIMIZERS = ("Adam", "SGD")

HUBER_DELTA = 1.0


def _activate(name, z):
    if name == "Tanh":
        return np.tanh(z)
    if name == "ReLU":
        return np.maximum(z, 0.0)
    if name == "Sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name, z, a):
    # derivative expressed through pre-activation z and output a
    if name == "Tanh":
        return 1.0 - a * a
    if name == "ReLU":
        return (z > 0.0).astype(z.dtype)
    return a * (1.0 - a)


class MLP:
    """Dense network ``sizes[0] -> ... -> sizes[-1]`` with a linear output.

    Parameters are stored as a flat list ``[W0, b0, W1, b1, ...]`` with
    ``W`` of shape (fan_in, fan_out); inputs are row batches.
    """

    def __init__(self, sizes, activation="Tanh", rng=None, params=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        # every tensor is a view into one flat buffer so optimizers run as vector ops
        self.flat = np.zeros(sum(int(np.prod(sh)) for sh in shapes))
        self.params = []
        offset = 0
        for sh in shapes:
            n = int(np.prod(sh))
            self.params.append(self.flat[offset:offset + n].reshape(sh))
            offset += n
        if params is not None:
            for dst, src in zip(self.params, params):
                dst[...] = src
            return
        rng = np.random.default_rng() if rng is None else rng
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            # Glorot-uniform hidden layers, small output layer
            scale = np.sqrt(6.0 / (fan_in + fan_out))
            if i == n_layers - 1:
                scale *= 0.1
            self.params[2 * i][...] = rng.uniform(-scale, scale, size=(fan_in, fan_out))

    def copy(self) -> "MLP":
        return MLP(self.sizes, self.activation, params=self.params)

    def load(self, other: "MLP") -> None:
        self.flat[...] = other.flat

    def predict(self, x):
        h = x
        last = len(self.params) - 2
        for i in range(0, len(self.params), 2):
            h = h @ self.params[i] + self.params[i + 1]
            if i != last:
                h = _activate(self.activation, h)
        return h

    def forward(self, x):
        """Return ``(output, cache)`` for a batch ``x`` of shape (n, sizes[0])."""
        cache = [x]
        h = x
        last = len(self.params) - 2
        for i in range(0, len(self.params), 2):
            z = h @ self.params[i] + self.params[i + 1]
            if i != last:
                h = _activate(self.activation, z)
                cache.append((z, h))
            else:
                h = z
        return h, cache

    def backward(self, cache, dout):
        """Gradients of a scalar loss w.r.t. every parameter, given dL/d(output)."""
        grads = [None] * len(self.params)
        delta = dout
        for layer in range(len(self.params) // 2 - 1, -1, -1):
            inp = cache[0] if layer == 0 else cache[layer][1]
            grads[2 * layer] = inp.T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                z, a = cache[layer]
                delta = (delta @ self.params[2 * layer].T) * _activation_grad(self.activation, z, a)
        return grads


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, flat, grad):
        flat -= self.lr * grad


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, flat, grad):
        if self.m is None:
            self.m = np.zeros_like(flat)
            self.v = np.zeros_like(flat)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        flat -= self.lr * (self.m / c1) / (np.sqrt(self.v / c2) + self.eps)


def make_optimizer(name, lr):
    if name == "Adam":
        return Adam(lr)
    if name == "SGD":
        return SGD(lr)
    raise ValueError(f"unknown optimizer {name!r}")


def loss_and_grad(pred, target, loss):
    """Mean loss over the batch and its gradient w.r.t. ``pred``.

    ``MSE`` is ``0.5 * r**2`` so that it coincides with ``Huber`` inside
    the quadratic zone; ``NegatedTD`` is the negated squared TD error.
    """
    residual = pred - target
    n = residual.size
    if loss == "MSE":
        return 0.5 * float(np.mean(residual ** 2)), residual / n
    if loss == "NegatedTD":
        return -0.5 * float(np.mean(residual ** 2)), -residual / n
    if loss == "Huber":
        absr = np.abs(residual)
        quad = absr <= HUBER_DELTA
        value = np.where(quad, 0.5 * residual ** 2, HUBER_DELTA * (absr - 0.5 * HUBER_DELTA))
        return float(np.mean(value)), np.clip(residual, -HUBER_DELTA, HUBER_DELTA) / n
    raise ValueError(f"unknown loss {loss!r}")


def flat_gradient(net, cache, dout):
    return np.concatenate([g.ravel() for g in net.backward(cache, dout)])


def apply_gradient(net, optimizer, x, dout, cache=None, max_grad_norm=None):
    """Backpropagate ``dout`` through ``net`` and take one optimizer step.

    Returns the (unclipped) flat gradient.
    """
    if cache is None:
        _, cache = net.forward(x)
    grad = flat_gradient(net, cache, dout)
    sq = float(grad @ grad)
    if not np.isfinite(sq):
        raise TrainingDivergedError(
            f"non-finite gradient in {net.activation} network of sizes {net.sizes}"
        )
    step = grad
    if max_grad_norm is not None and sq > max_grad_norm ** 2:
        step = grad * (max_grad_norm / np.sqrt(sq))
    optimizer.step(net.flat, step)
    return grad


def network_update(net, optimizer, x, target, loss, actions=None, max_grad_norm=None):
    """One gradient step of ``net`` on a regression batch; returns the loss.

    With ``actions`` given, only output column ``actions[i]`` of row ``i``
    is regressed (the Q-learning case).  ``net`` is updated in place.
    """
    if len(x) == 0:
        raise ValueError("empty batch")
    out, cache = net.forward(x)
    if actions is None:
        pred = out[:, 0] if out.ndim == 2 and out.shape[1] == 1 and np.ndim(target) == 1 else out
    else:
        rows = np.arange(len(actions))
        pred = out[rows, actions]
    value, dpred = loss_and_grad(pred, target, loss)
    dout = np.zeros_like(out)
    if actions is None:
        dout[...] = dpred.reshape(out.shape)
    else:
        dout[rows, actions] = dpred
    apply_gradient(net, optimizer, x, dout, cache=cache, max_grad_norm=max_grad_norm)
    return value

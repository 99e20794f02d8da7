"""Small numpy MLPs with hand-written backprop."""
from __future__ import annotations

import numpy as np

ACTIVATIONS = ("tanh", "relu")


class MLP:
    """Fully connected net; ``params`` is a list ``[W0, b0, W1, b1, ...]``."""

    def __init__(self, sizes, activation="tanh", rng=None, out_scale=0.01):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self.params = []
        n = len(self.sizes) - 1
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            # scaled-normal init; the last layer starts small so initial outputs sit near the biases
            scale = out_scale if i == n - 1 else 1.0 / np.sqrt(a)
            self.params.append(rng.normal(0.0, scale, (a, b)))
            self.params.append(np.zeros(b))

    @property
    def shapes(self):
        return [p.shape for p in self.params]

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else np.maximum(z, 0.0)

    def _dact(self, z, h):
        return 1.0 - h * h if self.activation == "tanh" else (z > 0).astype(float)

    def forward(self, x):
        """Returns ``(output, cache)``; ``x`` is ``(batch, in)``."""
        h = np.atleast_2d(np.asarray(x, dtype=float))
        cache = []
        n = len(self.params) // 2
        for i in range(n):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            cache.append((h, z))
            h = z if i == n - 1 else self._act(z)
        return h, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out):
        """Gradients of ``sum(grad_out * output)`` w.r.t. every parameter."""
        g = np.asarray(grad_out, dtype=float)
        n = len(self.params) // 2
        grads = [None] * len(self.params)
        for i in reversed(range(n)):
            h, z = cache[i]
            if i != n - 1:
                g = g * self._dact(z, np.tanh(z) if self.activation == "tanh" else None)
            grads[2 * i] = h.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return grads

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params():
            raise ValueError(f"expected {self.n_params()} values, got {flat.size}")
        k = 0
        for i, p in enumerate(self.params):
            self.params[i] = flat[k:k + p.size].reshape(p.shape).copy()
            k += p.size

    def copy(self) -> "MLP":
        new = MLP.__new__(MLP)
        new.sizes, new.activation = self.sizes, self.activation
        new.params = [p.copy() for p in self.params]
        return new


class SGDMomentum:
    """Plain SGD with heavy-ball momentum over a list of arrays."""

    def __init__(self, lr=1e-3, momentum=0.9, max_grad_norm=None):
        self.lr = lr
        self.momentum = momentum
        self.max_grad_norm = max_grad_norm
        self.velocity = None

    def step(self, params, grads):
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / norm) for g in grads]
        for i, (p, g) in enumerate(zip(params, grads)):
            v = self.momentum * self.velocity[i] - self.lr * g
            self.velocity[i] = v
            params[i] = p + v

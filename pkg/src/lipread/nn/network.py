"""Sequential container, softmax loss, and optimizers."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def init_params(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init_params(rng)

    def initialize(self, seed: int) -> "Sequential":
        self.init_params(np.random.default_rng(seed))
        return self

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def param_items(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.param_items():
                out.append((f"{i}.{name}", arr))
        return tuple(out)

    def grad_items(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, arr in layer.grad_items():
                out.append((f"{i}.{name}", arr))
        return tuple(out)

    def params(self):
        return [arr for _, arr in self.param_items()]

    def grads(self):
        return [arr for _, arr in self.grad_items()]

    def num_params(self) -> int:
        return sum(arr.size for arr in self.params())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.param_items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        items = dict(self.param_items())
        if set(state) != set(items):
            missing = set(items) - set(state)
            extra = set(state) - set(items)
            raise ShapeMismatch(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, arr in items.items():
            if state[name].shape != arr.shape:
                raise ShapeMismatch(
                    f"shape mismatch for {name}: {state[name].shape} vs {arr.shape}"
                )
            arr[:] = state[name]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, onehot: np.ndarray):
    """Mean loss, gradient w.r.t. logits, and probabilities."""
    p = softmax(logits)
    n = logits.shape[0]
    loss = float(-np.sum(onehot * np.log(p + 1e-12)) / n)
    dlogits = (p - onehot) / n
    return loss, dlogits, p


class SGD:
    def __init__(self, params, lr: float = 1e-3, momentum: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.vel = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        for p, g, v in zip(self.params, grads, self.vel):
            if self.momentum:
                v *= self.momentum
                v -= self.lr * g
                p += v
            else:
                p -= self.lr * g


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def make_optimizer(name: str, params, lr: float):
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "sgd":
        return SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer: {name!r}")

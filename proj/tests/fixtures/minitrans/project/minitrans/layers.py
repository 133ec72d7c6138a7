import numpy as np


class Linear:
    def __init__(self, in_features, out_features, rng):
        scale = np.sqrt(2.0 / in_features)
        self.w = rng.normal(0.0, scale, size=(in_features, out_features))
        self.b = np.zeros(out_features)
        self.grad_w = np.zeros_like(self.w)
        self.grad_b = np.zeros_like(self.b)
        self._x = None

    def forward(self, x):
        if x.shape[-1] != self.w.shape[0]:
            raise ValueError(
                f"shape mismatch: Linear expects last dim {self.w.shape[0]}, got {x.shape[-1]}")
        self._x = x
        return x @ self.w + self.b

    def backward(self, grad):
        self.grad_w += self._x.T @ grad
        self.grad_b += grad.sum(axis=0)
        return grad @ self.w.T

    def params(self):
        return [(self.w, self.grad_w), (self.b, self.grad_b)]


class Embedding:
    def __init__(self, vocab_size, dim, rng):
        self.table = rng.normal(0.0, 0.1, size=(vocab_size, dim))
        self.grad = np.zeros_like(self.table)
        self._ids = None

    def forward(self, ids):
        self._ids = ids
        return self.table[ids]

    def backward(self, grad):
        np.add.at(self.grad, self._ids, grad)

    def params(self):
        return [(self.table, self.grad)]


class ReLU:
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


def mean_pool(x):
    return x.mean(axis=1)

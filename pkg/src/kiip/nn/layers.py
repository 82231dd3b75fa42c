"""Float64 layers with explicit forward/backward passes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch


def relu(x):
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    n = len(labels)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


@dataclass(eq=False)
class Conv3D:
    weight: np.ndarray  # (filters, in_channels, k, k, k)
    bias: np.ndarray  # (filters,)
    stride: int = 1
    relu: bool = True

    @classmethod
    def init(cls, in_channels, filters, kernel, stride, rng, scale=1.0, relu=True):
        fan_in = in_channels * kernel**3
        w = rng.normal(0.0, scale * np.sqrt(2.0 / fan_in), (filters, in_channels, kernel, kernel, kernel))
        return cls(w, np.zeros(filters), stride, relu)

    @property
    def filters(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    def output_shape(self, in_shape):
        c, *spatial = in_shape
        if c != self.weight.shape[1]:
            raise ShapeMismatch(f"conv expects {self.weight.shape[1]} channels, got {c}")
        out = [conv_output_size(s, self.kernel, self.stride) for s in spatial]
        if min(out) < 1:
            raise ShapeMismatch(f"input {tuple(spatial)} smaller than kernel {self.kernel}")
        return (self.filters, *out)

    def forward(self, x: np.ndarray):
        """x: (N, C, D, H, W). Valid cross-correlation + bias (+ ReLU)."""
        if x.ndim != 5:
            raise ShapeMismatch(f"conv input must be (N, C, D, H, W), got shape {x.shape}")
        f, d, h, w = self.output_shape(x.shape[1:])
        c = x.shape[1]
        n, k, s = x.shape[0], self.kernel, self.stride
        win = sliding_window_view(x, (k, k, k), axis=(2, 3, 4))[:, :, ::s, ::s, ::s][:, :, :d, :h, :w]
        cols = win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(n * d * h * w, c * k**3)
        z = cols @ self.weight.reshape(f, -1).T + self.bias
        z = z.reshape(n, d, h, w, f).transpose(0, 4, 1, 2, 3)
        out = relu(z) if self.relu else z
        return out, (x.shape, cols, z)

    def backward(self, cache, dout: np.ndarray, need_dx: bool = True):
        in_shape, cols, z = cache
        if self.relu:
            dout = dout * (z > 0)
        n, f, d, h, w = dout.shape
        c, k, s = in_shape[1], self.kernel, self.stride
        dmat = dout.transpose(0, 2, 3, 4, 1).reshape(-1, f)
        grads = {"weight": (dmat.T @ cols).reshape(self.weight.shape), "bias": dmat.sum(axis=0)}
        if not need_dx:
            return None, grads
        dcols = (dmat @ self.weight.reshape(f, -1)).reshape(n, d, h, w, c, k, k, k)
        dx = np.zeros(in_shape)
        for i in range(k):
            for j in range(k):
                for m in range(k):
                    dx[:, :, i : i + s * d : s, j : j + s * h : s, m : m + s * w : s] += dcols[..., i, j, m].transpose(0, 4, 1, 2, 3)
        return dx, grads

    def params(self) -> dict:
        return {"weight": self.weight, "bias": self.bias}


@dataclass(eq=False)
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray
    relu: bool = True

    @classmethod
    def init(cls, in_dim, out_dim, rng, scale=1.0, relu=True):
        w = rng.normal(0.0, scale * np.sqrt(2.0 / in_dim), (out_dim, in_dim))
        return cls(w, np.zeros(out_dim), relu)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def output_shape(self, in_shape):
        size = int(np.prod(in_shape))
        if size != self.in_dim:
            raise ShapeMismatch(f"dense expects {self.in_dim} inputs, got {size}")
        return (self.out_dim,)

    def forward(self, x: np.ndarray):
        in_shape = x.shape
        x2 = x.reshape(len(x), -1)
        if x2.shape[1] != self.in_dim:
            raise ShapeMismatch(f"dense expects {self.in_dim} inputs, got {x2.shape[1]}")
        z = x2 @ self.weight.T + self.bias
        out = relu(z) if self.relu else z
        return out, (in_shape, x2, z)

    def backward(self, cache, dout: np.ndarray, need_dx: bool = True):
        in_shape, x2, z = cache
        if self.relu:
            dout = dout * (z > 0)
        grads = {"weight": dout.T @ x2, "bias": dout.sum(axis=0)}
        if not need_dx:
            return None, grads
        return (dout @ self.weight).reshape(in_shape), grads

    def params(self) -> dict:
        return {"weight": self.weight, "bias": self.bias}

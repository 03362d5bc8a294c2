"""Small neural-network layer library over the autodiff tape."""
from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor


class Module:
    """Holds named parameters; supports nesting via attribute discovery."""

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                params[name] = value
            elif isinstance(value, Module):
                for sub, t in value.parameters().items():
                    params[f"{name}.{sub}"] = t
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, t in item.parameters().items():
                            params[f"{name}.{i}.{sub}"] = t
        return params

    def zero_grad(self):
        for t in self.parameters().values():
            t.zero_grad()


def _init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    scale = np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.w = _init(rng, (d_in, d_out), d_in)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 stride: int = 1, padding: int | None = None):
        self.w = _init(rng, (c_out, c_in, k), c_in * k)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = k // 2 if padding is None else padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: tuple[int, int], rng: np.random.Generator,
                 stride: tuple[int, int] = (1, 1), padding: tuple[int, int] | None = None):
        kh, kw = k
        self.w = _init(rng, (c_out, c_in, kh, kw), c_in * kh * kw)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = (kh // 2, kw // 2) if padding is None else padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class LSTM(Module):
    """Single-layer unidirectional LSTM over a (T, D) sequence."""

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        self.w_x = _init(rng, (d_in, 4 * hidden), d_in)
        self.w_h = _init(rng, (hidden, 4 * hidden), hidden)
        self.b = Tensor(np.zeros(4 * hidden), requires_grad=True)
        self.hidden = hidden

    def __call__(self, xs: Tensor) -> Tensor:
        """xs: (T, D) -> stacked hidden states (T, H)."""
        h = Tensor(np.zeros(self.hidden))
        c = Tensor(np.zeros(self.hidden))
        outs = []
        for t in range(xs.shape[0]):
            h, c = ops.lstm_cell(xs[t], h, c, self.w_x, self.w_h, self.b)
            outs.append(h)
        from .tensor import stack
        return stack(outs, axis=0)


def lstm_cell_reference(x, h, c, w_x, w_h, b):
    """Scalar-loop reference for one LSTM step (numpy arrays in, arrays out)."""
    hidden = len(h)
    gates = np.empty(4 * hidden)
    for j in range(4 * hidden):
        acc = b[j]
        for k in range(len(x)):
            acc += x[k] * w_x[k, j]
        for k in range(hidden):
            acc += h[k] * w_h[k, j]
        gates[j] = acc

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    h_new = np.empty(hidden)
    c_new = np.empty(hidden)
    for j in range(hidden):
        i = sig(gates[j])
        f = sig(gates[hidden + j])
        g = np.tanh(gates[2 * hidden + j])
        o = sig(gates[3 * hidden + j])
        c_new[j] = f * c[j] + i * g
        h_new[j] = o * np.tanh(c_new[j])
    return h_new, c_new

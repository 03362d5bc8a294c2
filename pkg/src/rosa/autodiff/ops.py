"""Convolution, pooling and recurrent primitives built on the tape."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import ShapeError, Tensor, concatenate


def _windows1d(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """View of shape (N, C, k, L_out) over x of shape (N, C, L)."""
    n, c, length = x.shape
    l_out = (length - k) // stride + 1
    sn, sc, sl = x.strides
    return as_strided(x, shape=(n, c, k, l_out), strides=(sn, sc, sl, sl * stride))


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """x: (N, C_in, L); w: (C_out, C_in, K); returns (N, C_out, L_out)."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} vs weight {w.shape}")
    k = w.shape[2]
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    if xp.shape[2] < k:
        raise ShapeError(f"conv1d: length {xp.shape[2]} < kernel {k}")
    win = _windows1d(xp, k, stride)
    data = np.einsum("ock,nckl->nol", w.data, win, optimize=True)
    if b is not None:
        data = data + b.data[None, :, None]
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(data, any(p.requires_grad for p in parents), parents, _op="conv1d")

    def bw(g):
        if w.requires_grad:
            w._accumulate(np.einsum("nol,nckl->ock", g, win, optimize=True))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            gwin = np.einsum("nol,ock->nckl", g, w.data, optimize=True)
            gx = np.zeros_like(xp)
            l_out = g.shape[2]
            for kk in range(k):
                idx = kk + stride * np.arange(l_out)
                np.add.at(gx, (slice(None), slice(None), idx), gwin[:, :, kk, :])
            if padding:
                gx = gx[:, :, padding:-padding]
            x._accumulate(gx)
    out._backward = bw
    return out


def _windows2d(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    n, c, h, w = x.shape
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    sn, sc, sy, sx = x.strides
    return as_strided(x, shape=(n, c, kh, kw, ho, wo),
                      strides=(sn, sc, sy, sx, sy * sh, sx * sw))


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=(1, 1),
           padding=(0, 0)) -> Tensor:
    """x: (N, C_in, H, W); w: (C_out, C_in, kH, kW)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} vs weight {w.shape}")
    sh, sw = stride
    ph, pw = padding
    kh, kw = w.shape[2], w.shape[3]
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    win = _windows2d(xp, kh, kw, sh, sw)
    data = np.einsum("ocij,ncijhw->nohw", w.data, win, optimize=True)
    if b is not None:
        data = data + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(data, any(p.requires_grad for p in parents), parents, _op="conv2d")

    def bw(g):
        if w.requires_grad:
            w._accumulate(np.einsum("nohw,ncijhw->ocij", g, win, optimize=True))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gwin = np.einsum("nohw,ocij->ncijhw", g, w.data, optimize=True)
            gx = np.zeros_like(xp)
            ho, wo = g.shape[2], g.shape[3]
            iy = sh * np.arange(ho)
            ix = sw * np.arange(wo)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i + iy[:, None], j + ix[None, :]] += gwin[:, :, i, j, :, :]
            if ph or pw:
                gx = gx[:, :, ph:gx.shape[2] - ph or None, pw:gx.shape[3] - pw or None]
            x._accumulate(gx)
    out._backward = bw
    return out


def _pool1d(x: Tensor, k: int, mode: str) -> Tensor:
    """Non-overlapping pooling with kernel = stride = k; trailing remainder dropped."""
    n, c, length = x.shape
    l_out = length // k
    trimmed = x.data[:, :, :l_out * k].reshape(n, c, l_out, k)
    if mode == "avg":
        data = trimmed.mean(axis=3)
    else:
        data = trimmed.max(axis=3)
    out = Tensor(data, x.requires_grad, (x,), _op=f"{mode}_pool1d")

    def bw(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        if mode == "avg":
            gx[:, :, :l_out * k] = np.repeat(g / k, k, axis=2)
        else:
            mask = trimmed == data[:, :, :, None]
            mask = mask / mask.sum(axis=3, keepdims=True)
            gx[:, :, :l_out * k] = (mask * g[:, :, :, None]).reshape(n, c, l_out * k)
        x._accumulate(gx)
    out._backward = bw
    return out


def avg_pool1d(x: Tensor, k: int) -> Tensor:
    return _pool1d(x, k, "avg")


def max_pool1d(x: Tensor, k: int) -> Tensor:
    return _pool1d(x, k, "max")


def _pool2d(x: Tensor, kh: int, kw: int, mode: str) -> Tensor:
    n, c, h, w = x.shape
    ho, wo = h // kh, w // kw
    trimmed = x.data[:, :, :ho * kh, :wo * kw].reshape(n, c, ho, kh, wo, kw)
    if mode == "avg":
        data = trimmed.mean(axis=(3, 5))
    else:
        data = trimmed.max(axis=(3, 5))
    out = Tensor(data, x.requires_grad, (x,), _op=f"{mode}_pool2d")

    def bw(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        if mode == "avg":
            block = np.repeat(np.repeat(g / (kh * kw), kh, axis=2), kw, axis=3)
            gx[:, :, :ho * kh, :wo * kw] = block
        else:
            mask = trimmed == data[:, :, :, None, :, None]
            mask = mask / mask.sum(axis=(3, 5), keepdims=True)
            gb = mask * g[:, :, :, None, :, None]
            gx[:, :, :ho * kh, :wo * kw] = gb.reshape(n, c, ho * kh, wo * kw)
        x._accumulate(gx)
    out._backward = bw
    return out


def avg_pool2d(x: Tensor, kh: int, kw: int) -> Tensor:
    return _pool2d(x, kh, kw, "avg")


def max_pool2d(x: Tensor, kh: int, kw: int) -> Tensor:
    return _pool2d(x, kh, kw, "max")


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_x: Tensor, w_h: Tensor,
              b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step. x: (D,), h/c: (H,), w_x: (D, 4H), w_h: (H, 4H), b: (4H,).

    Gate order along the 4H axis: input, forget, cell candidate, output.
    """
    hidden = h.shape[0]
    gates = x @ w_x + h @ w_h + b
    i = gates[0:hidden].sigmoid()
    f = gates[hidden:2 * hidden].sigmoid()
    g = gates[2 * hidden:3 * hidden].tanh()
    o = gates[3 * hidden:4 * hidden].sigmoid()
    c_new = f * c + i * g
    h_new = o * c_new.tanh()
    return h_new, c_new


__all__ = ["conv1d", "conv2d", "avg_pool1d", "max_pool1d", "avg_pool2d",
           "max_pool2d", "lstm_cell", "concatenate"]

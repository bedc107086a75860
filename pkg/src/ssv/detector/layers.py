"""Layers with hand-written backward passes.

Activations are stored channel-major, shape ``(C, N, H, W)``, so a
convolution is a single matrix product over an im2col buffer.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def _im2col(x, k):
    """(C, N, H, W) -> (C*k*k, N*H*W) with zero padding k // 2 (stride 1)."""
    C, N, H, W = x.shape
    if k == 1:
        return x.reshape(C, N * H * W)
    p = k // 2
    xp = np.zeros((C, N, H + 2 * p, W + 2 * p), dtype=x.dtype)
    xp[:, :, p:p + H, p:p + W] = x
    cols = np.empty((C, k, k, N, H, W), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, :, i:i + H, j:j + W]
    return cols.reshape(C * k * k, N * H * W)


def _col2im(cols, shape, k):
    C, N, H, W = shape
    if k == 1:
        return cols.reshape(shape)
    p = k // 2
    cols = cols.reshape(C, k, k, N, H, W)
    xp = np.zeros((C, N, H + 2 * p, W + 2 * p), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            xp[:, :, i:i + H, j:j + W] += cols[:, i, j]
    return xp[:, :, p:p + H, p:p + W]


class Conv2D:
    """Stride-1 'same' convolution with bias; weight shape (K, C, k, k)."""

    has_params = True

    def __init__(self, weight, bias, input_grad=True):
        self.weight = weight
        self.bias = bias
        self.input_grad = input_grad
        self.k = weight.shape[-1]
        self._cache = None

    @property
    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, keep=False):
        cols = _im2col(x, self.k)
        K = self.weight.shape[0]
        out = self.weight.reshape(K, -1) @ cols
        out += self.bias[:, None]
        if keep:
            self._cache = (cols, x.shape)
        return out.reshape(K, *x.shape[1:])

    def backward(self, g):
        cols, shape = self._cache
        self._cache = None
        K = self.weight.shape[0]
        g2 = g.reshape(K, -1)
        gw = (g2 @ cols.T).reshape(self.weight.shape)
        gb = g2.sum(axis=1)
        gx = None
        if self.input_grad:
            gx = _col2im(self.weight.reshape(K, -1).T @ g2, shape, self.k)
        return gx, [gw, gb]


class LeakyReLU:
    has_params = False
    params = []

    def __init__(self, slope=0.1):
        self.slope = slope
        self._mask = None

    def forward(self, x, keep=False):
        pos = x > 0
        if keep:
            self._mask = pos
        return np.where(pos, x, x * x.dtype.type(self.slope))

    def backward(self, g):
        pos, self._mask = self._mask, None
        return np.where(pos, g, g * g.dtype.type(self.slope)), []


class MaxPool2D:
    """2x2 max pooling with stride 2; ties go to the first of TL, TR, BL, BR."""

    has_params = False
    params = []

    def __init__(self):
        self._cache = None

    @staticmethod
    def _quads(x):
        return (x[:, :, 0::2, 0::2], x[:, :, 0::2, 1::2],
                x[:, :, 1::2, 0::2], x[:, :, 1::2, 1::2])

    def forward(self, x, keep=False):
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ValueError("max pooling needs even spatial dimensions")
        a, b, c, d = self._quads(x)
        out = np.maximum(np.maximum(a, b), np.maximum(c, d))
        if keep:
            idx = np.full(out.shape, 3, dtype=np.uint8)
            idx[c == out] = 2
            idx[b == out] = 1
            idx[a == out] = 0
            self._cache = (idx, x.shape)
        return out

    def backward(self, g):
        idx, shape = self._cache
        self._cache = None
        gx = np.zeros(shape, dtype=g.dtype)
        for q, view in enumerate(self._quads(gx)):
            view[...] = np.where(idx == q, g, 0)
        return gx, []


@njit(cache=True)
def _pool_act_fwd(x, slope, out, idx):
    M, H2, W2 = out.shape
    for m in range(M):
        for i in range(H2):
            for j in range(W2):
                best = x[m, 2 * i, 2 * j]
                k = 0
                v = x[m, 2 * i, 2 * j + 1]
                if v > best:
                    best = v
                    k = 1
                v = x[m, 2 * i + 1, 2 * j]
                if v > best:
                    best = v
                    k = 2
                v = x[m, 2 * i + 1, 2 * j + 1]
                if v > best:
                    best = v
                    k = 3
                idx[m, i, j] = k
                out[m, i, j] = best if best > 0 else best * slope


@njit(cache=True)
def _pool_act_bwd(g, out, idx, slope, gx):
    M, H2, W2 = g.shape
    for m in range(M):
        for i in range(H2):
            for j in range(W2):
                v = g[m, i, j]
                if out[m, i, j] <= 0:
                    v = v * slope
                k = idx[m, i, j]
                gx[m, 2 * i + k // 2, 2 * j + k % 2] = v


class PoolLeakyReLU:
    """MaxPool2D followed by LeakyReLU in one pass.

    Same function and gradient as LeakyReLU followed by MaxPool2D, because
    the activation is strictly increasing.
    """

    has_params = False
    params = []

    def __init__(self, slope=0.1):
        self.slope = slope
        self._cache = None

    def forward(self, x, keep=False):
        C, N, H, W = x.shape
        if H % 2 or W % 2:
            raise ValueError("max pooling needs even spatial dimensions")
        x3 = np.ascontiguousarray(x).reshape(C * N, H, W)
        out = np.empty((C * N, H // 2, W // 2), dtype=x.dtype)
        idx = np.empty(out.shape, dtype=np.uint8)
        _pool_act_fwd(x3, x.dtype.type(self.slope), out, idx)
        if keep:
            self._cache = (out, idx, x.shape)
        return out.reshape(C, N, H // 2, W // 2)

    def backward(self, g):
        out, idx, shape = self._cache
        self._cache = None
        C, N, H, W = shape
        gx = np.zeros((C * N, H, W), dtype=g.dtype)
        _pool_act_bwd(np.ascontiguousarray(g).reshape(out.shape), out, idx,
                      g.dtype.type(self.slope), gx)
        return gx.reshape(shape), []

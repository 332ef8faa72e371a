"""Convolution / ReLU / upsampling primitives on channels-last arrays.

All activations are (B, H, W, C). 3x3 convolutions use symmetric padding 1,
so spatial size is preserved at stride 1 and halved at stride 2. Stride-1
convolutions run as 9 shifted GEMMs against the padded input (no im2col
materialization: the memory traffic, not the FLOPs, dominates on CPU);
stride-2 convolutions build the much smaller strided im2col explicitly.
"""
from __future__ import annotations

import numpy as np

_OFFSETS = [(di, dj) for di in range(3) for dj in range(3)]


def conv3_init(cin: int, cout: int, rng: np.random.Generator, dtype=np.float32):
    """He-uniform kernel (3,3,cin,cout) and zero bias."""
    limit = np.sqrt(6.0 / (9 * cin))
    w = rng.uniform(-limit, limit, size=(3, 3, cin, cout)).astype(dtype)
    b = np.zeros(cout, dtype=dtype)
    return w, b


def conv1_init(cin: int, cout: int, rng: np.random.Generator, dtype=np.float32):
    limit = np.sqrt(6.0 / cin)
    w = rng.uniform(-limit, limit, size=(cin, cout)).astype(dtype)
    b = np.zeros(cout, dtype=dtype)
    return w, b


def conv3_forward(x, w, b, stride: int):
    B, H, W, C = x.shape
    cout = w.shape[-1]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    if stride == 1:
        x2d = xp.reshape(-1, C)
        y = np.empty((B, H, W, cout), dtype=x.dtype)
        y[:] = b
        for k, (di, dj) in enumerate(_OFFSETS):
            z = (x2d @ w[di, dj]).reshape(B, H + 2, W + 2, cout)
            y += z[:, di:di + H, dj:dj + W, :]
        return y, (xp, None)
    Ho = (H + 2 - 3) // stride + 1
    Wo = (W + 2 - 3) // stride + 1
    cols = np.empty((B, Ho, Wo, 9, C), dtype=x.dtype)
    for k, (di, dj) in enumerate(_OFFSETS):
        cols[:, :, :, k, :] = xp[:, di:di + (Ho - 1) * stride + 1:stride,
                                 dj:dj + (Wo - 1) * stride + 1:stride, :]
    c2 = cols.reshape(B * Ho * Wo, 9 * C)
    y = (c2 @ w.reshape(9 * C, cout) + b).reshape(B, Ho, Wo, cout)
    return y, (xp, c2)


def conv3_backward(g, x_shape, w, stride: int, cache):
    """Gradients for conv3_forward. Returns (gx, gw, gb)."""
    B, H, W, C = x_shape
    cout = w.shape[-1]
    xp, c2 = cache
    if stride == 1:
        g2d = g.reshape(-1, cout)
        gb = g2d.sum(axis=0)
        gw = np.empty_like(w)
        gxp = np.zeros_like(xp)
        x2d = xp.reshape(-1, C)
        for k, (di, dj) in enumerate(_OFFSETS):
            xs = np.ascontiguousarray(xp[:, di:di + H, dj:dj + W, :]).reshape(-1, C)
            gw[di, dj] = xs.T @ g2d
            gz = (g2d @ w[di, dj].T).reshape(B, H, W, C)
            gxp[:, di:di + H, dj:dj + W, :] += gz
        return gxp[:, 1:-1, 1:-1, :], gw, gb
    Ho, Wo = g.shape[1], g.shape[2]
    g2d = g.reshape(B * Ho * Wo, cout)
    gb = g2d.sum(axis=0)
    gw = (c2.T @ g2d).reshape(3, 3, C, cout)
    gc = (g2d @ w.reshape(9 * C, cout).T).reshape(B, Ho, Wo, 9, C)
    gxp = np.zeros_like(xp)
    for k, (di, dj) in enumerate(_OFFSETS):
        gxp[:, di:di + (Ho - 1) * stride + 1:stride,
            dj:dj + (Wo - 1) * stride + 1:stride, :] += gc[:, :, :, k, :]
    return gxp[:, 1:-1, 1:-1, :], gw, gb


def conv1_forward(x, w, b):
    B, H, W, C = x.shape
    y = (x.reshape(-1, C) @ w + b).reshape(B, H, W, w.shape[1])
    return y, None


def conv1_backward(g, x, w):
    C, cout = w.shape
    g2d = g.reshape(-1, cout)
    x2d = x.reshape(-1, C)
    gw = x2d.T @ g2d
    gb = g2d.sum(axis=0)
    gx = (g2d @ w.T).reshape(x.shape)
    return gx, gw, gb


def relu_forward(x):
    y = np.maximum(x, 0)
    return y, x > 0


def relu_backward(g, mask):
    return np.where(mask, g, 0)


def upsample2_forward(x):
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_backward(g):
    B, H, W, C = g.shape
    return g.reshape(B, H // 2, 2, W // 2, 2, C).sum(axis=(2, 4))

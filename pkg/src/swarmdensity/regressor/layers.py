"""NHWC layer primitives with explicit backward passes.

Each ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
maps the upstream gradient and cache to input (and parameter) gradients.
"""

from __future__ import annotations

import numpy as np

from ..geometry import cell_edges


def _im2col(x):
    # (N, H, W, C) -> (9*C, N*H*W), rows ordered (ky, kx, c) to match w.reshape(9*C, F);
    # channel-major layout keeps the copies contiguous along image rows
    n, h, w, c = x.shape
    xt = np.pad(x.transpose(3, 0, 1, 2), ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((9, c, n, h, w), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[3 * i + j] = xt[:, :, i:i + h, j:j + w]
    return cols.reshape(9 * c, n * h * w)


def conv3x3_forward(x, w, b):
    # x: (N, H, W, C); w: (3, 3, C, F); zero padding keeps H x W
    n, h, wd, c = x.shape
    cols = _im2col(x)
    wm = w.reshape(9 * c, -1)
    out = (cols.T @ wm + b).reshape(n, h, wd, -1)
    return out, (x.shape, cols, wm)


def conv3x3_backward(dout, cache, need_dx=True):
    shape, cols, wm = cache
    n, h, wd, c = shape
    f = dout.shape[-1]
    d2 = dout.reshape(-1, f)
    dw = (cols @ d2).reshape(3, 3, c, f)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (wm @ d2.T).reshape(9, c, n, h, wd)
    dxt = np.zeros((c, n, h + 2, wd + 2), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxt[:, :, i:i + h, j:j + wd] += dcols[3 * i + j]
    return dxt[:, :, 1:-1, 1:-1].transpose(1, 2, 3, 0), dw, db


def relu_forward(x):
    mask = x > 0
    return np.maximum(x, x.dtype.type(0)), mask


def relu_backward(dout, mask):
    return dout * mask


def _quads(x):
    ho, wo = x.shape[1] // 2, x.shape[2] // 2
    return [x[:, i:2 * ho:2, j:2 * wo:2, :] for i in (0, 1) for j in (0, 1)]


def maxpool2_forward(x):
    # 2x2 stride 2, odd trailing rows/cols dropped; ties route to the first window position
    q = _quads(x)
    out = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
    taken = np.zeros(out.shape, dtype=bool)
    masks = []
    for qi in q:
        m = (qi == out) & ~taken
        taken |= m
        masks.append(m)
    return out, (x.shape, masks)


def maxpool2_backward(dout, cache):
    shape, masks = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    ho, wo = dout.shape[1], dout.shape[2]
    k = 0
    for i in (0, 1):
        for j in (0, 1):
            np.multiply(dout, masks[k], out=dx[:, i:2 * ho:2, j:2 * wo:2, :])
            k += 1
    return dx


def pointwise_forward(x, w, b):
    """1x1 convolution: (N, H, W, C) @ (C, F)."""
    return x @ w + b, x


def pointwise_backward(dout, x, w):
    f = dout.shape[-1]
    d2 = dout.reshape(-1, f)
    dw = x.reshape(-1, x.shape[-1]).T @ d2
    return dout @ w.T, dw, d2.sum(axis=0)


def cellpool_forward(x, h_out, w_out):
    """Average over each cell of an ``h_out x w_out`` tiling of the feature map."""
    n, h, w, c = x.shape
    re, ce = cell_edges(h, h_out), cell_edges(w, w_out)
    out = np.empty((n, h_out, w_out, c), dtype=x.dtype)
    for r in range(h_out):
        for q in range(w_out):
            out[:, r, q, :] = x[:, re[r]:re[r + 1], ce[q]:ce[q + 1], :].mean(axis=(1, 2))
    return out, (x.shape, re, ce)


def cellpool_backward(dout, cache):
    shape, re, ce = cache
    dx = np.empty(shape, dtype=dout.dtype)
    for r in range(len(re) - 1):
        for q in range(len(ce) - 1):
            area = (re[r + 1] - re[r]) * (ce[q + 1] - ce[q])
            dx[:, re[r]:re[r + 1], ce[q]:ce[q + 1], :] = (dout[:, r, q, :] / area)[:, None, None, :]
    return dx


def dense_forward(x, w, b):
    return x @ w + b, x


def dense_backward(dout, x, w):
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)

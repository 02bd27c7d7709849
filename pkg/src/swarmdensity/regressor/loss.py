"""Weighted Euclidean loss over stacked cell histograms."""

from __future__ import annotations

import numpy as np


def default_weights(n_bin: int = 50, beta: float = 4.0, d_near: float = 12.0) -> np.ndarray:
    """Bin weights that emphasise close range: ``1 + beta * max(0, 1 - d / d_near)``."""
    d = np.arange(n_bin, dtype=float)
    return 1.0 + beta * np.maximum(0.0, 1.0 - d / d_near)


def _tiled(w, n_out: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or not np.all(w > 0):
        raise ValueError("loss weights must be a 1-D vector of positive values")
    if n_out % w.size:
        raise ValueError(f"output length {n_out} is not a multiple of {w.size} bins")
    return np.tile(w, n_out // w.size)


def loss(pred, gt, w) -> float:
    """``||(pred - gt) * W||`` with ``w`` replicated for every cell."""
    pred, gt = np.asarray(pred, dtype=float), np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    diff = pred.reshape(-1) - gt.reshape(-1)
    return float(np.linalg.norm(diff * _tiled(w, diff.size)))


def batch_loss(out: np.ndarray, target: np.ndarray, w):
    """Per-sample norms and the gradient of the batch-mean squared loss w.r.t. ``out``.

    ``out`` and ``target`` are ``(N, n_out)``.
    """
    if out.shape != target.shape:
        raise ValueError(f"shape mismatch {out.shape} vs {target.shape}")
    w2 = (_tiled(w, out.shape[1]) ** 2).astype(out.dtype)
    diff = out - target
    sq = (diff * diff * w2).sum(axis=1)
    grad = (2.0 / out.shape[0]) * diff * w2
    return np.sqrt(sq), grad.astype(out.dtype, copy=False)

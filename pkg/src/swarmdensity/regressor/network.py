"""Forward and backward passes of the density regressor.

Pipeline: VGG-like stages (3x3 conv + ReLU, repeated, then 2x2 max pool),
a tail that maps features to per-cell ``n_bin`` vectors (1x1 conv followed
by per-cell average pooling, or a dense layer over the flattened features),
and one dense layer over the stacked cell vectors with identity output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from ..errors import NumericalError
from . import layers as L
from .arch import ArchSpec, init_params, param_count, param_shapes


@dataclass
class RegressorParams:
    arch: ArchSpec
    tensors: Dict[str, np.ndarray]

    @classmethod
    def initial(cls, arch: ArchSpec, seed: int = 0, dtype=np.float32) -> "RegressorParams":
        return cls(arch, init_params(arch, seed, dtype))

    def __post_init__(self):
        shapes = param_shapes(self.arch)
        if list(shapes) != list(self.tensors):
            raise ValueError("tensor names do not match the architecture")
        for name, shape in shapes.items():
            if tuple(self.tensors[name].shape) != shape:
                raise ValueError(f"{name}: shape {self.tensors[name].shape}, expected {shape}")

    @property
    def count(self) -> int:
        return param_count(self.arch)

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def copy(self) -> "RegressorParams":
        return RegressorParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> Dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def prepare(images, dtype=np.float32) -> np.ndarray:
    """uint8 images (H, W, 3) or (N, H, W, 3) to float input in [0, 1]."""
    x = np.asarray(images)
    if x.ndim == 3:
        x = x[None]
    if x.dtype == np.uint8:
        return x.astype(dtype) / np.dtype(dtype).type(255.0)
    return x.astype(dtype, copy=False)


def _check(name, a):
    if not np.isfinite(a).all():
        raise NumericalError("non-finite activation or gradient", layer=name)


def _conv_names(arch: ArchSpec) -> List[List[str]]:
    return [[f"conv{s}_{j}" for j in range(convs)] for s, (_, convs) in enumerate(arch.stages)]


def forward_batch(rp: RegressorParams, x: np.ndarray, keep: bool = False) -> Tuple[np.ndarray, list]:
    """Forward a float batch ``(N, H, W, C)``; returns ``(N, n_out)`` outputs and caches."""
    # overflow is reported per layer by _check instead of numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _forward(rp, x, keep)


def _forward(rp, x, keep):
    arch, p = rp.arch, rp.tensors
    if x.shape[1:] != (arch.h_in, arch.w_in, arch.channels):
        raise ValueError(f"input {x.shape[1:]} does not match {(arch.h_in, arch.w_in, arch.channels)}")
    caches = []
    h = x
    for stage in _conv_names(arch):
        for j, name in enumerate(stage):
            h, c_conv = L.conv3x3_forward(h, p[name + ".W"], p[name + ".b"])
            if j == len(stage) - 1:
                # ReLU commutes with max pooling; pooling first halves the work
                h, c_pool = L.maxpool2_forward(h)
                h, c_relu = L.relu_forward(h)
            else:
                h, c_relu = L.relu_forward(h)
                c_pool = None
            _check(name, h)
            if keep:
                caches.append(("conv", name, c_conv, (c_relu, c_pool)))
    n = h.shape[0]
    if arch.tail == "one_by_one_conv":
        h, c_pw = L.pointwise_forward(h, p["tail.W"], p["tail.b"])
        h, c_cell = L.cellpool_forward(h, arch.grid.h_out, arch.grid.w_out)
        if keep:
            caches.append(("tail1x1", "tail", c_pw, c_cell))
        h = h.reshape(n, -1)
    else:
        flat_shape = h.shape
        h, c_fc = L.dense_forward(h.reshape(n, -1), p["tail.W"], p["tail.b"])
        if keep:
            caches.append(("tailfc", "tail", c_fc, flat_shape))
    _check("tail", h)
    out, c_out = L.dense_forward(h, p["out.W"], p["out.b"])
    _check("out", out)
    if keep:
        caches.append(("out", "out", c_out, None))
    return out, caches


def backward_batch(rp: RegressorParams, caches: list, dout: np.ndarray) -> Dict[str, np.ndarray]:
    """Parameter gradients given the gradient of the objective w.r.t. the outputs."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _backward(rp, caches, dout)


def _backward(rp, caches, dout):
    p = rp.tensors
    grads = {}
    d = dout
    for kind, name, c1, c2 in reversed(caches):
        if kind == "out":
            d, grads["out.W"], grads["out.b"] = L.dense_backward(d, c1, p["out.W"])
        elif kind == "tail1x1":
            arch = rp.arch
            d = d.reshape(d.shape[0], arch.grid.h_out, arch.grid.w_out, arch.n_bin)
            d = L.cellpool_backward(d, c2)
            d, grads["tail.W"], grads["tail.b"] = L.pointwise_backward(d, c1, p["tail.W"])
        elif kind == "tailfc":
            d, grads["tail.W"], grads["tail.b"] = L.dense_backward(d, c1, p["tail.W"])
            d = d.reshape(c2)
        else:
            c_relu, c_pool = c2
            d = L.relu_backward(d, c_relu)
            if c_pool is not None:
                d = L.maxpool2_backward(d, c_pool)
            first = name == "conv0_0"
            d, grads[name + ".W"], grads[name + ".b"] = L.conv3x3_backward(d, c1, need_dx=not first)
            if first:
                break
        _check(name, d)
    return {k: grads[k] for k in p}


def forward(rp: RegressorParams, image) -> np.ndarray:
    """Predicted label grid(s) for one image ``(H, W, 3)`` or a batch."""
    batched = np.asarray(image).ndim == 4
    out, _ = forward_batch(rp, prepare(image, rp.dtype))
    g = rp.arch.grid
    out = out.reshape(-1, g.h_out, g.w_out, rp.arch.n_bin)
    return out if batched else out[0]


def predict(rp: RegressorParams, images, batch: int = 64) -> np.ndarray:
    """Batched :func:`forward` over a sequence of uint8 images."""
    outs = [forward(rp, np.stack(images[i:i + batch])) for i in range(0, len(images), batch)]
    return np.concatenate(outs) if outs else np.zeros((0,))

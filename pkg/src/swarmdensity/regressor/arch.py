"""Architecture description and parameter initialisation."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Dict, Tuple

import numpy as np

from ..geometry import GridSpec

TAILS = ("one_by_one_conv", "fully_connected")
TAIL_ALIASES = {"1x1": "one_by_one_conv", "fc": "fully_connected",
                "one_by_one_conv": "one_by_one_conv", "fully_connected": "fully_connected"}

# VGG-like stacks; each stage is (filters, 3x3 convs) followed by 2x2 max pooling
FULL_STAGES = ((32, 2), (64, 2), (128, 2), (256, 2), (256, 1))
DESK_STAGES = ((16, 1), (32, 1), (64, 1), (64, 1))


@dataclass(frozen=True)
class ArchSpec:
    w_in: int = 300
    h_in: int = 300
    n_bin: int = 50
    grid: GridSpec = field(default_factory=GridSpec)
    stages: Tuple[Tuple[int, int], ...] = FULL_STAGES
    tail: str = "one_by_one_conv"
    channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "tail", TAIL_ALIASES.get(self.tail, self.tail))
        object.__setattr__(self, "stages", tuple((int(f), int(c)) for f, c in self.stages))
        if self.tail not in TAILS:
            raise ValueError(f"unknown tail {self.tail!r}")
        if not self.stages or any(f < 1 or c < 1 for f, c in self.stages):
            raise ValueError("every stage needs at least one filter and one convolution")
        h, w = self.feature_shape[:2]
        if h < self.grid.h_out or w < self.grid.w_out:
            raise ValueError(f"feature map {h}x{w} is smaller than the {self.grid} output grid")

    @classmethod
    def desk(cls, size: int = 64, **kw) -> "ArchSpec":
        return cls(w_in=size, h_in=size, stages=DESK_STAGES, **kw)

    def with_(self, **kw) -> "ArchSpec":
        return replace(self, **kw)

    @property
    def feature_shape(self):
        h, w = self.h_in, self.w_in
        for _ in self.stages:
            h, w = h // 2, w // 2
        return h, w, self.stages[-1][0]

    @property
    def n_out(self) -> int:
        return self.grid.n_cells * self.n_bin

    def to_dict(self) -> dict:
        return {"w_in": self.w_in, "h_in": self.h_in, "n_bin": self.n_bin,
                "grid": [self.grid.w_out, self.grid.h_out],
                "stages": [list(s) for s in self.stages], "tail": self.tail,
                "channels": self.channels}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(int(d["w_in"]), int(d["h_in"]), int(d["n_bin"]), GridSpec(*d["grid"]),
                   tuple(tuple(s) for s in d["stages"]), d["tail"], int(d.get("channels", 3)))


def param_shapes(arch: ArchSpec) -> "OrderedDict[str, tuple]":
    shapes = OrderedDict()
    cin = arch.channels
    for s, (filters, convs) in enumerate(arch.stages):
        for j in range(convs):
            shapes[f"conv{s}_{j}.W"] = (3, 3, cin, filters)
            shapes[f"conv{s}_{j}.b"] = (filters,)
            cin = filters
    fh, fw, fc = arch.feature_shape
    if arch.tail == "one_by_one_conv":
        shapes["tail.W"] = (fc, arch.n_bin)
        shapes["tail.b"] = (arch.n_bin,)
    else:
        shapes["tail.W"] = (fh * fw * fc, arch.n_out)
        shapes["tail.b"] = (arch.n_out,)
    shapes["out.W"] = (arch.n_out, arch.n_out)
    shapes["out.b"] = (arch.n_out,)
    return shapes


def param_count(arch: ArchSpec) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(arch).values())


def init_params(arch: ArchSpec, seed: int = 0, dtype=np.float32) -> Dict[str, np.ndarray]:
    """He fan-in initialisation; convolutions feed ReLUs, the two tail layers are linear."""
    rng = np.random.default_rng([int(seed), 1])
    params = OrderedDict()
    for name, shape in param_shapes(arch).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[:-1]))
        gain = 2.0 if name.startswith("conv") else 1.0
        params[name] = (rng.standard_normal(shape) * math.sqrt(gain / fan_in)).astype(dtype)
    return params

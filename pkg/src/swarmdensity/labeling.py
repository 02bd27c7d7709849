"""Density-over-distance labels.

A label grid is a float array of shape ``(h_out, w_out, n_bin)``: one
histogram per image cell, cells in row-major order.  Bin ``i`` counts the
UAVs whose center projects into the cell and whose distance from the camera
lies in ``[i * delta_d, (i + 1) * delta_d)``; everything at or beyond
``d_max`` lands in the last bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import CameraIntrinsics, GridSpec, Scene, grid_cells_of, project_points

MODES = ("raw", "partial", "full")


@dataclass(frozen=True)
class LabelSpec:
    delta_d: float = 1.0
    n_bin: int = 50
    sigma: float = 1.0
    k: int = 5

    def __post_init__(self):
        if not self.delta_d > 0:
            raise ValueError("delta_d must be positive")
        if self.n_bin < 1:
            raise ValueError("n_bin must be at least 1")
        if not 0 <= self.k <= self.n_bin:
            raise ValueError("k must lie in [0, n_bin]")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def d_max(self) -> float:
        return self.delta_d * (self.n_bin - 1)

    def bin_of(self, distance):
        """Bin index of one or more distances (last bin absorbs the far tail)."""
        idx = np.floor(np.asarray(distance, dtype=float) / self.delta_d).astype(int)
        return np.clip(idx, 0, self.n_bin - 1)

    def bin_edges(self) -> np.ndarray:
        return np.arange(self.n_bin + 1) * self.delta_d

    def to_dict(self) -> dict:
        return {"delta_d": self.delta_d, "n_bin": self.n_bin, "sigma": self.sigma, "k": self.k}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSpec":
        return cls(float(d["delta_d"]), int(d["n_bin"]), float(d["sigma"]), int(d["k"]))


def empty_grid(grid: GridSpec, spec: LabelSpec) -> np.ndarray:
    return np.zeros((grid.h_out, grid.w_out, spec.n_bin))


def raw_histogram(scene: Scene, cam: CameraIntrinsics, grid: GridSpec, spec: LabelSpec) -> np.ndarray:
    out = empty_grid(grid, spec)
    if len(scene) == 0:
        return out
    u, v, front = project_points(cam, scene.positions)
    col, row, inside = grid_cells_of(cam, grid, u, v)
    keep = front & inside
    bins = spec.bin_of(scene.distances)
    np.add.at(out, (row[keep], col[keep], bins[keep]), 1.0)
    return out


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Unit-sum discrete Gaussian on ``[-ceil(4 sigma), ceil(4 sigma)]``."""
    radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    with np.errstate(over="ignore"):
        g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


@lru_cache(maxsize=64)
def _smoothing_matrix(n_bin: int, sigma: float, k: int, mode: str) -> np.ndarray:
    # column j holds where a unit count originating in bin j ends up
    s = np.eye(n_bin)
    if mode == "raw" or sigma == 0:
        return s
    first = k if mode == "partial" else 0
    g = gaussian_kernel(sigma)
    radius = len(g) // 2
    for j in range(first, n_bin):
        col = np.zeros(n_bin)
        lo, hi = max(0, j - radius), min(n_bin - 1, j + radius)
        col[lo:hi + 1] = g[lo - j + radius:hi - j + radius + 1]
        s[:, j] = col / col.sum()
    s.setflags(write=False)
    return s


def smooth_labels(raw: np.ndarray, spec: LabelSpec, mode: str = "partial") -> np.ndarray:
    """Smooth histogram mass over neighboring distance bins.

    ``raw`` returns the input unchanged, ``full`` spreads every bin with the
    Gaussian kernel, ``partial`` leaves counts originating in the closest
    ``spec.k`` bins exact and spreads the rest (which may spill below ``k``).
    Kernel rows falling off either end of the histogram are renormalized per
    source bin, so each cell keeps its total count.
    """
    if mode not in MODES:
        raise ValueError(f"unknown smoothing mode {mode!r}")
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != spec.n_bin:
        raise ValueError("histogram length does not match n_bin")
    if mode == "raw":
        return raw.copy()
    s = _smoothing_matrix(spec.n_bin, float(spec.sigma), int(spec.k), mode)
    return raw @ s.T


def make_labels(scene: Scene, cam: CameraIntrinsics, grid: GridSpec, spec: LabelSpec) -> dict:
    raw = raw_histogram(scene, cam, grid, spec)
    return {mode: smooth_labels(raw, spec, mode) for mode in MODES}


def stack_cells(grid: np.ndarray) -> np.ndarray:
    return np.asarray(grid).reshape(-1)


def unstack_cells(vec: np.ndarray, grid: GridSpec, n_bin: int) -> np.ndarray:
    vec = np.asarray(vec)
    if vec.size != grid.n_cells * n_bin:
        raise ValueError("meta-vector length does not match grid and n_bin")
    return vec.reshape(grid.h_out, grid.w_out, n_bin)


def cell_sum(grid: np.ndarray) -> np.ndarray:
    """Collapse the cell axes, leaving one histogram (or one per leading batch item)."""
    grid = np.asarray(grid)
    return grid.sum(axis=(-3, -2))

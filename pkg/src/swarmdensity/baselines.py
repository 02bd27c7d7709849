"""Ideal bounding-box detector baseline and histogram correlation bias.

The ideal detector is handed exact ground-truth boxes; distance is then
read off a table of mean box sizes per distance bin by nearest-neighbour
lookup in (width, height) pixel space.  Since box size depends on the
target's orientation, the estimate carries an error even with perfect
boxes, while the count per image stays exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .geometry import BBox, CameraIntrinsics, GridSpec, Scene, TargetModel, UavPose, grid_cells_of
from .geometry import model_corners_world, project_points
from .labeling import LabelSpec, raw_histogram


@dataclass(frozen=True)
class BboxStatTable:
    mean_w: np.ndarray
    mean_h: np.ndarray
    count: np.ndarray

    def __post_init__(self):
        if not (len(self.mean_w) == len(self.mean_h) == len(self.count)):
            raise ValueError("table columns differ in length")
        valid = self.count > 0
        if (self.mean_w[valid] <= 0).any() or (self.mean_h[valid] <= 0).any():
            raise ValueError("mean box dimensions must be positive where samples exist")

    @property
    def valid(self) -> np.ndarray:
        return self.count > 0

    @property
    def n_bin(self) -> int:
        return len(self.count)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as f:
            wr = csv.writer(f, lineterminator="\n")
            wr.writerow(["bin", "mean_w", "mean_h", "count"])
            for b in range(self.n_bin):
                wr.writerow([b, format(self.mean_w[b], ".9g"), format(self.mean_h[b], ".9g"), int(self.count[b])])
        return path

    @classmethod
    def from_csv(cls, path) -> "BboxStatTable":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        return cls(np.array([float(r["mean_w"]) for r in rows]), np.array([float(r["mean_h"]) for r in rows]),
                   np.array([int(r["count"]) for r in rows]))


def table_from_boxes(distances: Iterable[float], sizes: Iterable[Tuple[float, float]],
                     spec: LabelSpec) -> BboxStatTable:
    """Per-bin arithmetic mean of ``(width, height)`` pairs binned by distance."""
    sw = np.zeros(spec.n_bin)
    sh = np.zeros(spec.n_bin)
    n = np.zeros(spec.n_bin, dtype=int)
    for d, (w, h) in zip(distances, sizes):
        b = int(spec.bin_of(d))
        sw[b] += w
        sh[b] += h
        n[b] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        mw = np.where(n > 0, sw / np.maximum(n, 1), 0.0)
        mh = np.where(n > 0, sh / np.maximum(n, 1), 0.0)
    return BboxStatTable(mw, mh, n)


def build_bbox_table(samples: Sequence, spec: LabelSpec, include_clipped: bool = False) -> BboxStatTable:
    """Table from the ground-truth boxes of training samples.

    Boxes cut by the image border understate the target size and are left
    out unless ``include_clipped``.
    """
    dists, sizes = [], []
    for s in samples:
        for box, d in zip(s.bboxes, s.distances()):
            if box is None or (box.clipped and not include_clipped):
                continue
            dists.append(d)
            sizes.append((box.width, box.height))
    return table_from_boxes(dists, sizes, spec)


def _size(bbox) -> Tuple[float, float]:
    if isinstance(bbox, BBox):
        return bbox.width, bbox.height
    w, h = bbox
    return float(w), float(h)


def bbox_distance_estimate(bbox, table: BboxStatTable) -> int:
    """Nearest valid bin to the box size; ties go to the smaller bin."""
    w, h = _size(bbox)
    if not (w > 0 and h > 0):
        raise ValueError(f"degenerate box of size {w} x {h}")
    if not table.valid.any():
        raise ValueError("table has no valid bins")
    d2 = (table.mean_w - w) ** 2 + (table.mean_h - h) ** 2
    d2 = np.where(table.valid, d2, np.inf)
    return int(np.argmin(d2))


def ideal_detector_histogram(sample, table: BboxStatTable, grid: GridSpec) -> np.ndarray:
    """Per-cell histogram from exact boxes; the cell is taken from the target center."""
    out = np.zeros((grid.h_out, grid.w_out, table.n_bin))
    if sample.count == 0:
        return out
    centers = sample.scene.positions[sample.visible]
    u, v, _ = project_points(sample.camera, centers)
    col, row, _ = grid_cells_of(sample.camera, grid, u, v)
    for box, r, c in zip(sample.bboxes, row, col):
        out[r, c, bbox_distance_estimate(box, table)] += 1
    return out


def correlation(pred, gt) -> Tuple[np.ndarray, np.ndarray]:
    """Lags ``s`` and ``sum_d pred[d] * gt[d - s]`` for every overlap."""
    pred, gt = np.asarray(pred, float), np.asarray(gt, float)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise ValueError("correlation needs two histograms of equal length")
    n = len(pred)
    return np.arange(-(n - 1), n), np.correlate(pred, gt, mode="full")


def correlation_bias(pred, gt) -> int:
    """Lag of maximal correlation; positive means predictions sit further away.

    Ties go to the smallest ``|s|``, then to the negative lag.
    """
    pred, gt = np.asarray(pred, float), np.asarray(gt, float)
    if not pred.any() or not gt.any():
        raise ValueError("correlation bias is undefined for an all-zero histogram")
    lags, c = correlation(pred, gt)
    best = c.max()
    tied = lags[c >= best - 1e-12 * abs(best)]
    return int(min(tied, key=lambda s: (abs(s), s)))


def unclipped_size(cam: CameraIntrinsics, pose: UavPose, model: TargetModel) -> Tuple[float, float]:
    """Box size of the projected target ignoring the image border."""
    u, v, front = project_points(cam, model_corners_world(pose, model))
    if not front.all():
        raise ValueError("target not fully in front of the camera")
    return float(u.max() - u.min()), float(v.max() - v.min())


def canonical_table(cam: CameraIntrinsics, spec: LabelSpec, model: TargetModel = TargetModel()) -> BboxStatTable:
    """Table from one unrotated on-axis target at every bin center."""
    dists = [(b + 0.5) * spec.delta_d for b in range(spec.n_bin)]
    sizes = [unclipped_size(cam, UavPose.from_euler((0.0, 0.0, d)), model) for d in dists]
    return table_from_boxes(dists, sizes, spec)


@dataclass(frozen=True)
class BiasRow:
    tilt_deg: float
    true_bin: int
    bbox_bin: int
    bbox_error: int
    label_bin: int
    label_error: int
    width: float
    height: float


def bias_study(cam: CameraIntrinsics = CameraIntrinsics(), spec: LabelSpec = LabelSpec(),
               model: TargetModel = TargetModel(), distance: float = 5.5,
               tilts: Sequence[float] = tuple(range(0, 61, 5))) -> List[BiasRow]:
    """Sweep the relative pitch of an on-axis target at a fixed distance.

    The box estimate uses :func:`canonical_table`; the density label is the
    raw histogram bin, which depends on the distance only.
    """
    table = canonical_table(cam, spec, model)
    true_bin = int(spec.bin_of(distance))
    rows = []
    for t in tilts:
        pose = UavPose.from_euler((0.0, 0.0, distance), pitch=math.radians(t))
        w, h = unclipped_size(cam, pose, model)
        est = bbox_distance_estimate((w, h), table)
        scene = Scene.from_poses([pose.position], [[0.0, math.radians(t), 0.0]])
        label_bin = int(np.argmax(raw_histogram(scene, cam, GridSpec(1, 1), spec)[0, 0]))
        rows.append(BiasRow(float(t), true_bin, est, est - true_bin, label_bin, label_bin - true_bin, w, h))
    return rows


def bias_rows_to_csv(rows: Sequence[BiasRow], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["tilt_deg", "true_bin", "bbox_bin", "bbox_error_bins", "label_bin", "label_error_bins",
                     "bbox_w_px", "bbox_h_px"])
        for r in rows:
            wr.writerow([format(r.tilt_deg, "g"), r.true_bin, r.bbox_bin, r.bbox_error, r.label_bin,
                         r.label_error, format(r.width, ".9g"), format(r.height, ".9g")])
    return path

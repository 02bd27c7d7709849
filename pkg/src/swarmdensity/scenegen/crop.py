"""Crop-window selection biased toward windows holding nearby UAVs."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import CameraIntrinsics, GridSpec, Scene, TargetModel, project_points
from ..labeling import LabelSpec
from .config import GenConfig, RenderStyle
from .render import render_scene
from .sample import Sample, annotate


def near_window_mask(scene: Scene, cam: CameraIntrinsics, width: int, height: int,
                     near_threshold: float) -> np.ndarray:
    """Boolean map over top-left corners ``[v0, u0]``: window holds a near UAV center."""
    nu, nv = cam.width - width + 1, cam.height - height + 1
    if nu < 1 or nv < 1:
        raise ValueError("source image is smaller than the crop")
    mask = np.zeros((nv, nu), dtype=bool)
    if len(scene) == 0:
        return mask
    u, v, front = project_points(cam, scene.positions)
    near = front & (scene.distances < near_threshold)
    for ui, vi in zip(u[near], v[near]):
        if not (0 <= ui < cam.width and 0 <= vi < cam.height):
            continue
        # u0 <= u < u0 + width
        a = max(math.floor(ui - width) + 1, 0)
        b = min(math.floor(ui), nu - 1)
        c = max(math.floor(vi - height) + 1, 0)
        d = min(math.floor(vi), nv - 1)
        if a <= b and c <= d:
            mask[c:d + 1, a:b + 1] = True
    return mask


def window_weights(mask: np.ndarray, bias: float) -> np.ndarray:
    """Sampling weights: ``bias`` for windows holding a near UAV, 1 elsewhere."""
    if math.isinf(bias):
        w = mask.astype(float) if mask.any() else np.ones(mask.shape)
    else:
        w = np.where(mask, bias, 1.0)
    return w / w.sum()


def choose_window(rng: np.random.Generator, scene: Scene, cam: CameraIntrinsics, width: int,
                  height: int, near_threshold: float, bias: float):
    mask = near_window_mask(scene, cam, width, height, near_threshold)
    p = window_weights(mask, bias).ravel()
    # inverse-CDF draw keeps the stream usage at exactly one uniform
    idx = int(np.searchsorted(np.cumsum(p), rng.uniform() * p.sum(), side="right"))
    idx = min(idx, p.size - 1)
    v0, u0 = divmod(idx, mask.shape[1])
    return int(u0), int(v0)


def crop_biased(rng: np.random.Generator, scene: Scene, source_cam: CameraIntrinsics,
                cfg: GenConfig, width: int, height: int, grid: GridSpec, spec: LabelSpec,
                style: RenderStyle = RenderStyle(), model: TargetModel = TargetModel(),
                render_rng=None, source_index: int = 0) -> Sample:
    """Pick a crop window and return the rendered, labeled crop.

    Labels and bboxes use the crop's virtual camera, whose principal point is
    shifted by the window offset.
    """
    u0, v0 = choose_window(rng, scene, source_cam, width, height, cfg.near_threshold, cfg.crop_bias)
    window = (u0, v0, width, height)
    image = render_scene(scene, source_cam, style, render_rng, model, window=window)
    return annotate(image, scene, source_cam.shifted(u0, v0, width, height), grid, spec, model,
                    source_index, window)

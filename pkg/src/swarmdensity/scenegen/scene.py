"""Random UAV group placement in the camera frame."""

from __future__ import annotations

import math

import numpy as np

from ..errors import GenerationError
from ..geometry import CameraIntrinsics, Scene, TargetModel
from .config import GenConfig

_BATCH = 16
_GROUP_RESTARTS = 8


def _split_counts(rng: np.random.Generator, n: int, groups: int) -> list:
    if groups <= 1:
        return [n]
    cuts = np.sort(rng.choice(np.arange(1, n), size=groups - 1, replace=False))
    return list(np.diff(np.concatenate([[0], cuts, [n]])).astype(int))


def _random_ray(rng, cam: CameraIntrinsics, margin: float) -> np.ndarray:
    u = rng.uniform(margin * cam.width, (1 - margin) * cam.width)
    v = rng.uniform(margin * cam.height, (1 - margin) * cam.height)
    ray = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
    return ray / np.linalg.norm(ray)


def _ball(rng, n: int, radius: float) -> np.ndarray:
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.uniform(0, 1, size=(n, 1)) ** (1.0 / 3.0))


class _Placer:
    def __init__(self, cam: CameraIntrinsics, cfg: GenConfig, min_sep: float):
        self.cam = cam
        self.cfg = cfg
        self.min_sep = min_sep
        self.points = np.zeros((0, 3))

    def valid(self, cand: np.ndarray, lo: float, hi: float) -> np.ndarray:
        cam, m = self.cam, self.cfg.frustum_margin
        z = cand[:, 2]
        ok = z > 0
        zs = np.where(ok, z, 1.0)
        u = cam.fx * cand[:, 0] / zs + cam.cx
        v = cam.fy * cand[:, 1] / zs + cam.cy
        ok &= (u >= m * cam.width) & (u < (1 - m) * cam.width)
        ok &= (v >= m * cam.height) & (v < (1 - m) * cam.height)
        norm = np.linalg.norm(cand, axis=1)
        ok &= (norm >= lo) & (norm < hi)
        if len(self.points):
            d2 = ((cand[:, None, :] - self.points[None, :, :]) ** 2).sum(-1)
            ok &= (d2 >= self.min_sep ** 2).all(axis=1)
        return ok

    def place_group(self, rng, size: int, centroid_range, radius: float, norm_range) -> bool:
        for _ in range(_GROUP_RESTARTS):
            dist = rng.uniform(*centroid_range)
            centroid = dist * _random_ray(rng, self.cam, self.cfg.frustum_margin)
            placed = []
            for _ in range(size):
                for _ in range(self.cfg.max_retries):
                    cand = centroid + _ball(rng, _BATCH, radius)
                    ok = self.valid(cand, *norm_range)
                    if ok.any():
                        p = cand[np.argmax(ok)]
                        placed.append(p)
                        self.points = np.vstack([self.points, p])
                        break
                else:
                    break
            if len(placed) == size:
                return True
            self.points = self.points[: len(self.points) - len(placed)]
        return False


def sample_scene(rng: np.random.Generator, cfg: GenConfig, cam: CameraIntrinsics,
                 model: TargetModel = TargetModel()) -> Scene:
    """Draw one scene: at most one group near the camera, the rest in far groups.

    Every UAV center projects inside ``cam`` (minus the frustum margin),
    near-group members stay below ``cfg.near_threshold`` while far-group
    members stay at or beyond it, and no two centers are closer than twice
    the model diagonal.  Positions are rounded to 1e-6 m and angles to
    1e-6 rad so that serialized scenes reproduce labels exactly.
    """
    n = int(rng.integers(cfg.min_count, cfg.max_count + 1))
    placer = _Placer(cam, cfg, 2.0 * model.diagonal)

    n_near = 0
    if rng.uniform() < cfg.near_prob:
        n_near = int(rng.integers(1, min(cfg.near_group_max, n) + 1))
        r = cfg.near_group_radius
        ok = placer.place_group(
            rng, n_near,
            (cfg.near_min_distance + r, cfg.near_threshold - r), r,
            (cfg.near_min_distance, cfg.near_threshold))
        if not ok:
            raise GenerationError(f"could not place a near group of {n_near}")

    n_far = n - n_near
    if n_far:
        groups = int(rng.integers(1, min(cfg.far_groups_max, n_far) + 1))
        for size in _split_counts(rng, n_far, groups):
            r = cfg.far_group_radius * max(1.0, (size / 8.0) ** (1.0 / 3.0))
            lo = cfg.near_threshold + r
            ok = placer.place_group(
                rng, size, (lo, max(lo, cfg.far_max_distance)), r,
                (cfg.near_threshold, math.inf))
            if not ok:
                raise GenerationError(f"could not place a far group of {size}")

    tilt = math.radians(cfg.max_tilt_deg)
    angles = np.column_stack([
        rng.uniform(-math.pi, math.pi, n),
        rng.uniform(-tilt, tilt, n),
        rng.uniform(-tilt, tilt, n),
    ])
    return Scene(np.round(placer.points, 6), np.round(angles, 6))

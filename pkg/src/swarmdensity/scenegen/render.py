"""Flat-shaded silhouette rasterizer and binary PPM I/O."""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ..geometry import CameraIntrinsics, Scene, TargetModel, project_points, rotation_from_euler
from .config import RenderStyle

Window = Tuple[int, int, int, int]  # u0, v0, width, height


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull (Andrew's monotone chain)."""
    pts = sorted(map(tuple, np.asarray(points, dtype=float)))
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def fill_convex(img: np.ndarray, hull: np.ndarray, color) -> int:
    """Paint pixels whose centers fall inside ``hull``; returns the number painted."""
    h, w = img.shape[:2]
    if len(hull) < 3:
        return 0
    i0 = max(int(np.floor(hull[:, 0].min() - 0.5)), 0)
    i1 = min(int(np.ceil(hull[:, 0].max() - 0.5)), w - 1)
    j0 = max(int(np.floor(hull[:, 1].min() - 0.5)), 0)
    j1 = min(int(np.ceil(hull[:, 1].max() - 0.5)), h - 1)
    if i0 > i1 or j0 > j1:
        return 0
    uu, vv = np.meshgrid(np.arange(i0, i1 + 1) + 0.5, np.arange(j0, j1 + 1) + 0.5)
    inside = np.ones(uu.shape, dtype=bool)
    nxt = np.roll(hull, -1, axis=0)
    for (ax, ay), (bx, by) in zip(hull, nxt):
        inside &= (bx - ax) * (vv - ay) - (by - ay) * (uu - ax) >= 0
    img[j0:j1 + 1, i0:i1 + 1][inside] = color
    return int(inside.sum())


def background(rng: np.random.Generator, width: int, height: int, style: RenderStyle) -> np.ndarray:
    t = (np.arange(height) / max(height - 1, 1))[:, None, None]
    top = np.array(style.sky_top, dtype=float)
    bottom = np.array(style.sky_bottom, dtype=float)
    img = (1 - t) * top + t * bottom
    img = np.broadcast_to(img, (height, width, 3)).astype(float)
    img = img + rng.integers(-style.noise, style.noise + 1, size=(height, width, 3))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def body_colors(rng: np.random.Generator, n: int, style: RenderStyle) -> np.ndarray:
    jitter = rng.integers(-style.body_jitter, style.body_jitter + 1, size=(n, 3))
    return np.clip(np.array(style.body) + jitter, 0, 255).astype(np.uint8)


def _draw_targets(img, scene: Scene, cam: CameraIntrinsics, colors, model: TargetModel):
    corners = model.corners
    order = np.argsort(-scene.distances, kind="stable")  # far first
    for i in order:
        p = scene.positions[i]
        world = corners @ rotation_from_euler(*scene.angles[i]).T + p
        u, v, front = project_points(cam, world)
        if not front.all():
            continue
        painted = fill_convex(img, convex_hull(np.column_stack([u, v])), colors[i])
        if painted == 0:
            # sub-pixel target: mark the pixel holding its center
            cu = cam.fx * p[0] / p[2] + cam.cx
            cv = cam.fy * p[1] / p[2] + cam.cy
            if 0 <= cu < cam.width and 0 <= cv < cam.height:
                img[int(cv), int(cu)] = colors[i]


def render_scene(scene: Scene, cam: CameraIntrinsics, style: RenderStyle = RenderStyle(),
                 rng: Optional[np.random.Generator] = None, model: TargetModel = TargetModel(),
                 window: Optional[Window] = None) -> np.ndarray:
    """Render ``scene`` as seen by ``cam``; optionally only the pixel ``window``.

    The background and per-UAV colors are drawn for the full sensor before
    the window is cut, so rendering a window equals cropping a full render.
    Nearer UAVs are painted last and occlude farther ones.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    full = background(rng, cam.width, cam.height, style)
    colors = body_colors(rng, len(scene), style)
    if window is None:
        _draw_targets(full, scene, cam, colors, model)
        return full
    u0, v0, w, h = window
    img = full[v0:v0 + h, u0:u0 + w].copy()
    _draw_targets(img, scene, cam.shifted(u0, v0, w, h), colors, model)
    return img


def write_ppm(path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields, pos = [], 0
    # header: magic, width, height, maxval separated by single whitespace runs
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # exactly one whitespace byte before the raster
    if fields[0] != b"P6" or fields[3] != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = int(fields[1]), int(fields[2])
    pixels = data[pos:]
    if len(pixels) != w * h * 3:
        raise ValueError(f"{path}: pixel payload has wrong size")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3).copy()

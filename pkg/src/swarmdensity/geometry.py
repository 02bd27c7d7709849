"""Pinhole camera, UAV poses, target projection and image-grid assignment.

Frames follow the usual optical convention: x right, y down, z forward.
All lengths are meters, image coordinates are pixels with the origin at the
top-left corner of the top-left pixel (pixel ``(i, j)`` covers
``[i, i + 1) x [j, j + 1)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import DegenerateProjectionError


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 300.0
    fy: float = 300.0
    cx: float = 150.0
    cy: float = 150.0
    width: int = 300
    height: int = 300
    # crop windows of a larger sensor may see the principal point off-image
    windowed: bool = False

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("width", "height"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        if not self.windowed and not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def shifted(self, u0: int, v0: int, width: int, height: int) -> "CameraIntrinsics":
        """Virtual camera of the window whose top-left pixel is ``(u0, v0)``."""
        return CameraIntrinsics(self.fx, self.fy, self.cx - u0, self.cy - v0, width, height,
                                windowed=True)

    def scaled(self, factor: int) -> "CameraIntrinsics":
        """Same focal length on a sensor ``factor`` times larger per axis, centred."""
        return CameraIntrinsics(self.fx, self.fy, self.cx * factor, self.cy * factor,
                                self.width * factor, self.height * factor)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height, "windowed": self.windowed}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]), bool(d.get("windowed", False)))


@dataclass(frozen=True)
class TargetModel:
    """Axis-aligned box standing in for the UAV body.

    Half-extents are given in the body frame, which coincides with the camera
    frame for an unrotated pose (so ``half_y`` is the vertical half-height).
    The default is a 0.45 x 0.45 x 0.25 m F450-class frame.
    """

    half_x: float = 0.225
    half_y: float = 0.125
    half_z: float = 0.225

    def __post_init__(self):
        if min(self.half_x, self.half_y, self.half_z) <= 0:
            raise ValueError("half-extents must be positive")

    @property
    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                         dtype=float)
        return signs * np.array([self.half_x, self.half_y, self.half_z])

    @property
    def diagonal(self) -> float:
        return 2.0 * math.sqrt(self.half_x ** 2 + self.half_y ** 2 + self.half_z ** 2)


def rotation_from_euler(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Rotation ``R = Ry(yaw) @ Rx(pitch) @ Rz(roll)`` in the camera frame.

    Yaw turns about the vertical (camera y) axis, pitch tilts about camera x,
    roll about camera z.
    """
    cy_, sy_ = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    ry = np.array([[cy_, 0.0, sy_], [0.0, 1.0, 0.0], [-sy_, 0.0, cy_]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return ry @ rx @ rz


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    r = np.asarray(r, dtype=float)
    return (r.shape == (3, 3)
            and np.allclose(r.T @ r, np.eye(3), atol=tol)
            and abs(np.linalg.det(r) - 1.0) <= tol)


@dataclass(frozen=True)
class UavPose:
    position: Tuple[float, float, float]
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        rot = np.asarray(self.rotation, dtype=float)
        if not is_rotation(rot):
            raise ValueError("orientation is not a proper rotation")
        object.__setattr__(self, "rotation", rot)

    @classmethod
    def from_euler(cls, position, yaw=0.0, pitch=0.0, roll=0.0) -> "UavPose":
        return cls(tuple(position), rotation_from_euler(yaw, pitch, roll))

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.position))


@dataclass(frozen=True)
class GridSpec:
    w_out: int = 3
    h_out: int = 3

    def __post_init__(self):
        if self.w_out < 1 or self.h_out < 1:
            raise ValueError("grid needs at least one cell per axis")

    @property
    def n_cells(self) -> int:
        return self.w_out * self.h_out

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        w, h = text.lower().split("x")
        return cls(int(w), int(h))

    def __str__(self):
        return f"{self.w_out}x{self.h_out}"


def cell_edges(size: int, n: int) -> np.ndarray:
    """Pixel boundaries of ``n`` cells tiling ``size`` pixels; the last cell takes the remainder."""
    step = size // n
    edges = np.arange(n + 1) * step
    edges[-1] = size
    return edges


@dataclass(frozen=True)
class BBox:
    u0: float
    v0: float
    u1: float
    v1: float
    clipped: bool = False

    @property
    def width(self) -> float:
        return self.u1 - self.u0

    @property
    def height(self) -> float:
        return self.v1 - self.v0

    def as_list(self):
        return [self.u0, self.v0, self.u1, self.v1, self.clipped]


def project_point(cam: CameraIntrinsics, p) -> Optional[Tuple[float, float, float]]:
    x, y, z = (float(c) for c in p)
    if z <= 0:
        return None
    return cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy, z


def project_points(cam: CameraIntrinsics, pts: np.ndarray):
    """Vectorised projection; returns ``(u, v, in_front)`` with NaNs behind the camera."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    z = pts[:, 2]
    front = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(front, cam.fx * pts[:, 0] / z + cam.cx, np.nan)
        v = np.where(front, cam.fy * pts[:, 1] / z + cam.cy, np.nan)
    return u, v, front


def model_corners_world(pose: UavPose, model: TargetModel) -> np.ndarray:
    return model.corners @ pose.rotation.T + np.asarray(pose.position)


def target_bbox(cam: CameraIntrinsics, pose: UavPose, model: TargetModel) -> Optional[BBox]:
    corners = model_corners_world(pose, model)
    u, v, front = project_points(cam, corners)
    if not front.any():
        return None
    if not front.all():
        raise DegenerateProjectionError("target straddles the camera plane")
    u0, u1, v0, v1 = u.min(), u.max(), v.min(), v.max()
    cu0, cu1 = min(max(u0, 0.0), cam.width), min(max(u1, 0.0), cam.width)
    cv0, cv1 = min(max(v0, 0.0), cam.height), min(max(v1, 0.0), cam.height)
    clipped = (cu0, cu1, cv0, cv1) != (u0, u1, v0, v1)
    return BBox(float(cu0), float(cv0), float(cu1), float(cv1), bool(clipped))


def grid_cell_of(cam: CameraIntrinsics, grid: GridSpec, u: float, v: float):
    if not (0 <= u < cam.width and 0 <= v < cam.height):
        return None
    col = min(int(u // (cam.width // grid.w_out)), grid.w_out - 1)
    row = min(int(v // (cam.height // grid.h_out)), grid.h_out - 1)
    return col, row


def grid_cells_of(cam: CameraIntrinsics, grid: GridSpec, u: np.ndarray, v: np.ndarray):
    """Vectorised :func:`grid_cell_of`; returns ``(col, row, inside)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    inside = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    us = np.where(inside, u, 0.0)
    vs = np.where(inside, v, 0.0)
    col = np.minimum((us // (cam.width // grid.w_out)).astype(int), grid.w_out - 1)
    row = np.minimum((vs // (cam.height // grid.h_out)).astype(int), grid.h_out - 1)
    return col, row, inside


@dataclass
class Scene:
    """UAV centers (N x 3, camera frame) and their yaw/pitch/roll angles (N x 3, radians)."""

    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    angles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.angles = np.asarray(self.angles, dtype=float).reshape(-1, 3)
        if len(self.angles) != len(self.positions):
            raise ValueError("positions and angles differ in length")

    def __len__(self):
        return len(self.positions)

    def __eq__(self, other):
        return (isinstance(other, Scene)
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.angles, other.angles))

    @property
    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)

    def pose(self, i: int) -> UavPose:
        return UavPose.from_euler(self.positions[i], *self.angles[i])

    def poses(self):
        return [self.pose(i) for i in range(len(self))]

    @classmethod
    def from_poses(cls, positions, angles=None) -> "Scene":
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        if angles is None:
            angles = np.zeros_like(positions)
        return cls(positions, angles)

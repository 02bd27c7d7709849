from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ..geometry import BBox, CameraIntrinsics, GridSpec, Scene, TargetModel, project_points, target_bbox
from ..labeling import LabelSpec, make_labels


@dataclass
class Sample:
    image: np.ndarray
    scene: Scene
    camera: CameraIntrinsics
    bboxes: List[BBox]
    visible: np.ndarray
    labels: Dict[str, np.ndarray]
    source_index: int = 0
    window: tuple = field(default=(0, 0, 0, 0))

    @property
    def count(self) -> int:
        return len(self.visible)

    def distances(self) -> np.ndarray:
        """Distances of the UAVs visible in the image, in bbox order."""
        return self.scene.distances[self.visible]

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (np.array_equal(self.image, other.image)
                and self.scene == other.scene
                and self.camera == other.camera
                and self.bboxes == other.bboxes
                and np.array_equal(self.visible, other.visible)
                and self.labels.keys() == other.labels.keys()
                and all(np.array_equal(self.labels[m], other.labels[m]) for m in self.labels)
                and self.source_index == other.source_index
                and tuple(self.window) == tuple(other.window))


def visible_indices(scene: Scene, cam: CameraIntrinsics) -> np.ndarray:
    if len(scene) == 0:
        return np.zeros(0, dtype=int)
    u, v, front = project_points(cam, scene.positions)
    with np.errstate(invalid="ignore"):
        inside = front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return np.flatnonzero(inside)


def annotate(image: np.ndarray, scene: Scene, cam: CameraIntrinsics, grid: GridSpec,
             spec: LabelSpec, model: TargetModel = TargetModel(), source_index: int = 0,
             window=(0, 0, 0, 0)) -> Sample:
    """Attach bboxes and labels for everything whose center lands inside ``cam``."""
    vis = visible_indices(scene, cam)
    boxes = [target_bbox(cam, scene.pose(i), model) for i in vis]
    return Sample(image, scene, cam, boxes, vis, make_labels(scene, cam, grid, spec),
                  source_index, tuple(int(x) for x in window))

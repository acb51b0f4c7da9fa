"""Weak ground truth: labelled disparity -> point cloud -> top-view majority vote.

Fed with predicted front-view labels instead of annotations, the same code is
the binocular "with disparity" baseline.
"""

from __future__ import annotations

import json

import numpy as np

from . import kernels
from .camera import CameraRig, backproject_points, disparity_to_depth_array, fov_mask
from .grid import GridMap, GridSpec, world_to_cells

IGNORE = -1


class ClassMapping:
    """Front-view label id (0..255) -> grid class 1..3, 0 (non-ground) or IGNORE."""

    def __init__(self, ground: dict[int, int], ignore=()):
        table = np.zeros(256, dtype=np.int8)
        for label, cls in ground.items():
            label, cls = int(label), int(cls)
            if not 0 <= label < 256:
                raise ValueError(f"label id {label} outside 0..255")
            if cls not in (1, 2, 3):
                raise ValueError(f"ground class for label {label} must be 1, 2 or 3, got {cls}")
            table[label] = cls
        for label in ignore:
            table[int(label)] = IGNORE
        missing = [c for c in (1, 2, 3) if not (table == c).any()]
        if missing:
            raise ValueError(f"mapping has no label for ground classes {missing}")
        self.table = table
        self.table.flags.writeable = False

    def __call__(self, labels) -> np.ndarray:
        return self.table[np.asarray(labels, dtype=np.uint8)]

    def to_dict(self) -> dict:
        ground = {str(i): int(c) for i, c in enumerate(self.table) if c > 0}
        return {"ground": ground, "ignore": [int(i) for i in np.flatnonzero(self.table == IGNORE)]}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassMapping":
        return cls({int(k): v for k, v in d.get("ground", {}).items()}, d.get("ignore", []))

    @classmethod
    def load(cls, path) -> "ClassMapping":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")


def vote_grid(spec: GridSpec, x, y, classes, eval_mask=None) -> GridMap:
    """Majority vote of class-tagged ground positions. Ties resolve to the
    lower class id (non-free space first); cells with no points are class 0."""
    i, j, valid = world_to_cells(spec, x, y)
    cells = i[valid] * spec.cols + j[valid]
    winner, _ = kernels.vote(cells, np.asarray(classes)[valid], spec.rows * spec.cols)
    return GridMap(spec, winner.reshape(spec.shape), eval_mask)


def grid_from_pointlist(points, spec: GridSpec, mask=None) -> GridMap:
    """``points`` is a sequence of (x, y, class) triples."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cls = pts[:, 2].astype(np.int64)
    if cls.size and (cls.min() < 0 or cls.max() > 3):
        raise ValueError("point classes must be in 0..3")
    return vote_grid(spec, pts[:, 0], pts[:, 1], cls, mask)


def project_labeled_cloud(
    disparity,
    labels,
    rig: CameraRig,
    spec: GridSpec,
    mapping: ClassMapping,
    ceiling_m: float | None = None,
) -> GridMap:
    disparity = np.asarray(disparity)
    labels = np.asarray(labels)
    k = rig.intrinsics
    if disparity.shape != (k.height, k.width) or labels.shape != disparity.shape:
        raise ValueError(
            f"disparity {disparity.shape} / labels {labels.shape} do not match "
            f"camera {k.height}x{k.width}"
        )
    mapped = mapping(labels)
    use = (disparity > 0) & (mapped != IGNORE)
    v, u = np.nonzero(use)
    depth = disparity_to_depth_array(disparity[v, u], rig)
    pts = backproject_points(u, v, depth, rig)
    cls = mapped[v, u].astype(np.int64)
    if ceiling_m is not None:
        keep = pts[:, 2] <= ceiling_m
        pts, cls = pts[keep], cls[keep]
    return vote_grid(spec, pts[:, 0], pts[:, 1], cls, fov_mask(rig, spec))

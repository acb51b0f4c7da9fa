"""Monocular baseline: every ground-labelled pixel is assumed to lie on z = 0."""

import numpy as np

from .camera import CameraRig, fov_mask, ray_ground_intersections
from .grid import GridMap, GridSpec
from .weakgt import ClassMapping, vote_grid


def flatplane_map(labels, rig: CameraRig, spec: GridSpec, mapping: ClassMapping) -> GridMap:
    labels = np.asarray(labels)
    k = rig.intrinsics
    if labels.shape != (k.height, k.width):
        raise ValueError(f"labels {labels.shape} do not match camera {k.height}x{k.width}")
    mapped = mapping(labels)
    v, u = np.nonzero(mapped > 0)
    x, y, hit = ray_ground_intersections(u, v, rig)
    cls = mapped[v, u].astype(np.int64)
    return vote_grid(spec, x[hit], y[hit], cls[hit], fov_mask(rig, spec))

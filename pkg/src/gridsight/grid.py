"""Semantic occupancy grid model, coordinate conventions and grid files.

Vehicle frame: x forward, y left, z up. Grid row 0 is the farthest row,
column 0 the leftmost. The near edge of the grid sits ``x_offset_m`` ahead of
the vehicle origin. Coverage is half-open: x in [x0, x0 + rows*cell) and
y in (-W/2, W/2] with W = cols*cell.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .netpbm import ImageFormatError, read_pgm, write_pgm

NUM_CLASSES = 4


class SemanticClass(enum.IntEnum):
    NON_FREE = 0
    ROAD = 1
    SIDEWALK = 2
    TERRAIN = 3


class GridFileError(ValueError):
    """Malformed grid file pair."""


@dataclass(frozen=True)
class GridSpec:
    rows: int = 64
    cols: int = 64
    cell_size_m: float = 0.5
    x_offset_m: float = 5.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one row and column")
        if not self.cell_size_m > 0:
            raise ValueError("cell_size_m must be positive")

    @classmethod
    def high_res(cls) -> "GridSpec":
        """128 x 128 cells of 0.25 m: the same 32 x 32 m footprint."""
        return cls(rows=128, cols=128, cell_size_m=0.25)

    @classmethod
    def for_size(cls, n: int) -> "GridSpec":
        """Square grid with ``n`` cells per side covering the default footprint."""
        return cls(rows=n, cols=n, cell_size_m=32.0 / n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def width_m(self) -> float:
        return self.cols * self.cell_size_m

    @property
    def depth_m(self) -> float:
        return self.rows * self.cell_size_m

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "cell_size_m": self.cell_size_m,
            "x_offset_m": self.x_offset_m,
        }


def cell_center(spec: GridSpec, i: int, j: int) -> tuple[float, float]:
    if not (0 <= i < spec.rows and 0 <= j < spec.cols):
        raise IndexError(f"cell ({i}, {j}) outside {spec.rows}x{spec.cols} grid")
    c = spec.cell_size_m
    x = spec.x_offset_m + (spec.rows - 1 - i + 0.5) * c
    y = (spec.cols / 2) * c - (j + 0.5) * c
    return x, y


def cell_centers(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vehicle-frame (x, y) of every cell center as two rows x cols arrays."""
    c = spec.cell_size_m
    i = np.arange(spec.rows, dtype=np.float64)[:, None]
    j = np.arange(spec.cols, dtype=np.float64)[None, :]
    x = spec.x_offset_m + (spec.rows - 1 - i + 0.5) * c
    y = (spec.cols / 2) * c - (j + 0.5) * c
    return np.broadcast_to(x, spec.shape).copy(), np.broadcast_to(y, spec.shape).copy()


def world_to_cell(spec: GridSpec, x: float, y: float) -> tuple[int, int] | None:
    c = spec.cell_size_m
    half_w = spec.width_m / 2
    fi = math.floor((x - spec.x_offset_m) / c)
    fj = math.floor((half_w - y) / c)
    if not (0 <= fi < spec.rows and 0 <= fj < spec.cols):
        return None
    return spec.rows - 1 - fi, fj


def world_to_cells(spec: GridSpec, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`world_to_cell`; returns (rows, cols, valid)."""
    c = spec.cell_size_m
    fi = np.floor((np.asarray(x, dtype=np.float64) - spec.x_offset_m) / c)
    fj = np.floor((spec.width_m / 2 - np.asarray(y, dtype=np.float64)) / c)
    valid = (fi >= 0) & (fi < spec.rows) & (fj >= 0) & (fj < spec.cols)
    i = np.where(valid, spec.rows - 1 - fi, -1).astype(np.int64)
    j = np.where(valid, fj, -1).astype(np.int64)
    return i, j, valid


class GridMap:
    """Categorical grid plus evaluation mask (True = evaluate)."""

    __slots__ = ("spec", "classes", "eval_mask")

    def __init__(self, spec: GridSpec, classes, eval_mask=None):
        classes = np.asarray(classes)
        if classes.shape != spec.shape:
            raise ValueError(f"classes shape {classes.shape} != grid shape {spec.shape}")
        if classes.size and (classes.min() < 0 or classes.max() >= NUM_CLASSES):
            raise ValueError("class values must be in 0..3")
        if eval_mask is None:
            eval_mask = np.ones(spec.shape, dtype=bool)
        eval_mask = np.asarray(eval_mask, dtype=bool)
        if eval_mask.shape != spec.shape:
            raise ValueError(f"mask shape {eval_mask.shape} != grid shape {spec.shape}")
        self.spec = spec
        self.classes = classes.astype(np.uint8)
        self.eval_mask = eval_mask.copy()
        self.classes.flags.writeable = False
        self.eval_mask.flags.writeable = False

    @classmethod
    def empty(cls, spec: GridSpec, eval_mask=None) -> "GridMap":
        return cls(spec, np.zeros(spec.shape, dtype=np.uint8), eval_mask)

    def with_mask(self, eval_mask) -> "GridMap":
        return GridMap(self.spec, self.classes, eval_mask)

    def one_hot(self) -> np.ndarray:
        """4 x rows x cols float32 encoding."""
        return (np.arange(NUM_CLASSES)[:, None, None] == self.classes[None]).astype(np.float32)

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            self.spec == other.spec
            and np.array_equal(self.classes, other.classes)
            and np.array_equal(self.eval_mask, other.eval_mask)
        )

    def __repr__(self):
        counts = np.bincount(self.classes.ravel(), minlength=NUM_CLASSES).tolist()
        return f"GridMap({self.spec.rows}x{self.spec.cols}, class_counts={counts})"


def _stem(path) -> str:
    path = os.fspath(path)
    root, ext = os.path.splitext(path)
    return root if ext.lower() in (".json", ".pgm") else path


def write_grid(grid: GridMap, path) -> str:
    """Write ``<name>.pgm``, ``<name>_mask.pgm`` and ``<name>.json``; returns the json path."""
    stem = _stem(path)
    mask_name = os.path.basename(stem) + "_mask.pgm"
    write_pgm(stem + ".pgm", grid.classes)
    write_pgm(os.path.join(os.path.dirname(stem), mask_name), grid.eval_mask.astype(np.uint8) * 255)
    meta = dict(grid.spec.to_dict(), mask_file=mask_name)
    with open(stem + ".json", "w") as f:
        json.dump(meta, f, indent=1)
        f.write("\n")
    return stem + ".json"


def read_grid(path) -> GridMap:
    stem = _stem(path)
    try:
        with open(stem + ".json") as f:
            meta = json.load(f)
        spec = GridSpec(
            rows=int(meta["rows"]),
            cols=int(meta["cols"]),
            cell_size_m=float(meta["cell_size_m"]),
            x_offset_m=float(meta["x_offset_m"]),
        )
        mask_file = meta["mask_file"]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise GridFileError(f"{stem}.json: malformed metadata ({exc})") from exc
    except ValueError as exc:
        raise GridFileError(f"{stem}.json: {exc}") from exc
    try:
        classes = read_pgm(stem + ".pgm")
        mask_raw = read_pgm(os.path.join(os.path.dirname(stem), mask_file))
    except ImageFormatError as exc:
        raise GridFileError(str(exc)) from exc
    if classes.shape != spec.shape or mask_raw.shape != spec.shape:
        raise GridFileError(f"{stem}: raster dimensions do not match metadata {spec.shape}")
    if classes.max(initial=0) >= NUM_CLASSES:
        raise GridFileError(f"{stem}.pgm: class value {int(classes.max())} outside 0..3")
    if not np.isin(mask_raw, (0, 255)).all():
        raise GridFileError(f"{stem}: mask values must be 0 or 255")
    return GridMap(spec, classes, mask_raw == 255)


PALETTE = np.array([[0, 0, 0], [128, 64, 128], [244, 35, 232], [152, 251, 152]], dtype=np.uint8)


def colorize(grid: GridMap) -> np.ndarray:
    """rows x cols x 3 uint8 picture; cells outside the eval mask are darkened by half."""
    rgb = PALETTE[grid.classes].astype(np.uint16)
    rgb[~grid.eval_mask] //= 2
    return rgb.astype(np.uint8)

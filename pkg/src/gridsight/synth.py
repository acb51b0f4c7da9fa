"""Procedural road scenes, analytic top-view truth and a ray-cast renderer.

The layout is a road band around a (parabolic) centreline, sidewalks on both
sides, terrain beyond them and "other" ground further out. Beyond
``slope_start_m`` the ground rises or falls with ``slope_grade``. Obstacles
are axis-aligned boxes standing on the ground.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .camera import CameraRig, cityscapes_like_rig, fov_mask, pixel_rays, save_rig
from .grid import GridMap, GridSpec, cell_centers, write_grid
from .netpbm import write_pfm, write_pgm, write_ppm
from .weakgt import ClassMapping

# front-view label ids (Cityscapes numbering)
LABEL_OTHER_GROUND = 6
LABEL_ROAD = 7
LABEL_SIDEWALK = 8
LABEL_TERRAIN = 22
LABEL_SKY = 23
LABEL_OBSTACLE = 26

MAX_RANGE_M = 500.0

BASE_COLORS = {
    LABEL_ROAD: (88, 86, 92),
    LABEL_SIDEWALK: (176, 160, 146),
    LABEL_TERRAIN: (86, 138, 58),
    LABEL_OTHER_GROUND: (128, 104, 84),
}


def default_mapping() -> ClassMapping:
    return ClassMapping({LABEL_ROAD: 1, LABEL_SIDEWALK: 2, LABEL_TERRAIN: 3})


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    size_x: float
    size_y: float
    height: float

    def bounds(self) -> tuple[float, float, float, float]:
        return (
            self.x - self.size_x / 2,
            self.x + self.size_x / 2,
            self.y - self.size_y / 2,
            self.y + self.size_y / 2,
        )


@dataclass(frozen=True)
class SceneSpec:
    road_half_width_m: float = 3.5
    road_curvature: float = 0.0
    sidewalk_width_m: tuple[float, float] = (2.0, 2.0)
    # None = terrain extends without limit
    terrain_width_m: tuple[float | None, float | None] = (None, None)
    slope_grade: float = 0.0
    slope_start_m: float = 10.0
    obstacles: tuple[Box, ...] = field(default_factory=tuple)
    texture_seed: int = 0

    def __post_init__(self):
        widths = [self.road_half_width_m, *self.sidewalk_width_m]
        widths += [w for w in self.terrain_width_m if w is not None]
        if any(w < 0 for w in widths):
            raise ValueError("widths must be non-negative")
        if abs(self.road_curvature) > 0.02:
            raise ValueError("|road_curvature| must not exceed 0.02 1/m")
        if abs(self.slope_grade) > 0.15:
            raise ValueError("|slope_grade| must not exceed 0.15")
        for b in self.obstacles:
            if min(b.size_x, b.size_y, b.height) <= 0:
                raise ValueError("obstacle sizes must be positive")

    def check_coverage(self, spec: GridSpec) -> None:
        x_far = spec.x_offset_m + spec.depth_m
        half_w = spec.width_m / 2
        for b in self.obstacles:
            x0, x1, y0, y1 = b.bounds()
            if x0 < spec.x_offset_m or x1 > x_far or y0 < -half_w or y1 > half_w:
                raise ValueError(f"obstacle {b} leaves grid coverage")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["sidewalk_width_m"] = tuple(d.get("sidewalk_width_m", (2.0, 2.0)))
        d["terrain_width_m"] = tuple(d.get("terrain_width_m", (None, None)))
        d["obstacles"] = tuple(Box(**b) for b in d.get("obstacles", ()))
        return cls(**d)


def ground_height(scene: SceneSpec, x):
    return scene.slope_grade * np.maximum(0.0, np.asarray(x, dtype=np.float64) - scene.slope_start_m)


def layout_labels(scene: SceneSpec, x, y) -> np.ndarray:
    """Front-view label id of the ground surface at vehicle-frame (x, y)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = y - 0.5 * scene.road_curvature * x * x
    side = np.where(d >= 0, 0, 1)
    a = np.abs(d)
    sidewalk = np.where(side == 0, *scene.sidewalk_width_m)
    t_left, t_right = (math.inf if w is None else w for w in scene.terrain_width_m)
    terrain = np.where(side == 0, t_left, t_right)
    edge_road = scene.road_half_width_m
    edge_side = edge_road + sidewalk
    out = np.full(a.shape, LABEL_OTHER_GROUND, dtype=np.uint8)
    out[a <= edge_side + terrain] = LABEL_TERRAIN
    out[a <= edge_side] = LABEL_SIDEWALK
    out[a <= edge_road] = LABEL_ROAD
    return out


def _segments_hit_box(x0, y0, x1, y1, box: Box) -> np.ndarray:
    """Does each 2-D segment (x0, y0) -> (x1, y1) touch the box footprint?"""
    bx0, bx1, by0, by1 = box.bounds()
    dx = x1 - x0
    dy = y1 - y0
    lo = np.zeros(np.shape(x1))
    hi = np.ones(np.shape(x1))
    for p, dp, b0, b1 in ((x0, dx, bx0, bx1), (y0, dy, by0, by1)):
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (b0 - p) / dp
            tb = (b1 - p) / dp
        parallel = dp == 0
        inside = (p >= b0) & (p <= b1)
        t_min = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(ta, tb))
        t_max = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(ta, tb))
        lo = np.maximum(lo, t_min)
        hi = np.minimum(hi, t_max)
    return lo <= hi


def true_grid(scene: SceneSpec, rig: CameraRig, spec: GridSpec, mapping: ClassMapping | None = None) -> GridMap:
    mapping = mapping or default_mapping()
    x, y = cell_centers(spec)
    cls = mapping(layout_labels(scene, x, y)).astype(np.uint8)
    cls[cls > 3] = 0
    half = spec.cell_size_m / 2
    ox, oy = float(rig.origin[0]), float(rig.origin[1])
    blocked = np.zeros(spec.shape, dtype=bool)
    for box in scene.obstacles:
        bx0, bx1, by0, by1 = box.bounds()
        blocked |= (x - half < bx1) & (x + half > bx0) & (y - half < by1) & (y + half > by0)
        blocked |= _segments_hit_box(ox, oy, x, y, box)
    cls[blocked] = 0
    return GridMap(spec, cls, fov_mask(rig, spec))


def _value_noise(seed: int, x, y, scale: float) -> np.ndarray:
    table = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(64, 64))
    fx = np.asarray(x) / scale
    fy = np.asarray(y) / scale
    ix = np.floor(fx)
    iy = np.floor(fy)
    tx = fx - ix
    ty = fy - iy
    tx = tx * tx * (3 - 2 * tx)
    ty = ty * ty * (3 - 2 * ty)
    i0 = ix.astype(np.int64) % 64
    j0 = iy.astype(np.int64) % 64
    i1 = (i0 + 1) % 64
    j1 = (j0 + 1) % 64
    a = table[i0, j0] * (1 - tx) + table[i1, j0] * tx
    b = table[i0, j1] * (1 - tx) + table[i1, j1] * tx
    return a * (1 - ty) + b * ty


def _trace(scene: SceneSpec, rig: CameraRig, dirs: np.ndarray):
    """Nearest hit per ray: (t, label, hit point, obstacle index or -1)."""
    o = rig.origin
    wx, wy, wz = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    shape = wx.shape
    g, s = scene.slope_grade, scene.slope_start_m
    with np.errstate(divide="ignore", invalid="ignore"):
        t_flat = np.where(wz < 0, -o[2] / wz, np.inf)
        x_flat = o[0] + t_flat * wx
        if g != 0:
            t_flat = np.where(x_flat <= s, t_flat, np.inf)
            t_slope = (o[2] - g * (o[0] - s)) / (g * wx - wz)
            x_slope = o[0] + t_slope * wx
            ok = (t_slope > 0) & (x_slope > s) & np.isfinite(t_slope)
            t_ground = np.where(np.isfinite(t_flat), t_flat, np.where(ok, t_slope, np.inf))
        else:
            t_ground = t_flat
    t = t_ground
    which = np.full(shape, -1, dtype=np.int64)
    for k, box in enumerate(scene.obstacles):
        bx0, bx1, by0, by1 = box.bounds()
        zb = float(ground_height(scene, box.x))
        lo = np.zeros(shape)
        hi = np.full(shape, np.inf)
        for p, dp, b0, b1 in ((o[0], wx, bx0, bx1), (o[1], wy, by0, by1), (o[2], wz, zb, zb + box.height)):
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (b0 - p) / dp
                tb = (b1 - p) / dp
            if (dp == 0).any():
                inside = b0 <= p <= b1
                ta = np.where(dp == 0, -np.inf if inside else np.inf, ta)
                tb = np.where(dp == 0, np.inf if inside else -np.inf, tb)
            lo = np.maximum(lo, np.minimum(ta, tb))
            hi = np.minimum(hi, np.maximum(ta, tb))
        t_box = np.where((lo <= hi) & (lo > 0), lo, np.inf)
        closer = t_box < t
        t = np.where(closer, t_box, t)
        which[closer] = k
    sky = ~(t < MAX_RANGE_M)
    t = np.where(sky, np.inf, t)
    tt = np.where(sky, 0.0, t)
    px = o[0] + tt * wx
    py = o[1] + tt * wy
    pz = o[2] + tt * wz
    label = layout_labels(scene, px, py)
    label[which >= 0] = LABEL_OBSTACLE
    label[sky] = LABEL_SKY
    return t, label, (px, py, pz), which


def _shade(scene: SceneSpec, label, point, which, v_norm) -> np.ndarray:
    px, py, pz = point
    seed = scene.texture_seed
    n = 0.6 * _value_noise(seed, px, py, 0.45) + 0.4 * _value_noise(seed + 1, px, py, 2.3)
    rgb = np.zeros(label.shape + (3,))
    for lab, color in BASE_COLORS.items():
        m = label == lab
        rgb[m] = np.asarray(color, dtype=np.float64) * (1 + 0.18 * n[m, None])
    box_rng = np.random.default_rng(seed + 7)
    for k in range(len(scene.obstacles)):
        color = box_rng.uniform(30, 220, size=3)
        m = which == k
        nb = _value_noise(seed + 2, px[m] + py[m], pz[m], 0.6)
        rgb[m] = color * (1 + 0.15 * nb[:, None])
    m = label == LABEL_SKY
    sky = np.array([150.0, 188.0, 232.0])[None] + np.outer(np.clip(v_norm[m], 0, 1), [40.0, 30.0, 10.0])
    rgb[m] = sky
    return np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)


def render(scene: SceneSpec, rig: CameraRig, out_width: int, out_height: int,
           supersample: int = 1, with_rgb: bool = True):
    """Ray-cast the scene. Returns (rgb H x W x 3 uint8 or None, labels uint8, disparity float32).

    The rig is rescaled to the output size. Sky pixels get label 23 and
    disparity 0. ``supersample`` > 1 box-filters the RGB only; labels and
    disparity are always sampled at pixel centres.
    """
    cam = rig.scaled(out_width, out_height)
    k = cam.intrinsics
    u, v = np.meshgrid(np.arange(out_width, dtype=np.float64), np.arange(out_height, dtype=np.float64))
    t, label, point, which = _trace(scene, cam, pixel_rays(u, v, cam))
    disparity = np.where(np.isfinite(t), k.fx * cam.baseline_m / np.where(np.isfinite(t), t, 1.0), 0.0)
    rgb = None
    if with_rgb:
        if supersample == 1:
            rgb = _shade(scene, label, point, which, v / out_height)
        else:
            ss = supersample
            big = rig.scaled(out_width * ss, out_height * ss)
            ub, vb = np.meshgrid(np.arange(out_width * ss, dtype=np.float64),
                                 np.arange(out_height * ss, dtype=np.float64))
            _, lb, pb, wb = _trace(scene, big, pixel_rays(ub, vb, big))
            hi = _shade(scene, lb, pb, wb, vb / (out_height * ss)).astype(np.float64)
            lo = hi.reshape(out_height, ss, out_width, ss, 3).mean(axis=(1, 3))
            rgb = np.floor(lo + 0.5).astype(np.uint8)
    return rgb, label, disparity.astype(np.float32)


DEFAULT_CONFIG = {
    "n_obstacles": [0, 3],
    "slope_fraction": 0.5,
    "image_size": [128, 64],
    "geometry_size": None,
    "rgb_supersample": 2,
    "grid_size": 64,
    "road_half_width_m": [2.5, 6.0],
    "road_curvature": [-0.008, 0.008],
    "sidewalk_width_m": [1.0, 4.0],
    "sidewalk_prob": 0.9,
    "terrain_width_m": [3.0, 12.0],
    "terrain_unbounded_prob": 0.3,
    "slope_grade": [0.05, 0.12],
    "slope_start_m": [8.0, 16.0],
    "obstacle_size_m": [1.5, 4.5],
    "obstacle_height_m": [2.0, 3.5],
    "rig": None,
}


def merged_config(config: dict | None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if config:
        unknown = set(config) - set(cfg)
        if unknown:
            raise ValueError(f"unknown dataset config keys: {sorted(unknown)}")
        cfg.update(config)
    return cfg


def sample_scene(rng: np.random.Generator, cfg: dict, sloped: bool, spec: GridSpec) -> SceneSpec:
    def uni(key):
        lo, hi = cfg[key]
        return float(rng.uniform(lo, hi))

    road = uni("road_half_width_m")
    curvature = uni("road_curvature")
    sidewalks = tuple(uni("sidewalk_width_m") if rng.random() < cfg["sidewalk_prob"] else 0.0 for _ in range(2))
    terrain = tuple(None if rng.random() < cfg["terrain_unbounded_prob"] else uni("terrain_width_m") for _ in range(2))
    grade = 0.0
    start = uni("slope_start_m")
    if sloped:
        grade = uni("slope_grade") * (1 if rng.random() < 0.5 else -1)
    lo, hi = cfg["n_obstacles"]
    boxes = []
    x_near = spec.x_offset_m + 5.0
    x_far = spec.x_offset_m + spec.depth_m
    half_w = spec.width_m / 2
    for _ in range(int(rng.integers(lo, hi + 1))):
        sx, sy = uni("obstacle_size_m"), uni("obstacle_size_m")
        bx = float(rng.uniform(x_near + sx / 2, x_far - sx / 2 - 0.5))
        by = float(rng.uniform(-half_w + sy / 2 + 0.5, half_w - sy / 2 - 0.5))
        boxes.append(Box(bx, by, sx, sy, uni("obstacle_height_m")))
    return SceneSpec(
        road_half_width_m=road,
        road_curvature=curvature,
        sidewalk_width_m=sidewalks,
        terrain_width_m=terrain,
        slope_grade=grade,
        slope_start_m=start,
        obstacles=tuple(boxes),
        texture_seed=int(rng.integers(0, 2**31 - 1)),
    )


def sample_scenes(n: int, config: dict | None = None, seed: int = 0) -> list[SceneSpec]:
    """Deterministic scene list; exactly round(n * slope_fraction) scenes are sloped."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cfg = merged_config(config)
    spec = GridSpec.for_size(cfg["grid_size"])
    root = np.random.SeedSequence(seed)
    order_rng = np.random.default_rng(root.spawn(1)[0])
    n_sloped = int(round(n * cfg["slope_fraction"]))
    sloped = np.zeros(n, dtype=bool)
    sloped[order_rng.permutation(n)[:n_sloped]] = True
    children = np.random.SeedSequence([seed, 1]).spawn(n)
    return [sample_scene(np.random.default_rng(c), cfg, bool(s), spec) for c, s in zip(children, sloped)]


def dataset_rig(cfg: dict) -> CameraRig:
    rig = CameraRig.from_dict(cfg["rig"]) if cfg["rig"] else cityscapes_like_rig()
    if cfg["geometry_size"]:
        w, h = cfg["geometry_size"]
        rig = rig.scaled(int(w), int(h))
    return rig


def _write_scene(out_dir: str, idx: int, scene: SceneSpec, rig: CameraRig, cfg: dict, spec: GridSpec) -> dict:
    sid = f"scene_{idx:05d}"
    k = rig.intrinsics
    img_w, img_h = cfg["image_size"]
    rgb, _, _ = render(scene, rig, img_w, img_h, supersample=cfg["rgb_supersample"])
    _, labels, disparity = render(scene, rig, k.width, k.height, with_rgb=False)
    rec = {
        "id": sid,
        "rgb": f"rgb/{sid}.ppm",
        "labels": f"labels/{sid}.pgm",
        "disparity": f"disparity/{sid}.pfm",
        "true_grid": f"grids/{sid}.json",
        "rig": "rig.json",
        "slope_grade": scene.slope_grade,
        "scene": f"scenes/{sid}.json",
    }
    write_ppm(os.path.join(out_dir, rec["rgb"]), rgb)
    write_pgm(os.path.join(out_dir, rec["labels"]), labels)
    write_pfm(os.path.join(out_dir, rec["disparity"]), disparity)
    write_grid(true_grid(scene, rig, spec), os.path.join(out_dir, rec["true_grid"]))
    with open(os.path.join(out_dir, rec["scene"]), "w") as f:
        json.dump(scene.to_dict(), f, indent=1)
        f.write("\n")
    return rec


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("GRIDSIGHT_THREADS", "1")))
    except ValueError:
        return 1


def generate_dataset(n: int, out_dir, config: dict | None = None, seed: int = 0) -> str:
    """Render ``n`` scenes into ``out_dir``; returns the manifest path."""
    cfg = merged_config(config)
    spec = GridSpec.for_size(cfg["grid_size"])
    scenes = sample_scenes(n, cfg, seed)
    rig = dataset_rig(cfg)
    out_dir = os.fspath(out_dir)
    for sub in ("rgb", "labels", "disparity", "grids", "scenes"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    save_rig(rig, os.path.join(out_dir, "rig.json"))
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(dict(cfg, seed=seed, n=n), f, indent=1, sort_keys=True)
        f.write("\n")

    def job(i):
        return _write_scene(out_dir, i, scenes[i], rig, cfg, spec)

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            records = list(pool.map(job, range(n)))
    else:
        records = [job(i) for i in range(n)]
    manifest = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return manifest


def read_manifest(path) -> tuple[str, list[dict]]:
    """Returns (dataset root, records). Paths in records are relative to the root."""
    root = os.path.dirname(os.path.abspath(path))
    with open(path) as f:
        records = [json.loads(line) for line in f if line.strip()]
    return root, records

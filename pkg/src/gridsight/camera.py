"""Pinhole camera rig, stereo depth, ground-plane rays and FOV masks.

Camera frame: x right, y down, z forward. Pixel centres sit at integer
(u, v); pixel column k covers u in [k - 0.5, k + 0.5).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import GridSpec, cell_centers

# vehicle <- camera rotation for a level, forward-looking camera
LEVEL_ROTATION = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


class InvalidDisparity(ValueError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def hfov_deg(self) -> float:
        return math.degrees(2 * math.atan(self.width / (2 * self.fx)))

    def scaled(self, width: int, height: int) -> "Intrinsics":
        """Same camera resampled to ``width`` x ``height`` pixels."""
        sx = width / self.width
        sy = height / self.height
        return Intrinsics(
            fx=self.fx * sx,
            fy=self.fy * sy,
            cx=(self.cx + 0.5) * sx - 0.5,
            cy=(self.cy + 0.5) * sy - 0.5,
            width=width,
            height=height,
        )


def pose_matrix(x=0.0, y=0.0, z=0.0, pitch_deg=0.0, roll_deg=0.0, yaw_deg=0.0) -> np.ndarray:
    """4x4 camera-to-vehicle transform for a camera at (x, y, z).

    Positive pitch tilts the optical axis down, positive yaw turns it left,
    positive roll rotates the image clockwise as seen by the camera.
    """
    p, r, yw = (math.radians(a) for a in (pitch_deg, roll_deg, yaw_deg))
    rot_pitch = np.array([[math.cos(p), 0, math.sin(p)], [0, 1, 0], [-math.sin(p), 0, math.cos(p)]])
    rot_yaw = np.array([[math.cos(yw), -math.sin(yw), 0], [math.sin(yw), math.cos(yw), 0], [0, 0, 1]])
    rot_roll = np.array([[1, 0, 0], [0, math.cos(r), -math.sin(r)], [0, math.sin(r), math.cos(r)]])
    pose = np.eye(4)
    pose[:3, :3] = rot_yaw @ rot_pitch @ rot_roll @ LEVEL_ROTATION
    pose[:3, 3] = (x, y, z)
    return pose


@dataclass(frozen=True)
class CameraRig:
    intrinsics: Intrinsics
    baseline_m: float
    cam_to_vehicle: np.ndarray = field(default_factory=lambda: pose_matrix())

    def __post_init__(self):
        if not self.baseline_m > 0:
            raise ValueError("baseline must be positive")
        pose = np.array(self.cam_to_vehicle, dtype=np.float64)
        if pose.shape != (4, 4):
            raise ValueError("cam_to_vehicle must be 4x4")
        rot = pose[:3, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9) or abs(np.linalg.det(rot) - 1) > 1e-9:
            raise ValueError("cam_to_vehicle rotation must be orthonormal with det +1")
        if not np.allclose(pose[3], (0, 0, 0, 1)):
            raise ValueError("cam_to_vehicle must be a rigid transform")
        pose.flags.writeable = False
        object.__setattr__(self, "cam_to_vehicle", pose)

    @property
    def rotation(self) -> np.ndarray:
        return self.cam_to_vehicle[:3, :3]

    @property
    def origin(self) -> np.ndarray:
        return self.cam_to_vehicle[:3, 3]

    def scaled(self, width: int, height: int) -> "CameraRig":
        return CameraRig(self.intrinsics.scaled(width, height), self.baseline_m, self.cam_to_vehicle)

    def with_intrinsics(self, intrinsics: Intrinsics) -> "CameraRig":
        return CameraRig(intrinsics, self.baseline_m, self.cam_to_vehicle)

    def __eq__(self, other):
        if not isinstance(other, CameraRig):
            return NotImplemented
        return (
            self.intrinsics == other.intrinsics
            and self.baseline_m == other.baseline_m
            and np.array_equal(self.cam_to_vehicle, other.cam_to_vehicle)
        )

    def __hash__(self):
        return hash((self.intrinsics, self.baseline_m, self.cam_to_vehicle.tobytes()))

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {
            "fx": k.fx,
            "fy": k.fy,
            "cx": k.cx,
            "cy": k.cy,
            "width": k.width,
            "height": k.height,
            "baseline_m": self.baseline_m,
            "cam_to_vehicle": [float(v) for v in self.cam_to_vehicle.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraRig":
        try:
            intr = Intrinsics(
                float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                int(d["width"]), int(d["height"]),
            )
            pose = np.array(d["cam_to_vehicle"], dtype=np.float64)
            baseline = float(d["baseline_m"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed calibration: {exc}") from exc
        if pose.size != 16:
            raise ValueError("cam_to_vehicle must have 16 entries")
        return cls(intr, baseline, pose.reshape(4, 4))


def cityscapes_like_rig() -> CameraRig:
    """Default rig: 2048 x 1024 level camera, f = 2262 px, 0.22 m baseline,
    mounted 1.7 m ahead of the vehicle origin at 1.22 m height."""
    intr = Intrinsics(fx=2262.0, fy=2262.0, cx=1023.5, cy=511.5, width=2048, height=1024)
    return CameraRig(intr, 0.22, pose_matrix(x=1.7, z=1.22))


def load_rig(path) -> CameraRig:
    with open(path) as f:
        return CameraRig.from_dict(json.load(f))


def save_rig(rig: CameraRig, path) -> None:
    with open(path, "w") as f:
        json.dump(rig.to_dict(), f, indent=1)
        f.write("\n")


def disparity_to_depth(d: float, rig: CameraRig) -> float:
    if not d > 0:
        raise InvalidDisparity(f"disparity {d} is not positive")
    return rig.intrinsics.fx * rig.baseline_m / d


def disparity_to_depth_array(disparity, rig: CameraRig) -> np.ndarray:
    """Depth for every pixel; NaN where disparity is not positive."""
    d = np.asarray(disparity, dtype=np.float64)
    depth = np.full(d.shape, np.nan)
    ok = d > 0
    depth[ok] = rig.intrinsics.fx * rig.baseline_m / d[ok]
    return depth


def backproject_points(u, v, depth, rig: CameraRig) -> np.ndarray:
    """Vehicle-frame points (N x 3) for pixel coordinates and camera depth."""
    k = rig.intrinsics
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(depth, dtype=np.float64)
    cam = np.stack([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z], axis=-1)
    return cam @ rig.rotation.T + rig.origin


def backproject(u: float, v: float, depth: float, rig: CameraRig) -> np.ndarray:
    if not depth > 0:
        raise ValueError(f"depth {depth} is not positive")
    return backproject_points(u, v, depth, rig)


def project_points(points, rig: CameraRig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vehicle-frame points -> (u, v, camera depth)."""
    k = rig.intrinsics
    cam = (np.asarray(points, dtype=np.float64) - rig.origin) @ rig.rotation
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * cam[..., 0] / z + k.cx
        v = k.fy * cam[..., 1] / z + k.cy
    return u, v, z


def pixel_rays(u, v, rig: CameraRig) -> np.ndarray:
    """Vehicle-frame ray directions (unnormalised, camera-z component 1)."""
    k = rig.intrinsics
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones(np.broadcast(u, v).shape)], axis=-1)
    return cam @ rig.rotation.T


def ray_ground_intersections(u, v, rig: CameraRig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ground hits: (x, y, hit) where hit is False for horizon/upward rays."""
    w = pixel_rays(u, v, rig)
    oz = rig.origin[2]
    wz = w[..., 2]
    hit = (wz < 0) & (oz > 0)
    t = np.where(hit, -oz / np.where(hit, wz, -1.0), 0.0)
    x = rig.origin[0] + t * w[..., 0]
    y = rig.origin[1] + t * w[..., 1]
    return x, y, hit


def ray_ground_intersection(u: float, v: float, rig: CameraRig) -> tuple[float, float] | None:
    x, y, hit = ray_ground_intersections(u, v, rig)
    if not hit:
        return None
    return float(x), float(y)


def in_image(u, v, intrinsics: Intrinsics) -> np.ndarray:
    return (u >= -0.5) & (u < intrinsics.width - 0.5) & (v >= -0.5) & (v < intrinsics.height - 0.5)


def fov_mask(rig: CameraRig, spec: GridSpec) -> np.ndarray:
    """True where the cell centre on the ground is in front of the camera and inside the image."""
    x, y = cell_centers(spec)
    pts = np.stack([x, y, np.zeros_like(x)], axis=-1)
    u, v, z = project_points(pts, rig)
    with np.errstate(invalid="ignore"):
        return (z > 0) & in_image(u, v, rig.intrinsics)


def resample(image, src_u, src_v, labels: bool = False) -> np.ndarray:
    """Sample ``image`` at fractional source coordinates with edge replication.

    Bilinear for photometric images, nearest neighbour for label images.
    """
    image = np.asarray(image)
    order = 0 if labels else 1
    coords = np.stack([np.asarray(src_v, dtype=np.float64), np.asarray(src_u, dtype=np.float64)])
    if labels:
        # round half up so integer-shifted grids map exactly
        coords = np.floor(coords + 0.5)

    def one(channel):
        out = ndimage.map_coordinates(channel.astype(np.float64), coords, order=order, mode="nearest")
        if np.issubdtype(image.dtype, np.integer):
            info = np.iinfo(image.dtype)
            out = np.clip(np.floor(out + 0.5), info.min, info.max)
        return out.astype(image.dtype)

    if image.ndim == 2:
        return one(image)
    return np.stack([one(image[..., c]) for c in range(image.shape[2])], axis=-1)


def align_to_reference(image, src_rig: CameraRig, ref_rig: CameraRig, labels: bool = False):
    """Crop ``image`` to the reference horizontal FOV, rescale to the reference
    resolution and shift vertically so the principal rows coincide.

    Returns (aligned image, intrinsics of the aligned image).
    """
    src, ref = src_rig.intrinsics, ref_rig.intrinsics
    src_half = math.atan(src.width / (2 * src.fx))
    ref_half = math.atan(ref.width / (2 * ref.fx))
    if src_half < ref_half - 1e-12:
        raise ValueError(
            f"source horizontal FOV {src.hfov_deg:.2f} deg narrower than reference {ref.hfov_deg:.2f} deg"
        )
    crop_w = min(src.width, int(round(2 * src.fx * math.tan(ref_half))))
    left = (src.width - crop_w) // 2
    scale = ref.width / crop_w
    cx_out = (src.cx - left + 0.5) * scale - 0.5
    cy_scaled = (src.cy + 0.5) * scale - 0.5
    shift = ref.cy - cy_scaled
    uo, vo = np.meshgrid(np.arange(ref.width, dtype=np.float64), np.arange(ref.height, dtype=np.float64))
    su = left - 0.5 + (uo + 0.5) / scale
    sv = (vo - shift + 0.5) / scale - 0.5
    out = resample(image, su, sv, labels=labels)
    intr = Intrinsics(src.fx * scale, src.fy * scale, cx_out, ref.cy, ref.width, ref.height)
    return out, intr

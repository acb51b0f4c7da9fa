"""Pitch and roll disturbances simulated on front-view images.

Pitch is a pure vertical shift of round(fy * tan(angle)) pixels; positive
angles (nose down) move content up. Roll is an in-plane rotation about the
image centre; positive angles rotate content counter-clockwise on screen.
Vacated pixels are filled by edge replication.
"""

import math

import numpy as np

from .camera import resample


def pitch_shift_px(fy: float, degrees: float) -> int:
    s = fy * math.tan(math.radians(degrees))
    return int(math.copysign(math.floor(abs(s) + 0.5), s))


def apply_pitch(image, fy: float, degrees: float) -> np.ndarray:
    if not abs(degrees) < 45:
        raise ValueError(f"pitch {degrees} deg out of range (|angle| < 45)")
    image = np.asarray(image)
    shift = pitch_shift_px(fy, degrees)
    rows = np.clip(np.arange(image.shape[0]) + shift, 0, image.shape[0] - 1)
    return image[rows].copy()


def apply_roll(image, degrees: float, labels: bool = False) -> np.ndarray:
    if not abs(degrees) <= 90:
        raise ValueError(f"roll {degrees} deg out of range (|angle| <= 90)")
    image = np.asarray(image)
    if degrees == 0:
        return image.copy()
    h, w = image.shape[:2]
    cu, cv = (w - 1) / 2, (h - 1) / 2
    a = math.radians(degrees)
    uo, vo = np.meshgrid(np.arange(w, dtype=np.float64) - cu, np.arange(h, dtype=np.float64) - cv)
    # inverse rotation: screen-space counter-clockwise with v pointing down
    su = math.cos(a) * uo - math.sin(a) * vo + cu
    sv = math.sin(a) * uo + math.cos(a) * vo + cv
    return resample(image, su, sv, labels=labels)

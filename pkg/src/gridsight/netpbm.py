"""Readers and writers for binary PGM (P5), PPM (P6) and PFM (Pf).

Only 8-bit PGM/PPM are supported. PFM rows are stored bottom-to-top as the
format prescribes; the arrays returned here are top-to-bottom.
"""

from __future__ import annotations

import os

import numpy as np


class ImageFormatError(ValueError):
    """Raised for malformed or unsupported image files."""


def _read_header(buf: bytes, ntokens: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < ntokens:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(buf):
            raise ImageFormatError("truncated header")
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates header and raster
    return tokens, pos + 1


def _read_pnm(path, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    tokens, offset = _read_header(buf, 4)
    if tokens[0] != magic:
        raise ImageFormatError(f"{path}: expected {magic.decode()}, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"{path}: bad header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 256:
        raise ImageFormatError(f"{path}: unsupported size or maxval")
    n = width * height * channels
    raster = np.frombuffer(buf, dtype=np.uint8, count=-1, offset=offset)
    if raster.size != n:
        raise ImageFormatError(f"{path}: expected {n} bytes of pixel data, found {raster.size}")
    shape = (height, width) if channels == 1 else (height, width, channels)
    return raster.reshape(shape).copy()


def _write_pnm(path, magic: bytes, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        if image.min(initial=0) < 0 or image.max(initial=0) > 255:
            raise ImageFormatError("pixel values must lie in 0..255")
        image = image.astype(np.uint8)
    height, width = image.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (width, height))
        f.write(np.ascontiguousarray(image).tobytes())


def read_pgm(path) -> np.ndarray:
    return _read_pnm(path, b"P5", 1)


def write_pgm(path, image) -> None:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ImageFormatError("PGM image must be 2-D")
    _write_pnm(path, b"P5", image)


def read_ppm(path) -> np.ndarray:
    return _read_pnm(path, b"P6", 3)


def write_ppm(path, image) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError("PPM image must be H x W x 3")
    _write_pnm(path, b"P6", image)


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM into a float32 H x W array."""
    with open(path, "rb") as f:
        buf = f.read()
    tokens, offset = _read_header(buf, 4)
    if tokens[0] != b"Pf":
        raise ImageFormatError(f"{path}: only grayscale PFM ('Pf') is supported")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise ImageFormatError(f"{path}: bad header") from exc
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(buf, dtype=dtype, offset=offset)
    if data.size != width * height:
        raise ImageFormatError(f"{path}: expected {width * height} floats, found {data.size}")
    return np.flipud(data.reshape(height, width)).astype(np.float32)


def write_pfm(path, image) -> None:
    image = np.asarray(image, dtype="<f4")
    if image.ndim != 2:
        raise ImageFormatError("PFM image must be 2-D")
    height, width = image.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n%d %d\n-1.0\n" % (width, height))
        f.write(np.ascontiguousarray(np.flipud(image)).tobytes())


def read_image(path) -> np.ndarray:
    """Dispatch on extension (.pgm, .ppm, .pfm)."""
    ext = os.path.splitext(str(path))[1].lower()
    readers = {".pgm": read_pgm, ".ppm": read_ppm, ".pfm": read_pfm}
    if ext not in readers:
        raise ImageFormatError(f"unsupported image extension {ext!r}")
    return readers[ext](path)

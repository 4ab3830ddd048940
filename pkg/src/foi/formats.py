"""Raster file I/O: PNG and binary PGM/PPM through Pillow, plus the FOIM float stream.

FOIM layout (little-endian): ``b"FOIM"``, u32 width, u32 height,
f32 microns_per_pixel, then ``width * height`` f32 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionError, FoiError
from .raster import ImagePlane

FOIM_MAGIC = b"FOIM"
_FOIM_HEADER = struct.Struct("<4sIIf")

# Slides are gigapixel-scale by design.
Image.MAX_IMAGE_PIXELS = None


class FormatError(FoiError, ValueError):
    pass


def write_foim(path, plane: ImagePlane) -> None:
    header = _FOIM_HEADER.pack(FOIM_MAGIC, plane.width, plane.height, plane.microns_per_pixel)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(plane.values, dtype="<f4").tobytes())


def read_foim(path) -> ImagePlane:
    data = Path(path).read_bytes()
    if len(data) < _FOIM_HEADER.size:
        raise FormatError(f"{path}: truncated FOIM header")
    magic, width, height, mpp = _FOIM_HEADER.unpack_from(data)
    if magic != FOIM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _FOIM_HEADER.size + 4 * width * height
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=_FOIM_HEADER.size).reshape(height, width)
    return ImagePlane(values.astype(np.float32), mpp)


def read_image(path) -> np.ndarray:
    """Load an 8-bit grayscale ``(H, W)`` or RGB ``(H, W, 3)`` array from PNG/PGM/PPM."""
    with Image.open(path) as img:
        if img.mode in ("L", "1"):
            return np.asarray(img.convert("L"))
        if img.mode in ("RGBA", "P"):
            img = img.convert("RGB")
        if img.mode != "RGB":
            raise FormatError(f"{path}: unsupported image mode {img.mode}")
        return np.asarray(img)


def image_size(path) -> tuple[int, int]:
    """(width, height) from the header, without decoding pixels."""
    with Image.open(path) as img:
        return img.size


def write_image(path, values) -> None:
    """Save an 8-bit grayscale or RGB array; the format follows the file suffix."""
    if isinstance(values, ImagePlane):
        values = values.values
    arr = np.asarray(values)
    if arr.ndim == 2:
        img = Image.fromarray(arr.astype(np.uint8), mode="L")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        img = Image.fromarray(arr.astype(np.uint8), mode="RGB")
    else:
        raise DimensionError(f"cannot save array of shape {arr.shape}")
    suffix = Path(path).suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        if suffix == ".ppm" and arr.ndim != 3 or suffix == ".pgm" and arr.ndim != 2:
            raise DimensionError(f"{suffix} does not match array of shape {arr.shape}")
        img.save(path, format="PPM")
    elif suffix == ".png":
        img.save(path, format="PNG", compress_level=1)
    else:
        raise FormatError(f"unsupported raster suffix {suffix!r}")


def write_mask(path, mask: ImagePlane) -> None:
    """Binary masks are stored as 0/255 grayscale."""
    write_image(path, (np.asarray(mask.values) > 0).astype(np.uint8) * 255)


def read_mask(path, microns_per_pixel: float) -> ImagePlane:
    arr = read_image(path)
    if arr.ndim != 2:
        raise DimensionError(f"{path}: mask must be grayscale")
    return ImagePlane((arr > 127).astype(np.uint8), microns_per_pixel)

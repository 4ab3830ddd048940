"""Mitotic density estimation and field-of-interest proposal."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, EmptyValidMaskError, GeometryError, ParameterError
from .integral import centered_window_sums
from .raster import ImagePlane, Rect

HPF10_AREA_MM2 = 2.37
ASPECT = (4, 3)
DEFAULT_DENSITY_DOWNSAMPLE = 16


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def foi_window_dims(
    microns_per_pixel: float, area_mm2: float = HPF10_AREA_MM2, aspect: tuple[float, float] = ASPECT
) -> tuple[int, int]:
    """Pixel size ``(w, h)`` of a rectangle with the given physical area and aspect ratio."""
    aspect_w, aspect_h = aspect
    if not (microns_per_pixel > 0 and area_mm2 > 0 and aspect_w > 0 and aspect_h > 0):
        raise ParameterError("resolution, area and aspect must all be positive")
    h_um = math.sqrt(area_mm2 * aspect_h / aspect_w) * 1000.0
    h = round_half_up(h_um / microns_per_pixel)
    w = round_half_up(h * aspect_w / aspect_h)
    if h < 1 or w < 1:
        raise ParameterError(f"window collapses to {w}x{h} px at {microns_per_pixel} um/px")
    return w, h


@dataclass(frozen=True)
class FoiWindow:
    microns_per_pixel: float
    area_mm2: float = HPF10_AREA_MM2
    aspect_w: float = ASPECT[0]
    aspect_h: float = ASPECT[1]

    @property
    def w_px(self) -> int:
        return self.dims_at(self.microns_per_pixel)[0]

    @property
    def h_px(self) -> int:
        return self.dims_at(self.microns_per_pixel)[1]

    def dims_at(self, microns_per_pixel: float) -> tuple[int, int]:
        return foi_window_dims(microns_per_pixel, self.area_mm2, (self.aspect_w, self.aspect_h))

    def at(self, microns_per_pixel: float) -> "FoiWindow":
        return FoiWindow(microns_per_pixel, self.area_mm2, self.aspect_w, self.aspect_h)

    @property
    def realized_area_mm2(self) -> float:
        return self.w_px * self.h_px * self.microns_per_pixel**2 * 1e-6

    def to_json(self) -> dict:
        return {"area_mm2": self.area_mm2, "w_px": self.w_px, "h_px": self.h_px}


def box_sum(plane: ImagePlane, w: int, h: int) -> ImagePlane:
    """Moving window sum centred on each pixel; NaN where the window leaves the plane."""
    if w > plane.width or h > plane.height:
        raise GeometryError(f"window {w}x{h} larger than map {plane.width}x{plane.height}")
    sums = centered_window_sums(plane.values, w, h, fill=np.nan)
    return plane.with_values(sums.astype(np.float64))


def disc_mass(radius: float) -> float:
    return math.pi * radius * radius


def estimate_mc_map(seg_map: ImagePlane, window: FoiWindow, disc_radius: float) -> ImagePlane:
    """Estimated mitotic count of the field centred on every position.

    ``disc_radius`` is in ``seg_map`` pixels; one fully drawn figure
    contributes ``pi * r**2`` of mass and therefore a count of about 1.
    """
    if not disc_radius > 0:
        raise ParameterError(f"disc_radius must be > 0, got {disc_radius}")
    w, h = window.dims_at(seg_map.microns_per_pixel)
    sums = box_sum(seg_map, w, h)
    return sums.with_values(sums.values / disc_mass(disc_radius))


@dataclass(frozen=True)
class FoiProposal:
    rect: Rect
    estimated_mc: float
    gt_mc: Optional[int] = None
    position: tuple[int, int] = (0, 0)

    def with_gt(self, gt_mc: int) -> "FoiProposal":
        return FoiProposal(self.rect, self.estimated_mc, int(gt_mc), self.position)

    def to_json(self, slide_id: str, window: FoiWindow, detector: str) -> dict:
        return {
            "slide_id": slide_id,
            "rect": self.rect.to_dict(),
            "estimated_mc": float(self.estimated_mc),
            "gt_mc": self.gt_mc,
            "window": window.to_json(),
            "detector": detector,
        }


def masked_argmax(values: np.ndarray, valid: np.ndarray) -> tuple[int, int] | None:
    """Row-major first maximum over valid, defined positions as ``(row, col)``."""
    candidates = (np.asarray(valid) > 0) & ~np.isnan(values)
    if not candidates.any():
        return None
    scored = np.where(candidates, values, -np.inf)
    flat = int(np.argmax(scored))
    return divmod(flat, values.shape[1])


def propose_foi(
    mc_map: ImagePlane,
    valid: ImagePlane,
    window: FoiWindow,
    slide_dims: tuple[int, int] | None = None,
) -> FoiProposal:
    """Pick the valid position with the highest estimated count.

    The rectangle is expressed at the window's (full) resolution, centred on
    the chosen map pixel and shifted, if needed, to stay inside the slide.
    """
    if mc_map.shape != valid.shape:
        raise DimensionError(f"density map {mc_map.shape} and valid mask {valid.shape} differ")
    hit = masked_argmax(mc_map.values, valid.values)
    if hit is None:
        raise EmptyValidMaskError("empty valid mask: no position qualifies for a proposal")
    row, col = hit
    scale = mc_map.microns_per_pixel / window.microns_per_pixel
    if slide_dims is None:
        slide_dims = (round_half_up(mc_map.width * scale), round_half_up(mc_map.height * scale))
    width, height = slide_dims
    w, h = window.w_px, window.h_px
    if w > width or h > height:
        raise GeometryError(f"window {w}x{h} larger than slide {width}x{height}")
    cx = math.floor((col + 0.5) * scale)
    cy = math.floor((row + 0.5) * scale)
    rect = Rect.centered(cx, cy, w, h)
    rect = Rect(min(max(rect.x, 0), width - w), min(max(rect.y, 0), height - h), w, h)
    return FoiProposal(rect, float(mc_map.values[row, col]), None, (col, row))

"""Pluggable mitosis detectors producing per-tile segmentation maps.

Two reference detectors stand in for trained networks: ``oracle`` draws a
filled disc at every consensus mitosis, ``noisy`` perturbs that with missed
figures, Poisson false positives and a gain. ``external`` reads per-tile maps
produced elsewhere (``tile_{x}_{y}.foim``). Output is either full resolution
(scale 1) or coarse (scale 16, discs drawn with sub-pixel centres).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DimensionError, IncompleteInputError, ParameterError
from .raster import ImagePlane, Rect, TileGrid, make_tile_grid, stitch

DEFAULT_DISC_RADIUS = 25.0
COARSE_SCALE = 16
# Centres are snapped to 1/256 px before drawing coarse discs.
SUBPIXEL_BITS = 8
# Coverage samples per coarse pixel along each axis.
SUPERSAMPLE = 16


class NoiseSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    fp_rate_per_mm2: float = Field(0.0, ge=0)
    miss_prob: float = Field(0.0, ge=0, le=1)
    gain: float = Field(1.0, gt=0)


class DetectorSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["oracle", "noisy", "external"] = "oracle"
    disc_radius_px: float = Field(DEFAULT_DISC_RADIUS, ge=1)
    output_scale: Literal[1, 16] = 1
    noise: NoiseSpec = NoiseSpec()

    @property
    def name(self) -> str:
        return f"{self.kind}@{self.output_scale}"


def _points_array(points) -> np.ndarray:
    return np.asarray(points, dtype=np.float64).reshape(-1, 2)


def draw_discs(shape: tuple[int, int], centers: np.ndarray, radius: float) -> np.ndarray:
    """Binary float32 map with a filled disc (``dx**2 + dy**2 <= r**2``) at each integer centre."""
    out = np.zeros(shape, dtype=np.float32)
    h, w = shape
    r = float(radius)
    reach = int(math.floor(r))
    for cx, cy in centers:
        x0, x1 = max(int(cx) - reach, 0), min(int(cx) + reach + 1, w)
        y0, y1 = max(int(cy) - reach, 0), min(int(cy) + reach + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        dx = np.arange(x0, x1) - cx
        dy = np.arange(y0, y1) - cy
        inside = dy[:, None] ** 2 + dx[None, :] ** 2 <= r * r
        out[y0:y1, x0:x1][inside] = 1.0
    return out


def rasterize_coarse(
    points,
    tile_dims: tuple[int, int],
    factor: int = COARSE_SCALE,
    radius_coarse: float = DEFAULT_DISC_RADIUS / COARSE_SCALE,
) -> ImagePlane:
    """Antialiased coarse disc map for annotations given in tile pixel coordinates.

    A full-resolution annotation at pixel ``(x, y)`` is the point
    ``((x + 0.5) / factor, (y + 0.5) / factor)`` in coarse units, snapped to
    1/256 px. Each coarse pixel receives the fraction of its
    ``SUPERSAMPLE x SUPERSAMPLE`` sample points covered by any disc.
    The returned plane has unit resolution; callers set the physical one.
    """
    tile_w, tile_h = tile_dims
    if factor < 1 or int(factor) != factor:
        raise ParameterError(f"factor must be a positive integer, got {factor}")
    out_w, out_h = -(-tile_w // factor), -(-tile_h // factor)
    n = SUPERSAMPLE
    fine = np.zeros((out_h * n, out_w * n), dtype=bool)
    q = float(1 << SUBPIXEL_BITS)
    r = float(radius_coarse)
    for x, y in _points_array(points):
        cx = round((x + 0.5) / factor * q) / q
        cy = round((y + 0.5) / factor * q) / q
        # sample k sits at coarse coordinate (k + 0.5) / n
        k0 = max(int(math.floor((cx - r) * n - 0.5)), 0)
        k1 = min(int(math.ceil((cx + r) * n - 0.5)) + 1, out_w * n)
        m0 = max(int(math.floor((cy - r) * n - 0.5)), 0)
        m1 = min(int(math.ceil((cy + r) * n - 0.5)) + 1, out_h * n)
        if k0 >= k1 or m0 >= m1:
            continue
        sx = (np.arange(k0, k1) + 0.5) / n - cx
        sy = (np.arange(m0, m1) + 0.5) / n - cy
        fine[m0:m1, k0:k1] |= sy[:, None] ** 2 + sx[None, :] ** 2 <= r * r
    coverage = fine.reshape(out_h, n, out_w, n).mean(axis=(1, 3), dtype=np.float64)
    return ImagePlane(coverage.astype(np.float32), 1.0)


def _render(tile: Rect, centers: np.ndarray, spec: DetectorSpec, microns_per_pixel: float) -> ImagePlane:
    local = centers - np.array([tile.x, tile.y], dtype=np.float64)
    r = spec.disc_radius_px
    near = (
        (local[:, 0] >= -r) & (local[:, 0] < tile.w + r) & (local[:, 1] >= -r) & (local[:, 1] < tile.h + r)
    )
    local = local[near]
    if spec.output_scale == 1:
        return ImagePlane(draw_discs((tile.h, tile.w), local, r), microns_per_pixel)
    coarse = rasterize_coarse(local, (tile.w, tile.h), spec.output_scale, r / spec.output_scale)
    return ImagePlane(coarse.values, microns_per_pixel * spec.output_scale)


def oracle_detect(tile: Rect, points, spec: DetectorSpec, microns_per_pixel: float = 1.0) -> ImagePlane:
    """Perfect detector: a disc of 1.0 at every given (consensus) mitosis touching the tile."""
    return _render(tile, _points_array(points), spec, microns_per_pixel)


def _unit_draw(seed: int, x: float, y: float) -> float:
    return np.random.default_rng([seed, 0, int(x), int(y)]).random()


def noisy_disc_centers(
    tile: Rect, points, spec: DetectorSpec, rng_seed: int, microns_per_pixel: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Centres the noisy detector draws: ``(kept true figures, spurious figures)``.

    Misses are decided per figure (keyed on its position), so overlapping
    tiles agree; false positives are a Poisson process per tile.
    """
    pts = _points_array(points)
    miss = spec.noise.miss_prob
    if miss > 0 and len(pts):
        keep = np.array([_unit_draw(rng_seed, x, y) >= miss for x, y in pts], dtype=bool)
        pts = pts[keep]
    rng = np.random.default_rng([rng_seed, 1, tile.x, tile.y])
    area_mm2 = tile.w * tile.h * microns_per_pixel**2 * 1e-6
    n_fp = rng.poisson(spec.noise.fp_rate_per_mm2 * area_mm2)
    spurious = np.column_stack(
        [tile.x + rng.integers(0, tile.w, n_fp), tile.y + rng.integers(0, tile.h, n_fp)]
    ).astype(np.float64)
    return pts, spurious


def noisy_detect(
    tile: Rect, points, spec: DetectorSpec, rng_seed: int, microns_per_pixel: float = 1.0
) -> ImagePlane:
    kept, spurious = noisy_disc_centers(tile, points, spec, rng_seed, microns_per_pixel)
    plane = _render(tile, np.vstack([kept, spurious]), spec, microns_per_pixel)
    gain = spec.noise.gain
    if gain == 1.0:
        return plane
    return plane.with_values(np.clip(plane.values * np.float32(gain), 0.0, 1.0))


def tile_filename(origin: tuple[int, int]) -> str:
    return f"tile_{origin[0]}_{origin[1]}.foim"


def external_detect(tile: Rect, tile_dir, spec: DetectorSpec) -> ImagePlane:
    from .formats import read_foim

    path = Path(tile_dir) / tile_filename((tile.x, tile.y))
    if not path.exists():
        raise IncompleteInputError(f"missing external tile map {path}")
    plane = read_foim(path)
    s = spec.output_scale
    expected = (-(-tile.h // s), -(-tile.w // s))
    if plane.shape != expected:
        raise DimensionError(f"{path}: shape {plane.shape}, expected {expected}")
    return plane


def iou(a: ImagePlane, b: ImagePlane) -> float:
    """Soft IoU ``sum(a*b) / sum(a + b - a*b)``; two all-zero maps score 1."""
    va = np.asarray(a.values if isinstance(a, ImagePlane) else a, dtype=np.float64)
    vb = np.asarray(b.values if isinstance(b, ImagePlane) else b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionError(f"IoU operands differ in shape: {va.shape} vs {vb.shape}")
    inter = float((va * vb).sum())
    union = float((va + vb - va * vb).sum())
    if union == 0.0:
        return 1.0
    return min(max(inter / union, 0.0), 1.0)


def detection_grid(width: int, height: int, tile_size: int, margin: int, scale: int) -> TileGrid:
    """Tile grid laid out in output-map pixels, so coarse tiles line up with the coarse map."""
    if tile_size % scale or margin % scale:
        raise ParameterError(f"tile_size and margin must be multiples of the output scale {scale}")
    return make_tile_grid(-(-width // scale), -(-height // scale), tile_size // scale, margin // scale)


def detect_slide(
    spec: DetectorSpec,
    slide_dims: tuple[int, int],
    points=(),
    microns_per_pixel: float = 1.0,
    tile_size: int = 512,
    margin: int = 64,
    seed: int = 0,
    threads: int = 1,
    tile_dir=None,
) -> ImagePlane:
    """Run the detector tile by tile over a slide and stitch the mitosis map."""
    width, height = slide_dims
    s = spec.output_scale
    grid = detection_grid(width, height, tile_size, margin, s)
    all_pts = _points_array(points)
    r = spec.disc_radius_px

    def run(origin):
        x, y = origin[0] * s, origin[1] * s
        rect = Rect(x, y, min(tile_size, width - x), min(tile_size, height - y))
        near = (
            (all_pts[:, 0] >= x - r)
            & (all_pts[:, 0] < x + rect.w + r)
            & (all_pts[:, 1] >= y - r)
            & (all_pts[:, 1] < y + rect.h + r)
        )
        pts = all_pts[near]
        if spec.kind == "oracle":
            plane = oracle_detect(rect, pts, spec, microns_per_pixel)
        elif spec.kind == "noisy":
            plane = noisy_detect(rect, pts, spec, seed, microns_per_pixel)
        else:
            if tile_dir is None:
                raise IncompleteInputError("external detector needs a tile directory")
            plane = external_detect(rect, tile_dir, spec)
        return origin, plane

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, grid.origins))
    else:
        results = [run(o) for o in grid.origins]
    stitched = stitch(results, grid, (grid.width, grid.height))
    return ImagePlane(stitched.values, microns_per_pixel * s)

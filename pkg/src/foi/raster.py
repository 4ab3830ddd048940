"""Raster container and the generic image operations the pipeline builds on.

Planes are stored as ``(height, width)`` numpy arrays in row-major order.
Three roles share the container: 8-bit intensity, binary masks (``uint8``
0/1) and real-valued maps (``float32``/``float64``).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import DimensionError, IncompleteInputError, ParameterError

DEFAULT_TILE_SIZE = 512
DEFAULT_MARGIN = 64

# Luminance weights in thousandths, so rounding can be done in integers.
_GRAY_WEIGHTS = (299, 587, 114)

# Distance assigned to tile edges that coincide with the plane border.
_NO_EDGE = np.iinfo(np.int16).max


@dataclass(frozen=True)
class ImagePlane:
    values: np.ndarray
    microns_per_pixel: float

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DimensionError(f"plane must be 2-D, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DimensionError(f"plane must be at least 1x1, got {values.shape}")
        if not self.microns_per_pixel > 0:
            raise ParameterError(f"microns_per_pixel must be > 0, got {self.microns_per_pixel}")
        view = values.view()
        view.flags.writeable = False
        object.__setattr__(self, "values", view)
        object.__setattr__(self, "microns_per_pixel", float(self.microns_per_pixel))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "ImagePlane":
        return ImagePlane(values, self.microns_per_pixel)

    def crop(self, rect: "Rect") -> "ImagePlane":
        """Return the part of the plane covered by ``rect`` (clipped to the plane)."""
        return ImagePlane(
            self.values[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w],
            self.microns_per_pixel,
        )


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ParameterError(f"rect must be at least 1x1, got {self.w}x{self.h}")

    @property
    def center(self) -> tuple[int, int]:
        return self.x + self.w // 2, self.y + self.h // 2

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height

    def contains(self, x, y):
        """Half-open membership test; works elementwise on arrays."""
        return (x >= self.x) & (x < self.x + self.w) & (y >= self.y) & (y < self.y + self.h)

    @classmethod
    def centered(cls, cx: int, cy: int, w: int, h: int) -> "Rect":
        return cls(cx - w // 2, cy - h // 2, w, h)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class TileGrid:
    tile_size: int
    margin: int
    width: int
    height: int
    xs: tuple[int, ...]
    ys: tuple[int, ...]

    @property
    def stride(self) -> int:
        return self.tile_size - 2 * self.margin

    @property
    def origins(self) -> list[tuple[int, int]]:
        """Tile anchors in row-major order (y outer, x inner)."""
        return [(x, y) for y in self.ys for x in self.xs]

    def tile_rect(self, origin: tuple[int, int]) -> Rect:
        x, y = origin
        return Rect(x, y, min(self.tile_size, self.width - x), min(self.tile_size, self.height - y))

    def __len__(self):
        return len(self.xs) * len(self.ys)


def to_grayscale(rgb, microns_per_pixel: float | None = None) -> ImagePlane:
    """Convert an RGB raster to 8-bit luminance.

    ``rgb`` is either an ``(H, W, 3)`` array or a sequence of three channel
    planes/arrays. Weights are 0.299/0.587/0.114 with round-half-up.
    """
    if isinstance(rgb, np.ndarray) and rgb.ndim == 3:
        if rgb.shape[2] != 3:
            raise DimensionError(f"expected 3 channels, got {rgb.shape[2]}")
        channels = [rgb[:, :, k] for k in range(3)]
    else:
        channels = list(rgb)
        if len(channels) != 3:
            raise DimensionError(f"expected 3 channels, got {len(channels)}")
    if microns_per_pixel is None:
        microns_per_pixel = getattr(channels[0], "microns_per_pixel", 1.0)
    arrays = [c.values if isinstance(c, ImagePlane) else np.asarray(c) for c in channels]
    if len({a.shape for a in arrays}) != 1:
        raise DimensionError(f"channel shapes differ: {[a.shape for a in arrays]}")
    acc = np.zeros(arrays[0].shape, dtype=np.int32)
    for weight, channel in zip(_GRAY_WEIGHTS, arrays):
        acc += weight * np.clip(channel, 0, 255).astype(np.int32)
    gray = (acc + 500) // 1000
    return ImagePlane(np.clip(gray, 0, 255).astype(np.uint8), microns_per_pixel)


def downsample(plane: ImagePlane, factor: int) -> ImagePlane:
    """Block-mean downsampling; edge blocks are averaged over their clipped extent."""
    if int(factor) != factor or factor < 1:
        raise ParameterError(f"downsample factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if factor == 1:
        return plane
    values = plane.values
    rows = np.arange(0, plane.height, factor)
    cols = np.arange(0, plane.width, factor)
    integral = values.dtype.kind in "biu"
    acc_dtype = np.int64 if integral else np.float64
    sums = np.add.reduceat(np.add.reduceat(values, rows, axis=0, dtype=acc_dtype), cols, axis=1)
    row_counts = np.diff(np.append(rows, plane.height))
    col_counts = np.diff(np.append(cols, plane.width))
    counts = np.outer(row_counts, col_counts).astype(acc_dtype)
    if integral:
        # floor(sum / count + 1/2) in exact integer arithmetic
        out = (2 * sums + counts) // (2 * counts)
        dtype = np.uint8 if values.dtype == np.bool_ else values.dtype
        out = out.astype(dtype)
    else:
        out = (sums / counts).astype(values.dtype)
    return ImagePlane(out, plane.microns_per_pixel * factor)


def _axis_origins(extent: int, tile: int, stride: int) -> list[int]:
    origins = []
    o = 0
    while o + tile < extent:
        origins.append(o)
        o += stride
    origins.append(max(0, extent - tile))
    return origins


def make_tile_grid(
    width: int, height: int, tile_size: int = DEFAULT_TILE_SIZE, margin: int = DEFAULT_MARGIN
) -> TileGrid:
    if tile_size <= 2 * margin or margin < 0:
        raise ParameterError(f"tile_size ({tile_size}) must exceed 2*margin ({2 * margin})")
    if width < 1 or height < 1:
        raise ParameterError(f"plane dimensions must be >= 1, got {width}x{height}")
    if tile_size >= _NO_EDGE:
        raise ParameterError(f"tile_size must be < {_NO_EDGE}")
    stride = tile_size - 2 * margin
    return TileGrid(
        tile_size=tile_size,
        margin=margin,
        width=width,
        height=height,
        xs=tuple(_axis_origins(width, tile_size, stride)),
        ys=tuple(_axis_origins(height, tile_size, stride)),
    )


def _edge_distance(start: int, length: int, extent: int) -> np.ndarray:
    idx = np.arange(length, dtype=np.int32)
    lead = idx if start > 0 else np.full(length, _NO_EDGE, dtype=np.int32)
    trail = (length - 1 - idx) if start + length < extent else np.full(length, _NO_EDGE, dtype=np.int32)
    return np.minimum(lead, trail).astype(np.int16)


def stitch(
    tile_maps: Iterable[tuple[tuple[int, int], ImagePlane]],
    grid: TileGrid,
    full_dims: tuple[int, int],
    scale: int = 1,
) -> ImagePlane:
    """Assemble per-tile maps into one plane.

    Every output pixel is taken from the tile in which it lies deepest,
    measured as the distance to the nearest tile edge that is not also a
    plane edge. Ties go to the earlier origin in row-major order.
    ``scale`` is the ratio between grid coordinates and map pixels (16 for
    coarse detector output).
    """
    width, height = full_dims
    by_origin = {tuple(origin): tile for origin, tile in tile_maps}
    missing = [o for o in grid.origins if o not in by_origin]
    if missing:
        raise IncompleteInputError(f"no tile map for {len(missing)} origin(s), first {missing[0]}")

    first = by_origin[grid.origins[0]]
    out = np.zeros((height, width), dtype=first.values.dtype)
    best = np.full((height, width), -1, dtype=np.int16)
    for origin in grid.origins:
        tile = by_origin[origin]
        x0, y0 = origin[0] // scale, origin[1] // scale
        th = min(tile.height, height - y0)
        tw = min(tile.width, width - x0)
        if th < 1 or tw < 1:
            raise IncompleteInputError(f"tile at {origin} lies outside the {width}x{height} plane")
        dist = np.minimum.outer(_edge_distance(y0, th, height), _edge_distance(x0, tw, width))
        region = (slice(y0, y0 + th), slice(x0, x0 + tw))
        take = dist > best[region]
        out[region][take] = tile.values[:th, :tw][take]
        best[region][take] = dist[take]
    if (best < 0).any():
        raise IncompleteInputError("tile maps do not cover the full plane")
    return ImagePlane(out, first.microns_per_pixel)


TileFunction = Callable[[tuple[int, int], ImagePlane], ImagePlane]


def apply_tiled(plane: ImagePlane, grid: TileGrid, fn: TileFunction, threads: int = 1) -> ImagePlane:
    """Run ``fn`` on every tile of ``plane`` and stitch the results."""

    def run(origin):
        return origin, fn(origin, plane.crop(grid.tile_rect(origin)))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, grid.origins))
    else:
        results = [run(o) for o in grid.origins]
    return stitch(results, grid, (plane.width, plane.height))


def nearest_index(coords: np.ndarray, from_mpp: float, to_mpp: float, size: int) -> np.ndarray:
    """Index of the pixel (at ``to_mpp``) containing the center of each ``from_mpp`` pixel."""
    idx = np.floor((np.asarray(coords, dtype=np.float64) + 0.5) * (from_mpp / to_mpp)).astype(np.int64)
    return np.clip(idx, 0, size - 1)


def align_nearest(plane: ImagePlane, width: int, height: int, microns_per_pixel: float) -> ImagePlane:
    """Nearest-neighbour resample of ``plane`` onto a grid of the given size and resolution."""
    rows = nearest_index(np.arange(height), microns_per_pixel, plane.microns_per_pixel, plane.height)
    cols = nearest_index(np.arange(width), microns_per_pixel, plane.microns_per_pixel, plane.width)
    return ImagePlane(plane.values[np.ix_(rows, cols)], microns_per_pixel)

"""Summed-area tables and O(1) rectangular window sums."""

from __future__ import annotations

import numpy as np

from .errors import GeometryError


def summed_area_table(values: np.ndarray) -> np.ndarray:
    """Zero-padded integral image: ``sat[i, j]`` is the sum of ``values[:i, :j]``.

    Integer and boolean inputs accumulate in int64 (exact); everything else
    in float64.
    """
    values = np.asarray(values)
    dtype = np.int64 if values.dtype.kind in "biu" else np.float64
    sat = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=dtype)
    np.cumsum(values, axis=0, dtype=dtype, out=sat[1:, 1:])
    np.cumsum(sat[1:, 1:], axis=1, out=sat[1:, 1:])
    return sat


def window_sums(values: np.ndarray, w: int, h: int) -> np.ndarray:
    """Sum of every fully contained ``h x w`` window, indexed by its top-left corner.

    The result has shape ``(H - h + 1, W - w + 1)``.
    """
    values = np.asarray(values)
    if w < 1 or h < 1:
        raise GeometryError(f"window must be at least 1x1, got {w}x{h}")
    if w > values.shape[1] or h > values.shape[0]:
        raise GeometryError(f"window {w}x{h} larger than plane {values.shape[1]}x{values.shape[0]}")
    sat = summed_area_table(values)
    return sat[h:, w:] - sat[:-h, w:] - sat[h:, :-w] + sat[:-h, :-w]


def centered_window_sums(values: np.ndarray, w: int, h: int, fill=np.nan) -> np.ndarray:
    """Window sums re-indexed by window centre (top-left = centre - size // 2).

    Centres whose window would leave the plane get ``fill``.
    """
    sums = window_sums(values, w, h)
    out_dtype = np.result_type(sums.dtype, np.asarray(fill).dtype)
    out = np.full(np.asarray(values).shape, fill, dtype=out_dtype)
    out[h // 2 : h // 2 + sums.shape[0], w // 2 : w // 2 + sums.shape[1]] = sums
    return out

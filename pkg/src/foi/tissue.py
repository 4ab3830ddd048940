"""Valid-tissue mask: grayscale -> Otsu -> closing -> 10-HPF coverage test."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import GeometryError, ParameterError
from .integral import centered_window_sums
from .raster import ImagePlane

DEFAULT_COVERAGE_THRESHOLD = 0.95
DEFAULT_SE_RADIUS = 2
DEFAULT_MASK_DOWNSAMPLE = 32
# Below this gap between Otsu class means the plane is considered homogeneous.
MIN_CONTRAST = 20.0
# Homogeneous planes at most this bright are all tissue.
BACKGROUND_LEVEL = 220


def otsu_threshold(histogram) -> int:
    """Threshold ``t`` maximising between-class variance of ``{<= t}`` and ``{> t}``.

    The comparison is done in exact integer arithmetic so ties resolve to
    the smallest ``t`` deterministically. A histogram with a single occupied
    bin returns that bin.
    """
    hist = [int(c) for c in np.asarray(histogram).ravel()]
    if len(hist) != 256:
        raise ParameterError(f"histogram must have 256 bins, got {len(hist)}")
    if any(c < 0 for c in hist):
        raise ParameterError("histogram counts must be non-negative")
    total = sum(hist)
    if total == 0:
        raise ParameterError("histogram is empty")
    total_sum = sum(i * c for i, c in enumerate(hist))

    # sigma_b^2 * N^2 = (N * S0 - S * w0)^2 / (w0 * w1)
    best_t, best_num, best_den = None, 0, 1
    w0 = s0 = 0
    for t in range(255):
        w0 += hist[t]
        s0 += t * hist[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        num = (total * s0 - total_sum * w0) ** 2
        den = w0 * w1
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t is None:
        return next(i for i, c in enumerate(hist) if c)
    return best_t


def histogram(gray: ImagePlane) -> np.ndarray:
    return np.bincount(np.asarray(gray.values, dtype=np.uint8).ravel(), minlength=256)


def binarize_tissue(gray: ImagePlane, threshold: int) -> ImagePlane:
    """Tissue is dark: 1 where intensity <= threshold."""
    return gray.with_values((gray.values <= threshold).astype(np.uint8))


def binary_close(mask: ImagePlane, se_radius: int = DEFAULT_SE_RADIUS) -> ImagePlane:
    """Dilate then erode with a square element of side ``2 * se_radius + 1``.

    Outside the plane counts as background for dilation and as foreground
    for erosion, so tissue touching the slide border is not eaten away.
    """
    if se_radius < 1:
        raise ParameterError(f"se_radius must be >= 1, got {se_radius}")
    structure = np.ones((2 * se_radius + 1, 2 * se_radius + 1), dtype=bool)
    binary = np.asarray(mask.values) > 0
    dilated = ndimage.binary_dilation(binary, structure=structure, border_value=0)
    closed = ndimage.binary_erosion(dilated, structure=structure, border_value=1)
    return mask.with_values(closed.astype(np.uint8))


def class_contrast(hist: np.ndarray, t: int) -> float:
    """Difference of mean intensity between the ``> t`` and ``<= t`` classes (0 if one is empty)."""
    levels = np.arange(256)
    w0, w1 = hist[: t + 1].sum(), hist[t + 1 :].sum()
    if w0 == 0 or w1 == 0:
        return 0.0
    return float((levels[t + 1 :] * hist[t + 1 :]).sum() / w1 - (levels[: t + 1] * hist[: t + 1]).sum() / w0)


def tissue_mask(
    gray: ImagePlane,
    se_radius: int = DEFAULT_SE_RADIUS,
    min_contrast: float = MIN_CONTRAST,
    background_level: int = BACKGROUND_LEVEL,
) -> tuple[ImagePlane, int]:
    """Closed Otsu tissue mask of a (low-resolution) grayscale plane, plus the threshold used.

    When the two Otsu classes differ by less than ``min_contrast`` gray
    levels the plane is treated as homogeneous: all tissue if its mean is
    at most ``background_level``, otherwise all background.
    """
    hist = histogram(gray)
    t = otsu_threshold(hist)
    if class_contrast(hist, t) < min_contrast:
        mean = float((np.arange(256) * hist).sum() / hist.sum())
        return gray.with_values(np.full(gray.shape, mean <= background_level, dtype=np.uint8)), t
    return binary_close(binarize_tissue(gray, t), se_radius), t


def coverage_mask(tissue: ImagePlane, window_w: int, window_h: int, coverage_threshold: float) -> ImagePlane:
    """1 where the centred window is fully inside and at least ``coverage_threshold`` tissue."""
    if not 0 <= coverage_threshold <= 1:
        raise ParameterError(f"coverage_threshold must be in [0, 1], got {coverage_threshold}")
    if window_w > tissue.width or window_h > tissue.height:
        raise GeometryError(
            f"window {window_w}x{window_h} larger than mask {tissue.width}x{tissue.height}"
        )
    sums = centered_window_sums((np.asarray(tissue.values) > 0).astype(np.uint8), window_w, window_h, fill=-1)
    coverage = sums / float(window_w * window_h)
    valid = (sums >= 0) & (coverage >= coverage_threshold)
    return tissue.with_values(valid.astype(np.uint8))


def valid_mask(
    gray_lowres: ImagePlane,
    window,
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD,
    se_radius: int = DEFAULT_SE_RADIUS,
) -> ImagePlane:
    """Positions whose surrounding field is covered by tissue to at least ``coverage_threshold``.

    ``window`` is a :class:`~foi.density.FoiWindow`; its size is converted to
    the plane's own resolution.
    """
    w, h = window.dims_at(gray_lowres.microns_per_pixel)
    tissue, _ = tissue_mask(gray_lowres, se_radius)
    return coverage_mask(tissue, w, h, coverage_threshold)

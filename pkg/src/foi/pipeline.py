"""Slide-level composition of the stages: mask, detection, density, proposal, evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .annotations import count_in_rect, grid_positions, gt_mc_map
from .config import RunConfig
from .density import FoiProposal, FoiWindow, estimate_mc_map, propose_foi
from .detector import DetectorSpec, detect_slide
from .errors import DimensionError
from .evaluation import SlideReport, evaluate_slide
from .raster import ImagePlane, align_nearest, downsample, nearest_index, to_grayscale
from .tissue import coverage_mask, tissue_mask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaskResult:
    gray: ImagePlane
    tissue: ImagePlane
    valid: ImagePlane
    otsu_threshold: int

    def sidecar(self, cfg: RunConfig) -> dict:
        return {
            "otsu_threshold": self.otsu_threshold,
            "coverage_threshold": cfg.coverage_threshold,
            "se_radius": cfg.se_radius,
            "downsample_factor": cfg.mask_downsample,
        }


def lowres_gray(raster: np.ndarray, microns_per_pixel: float, factor: int) -> ImagePlane:
    """Grayscale at ``factor`` x coarser resolution.

    RGB channels are block-averaged before the luminance transform so the
    full-resolution slide is never converted as a whole.
    """
    if raster.ndim == 2:
        return downsample(ImagePlane(raster, microns_per_pixel), factor)
    if raster.ndim != 3 or raster.shape[2] != 3:
        raise DimensionError(f"slide raster must be grayscale or RGB, got shape {raster.shape}")
    channels = [downsample(ImagePlane(raster[:, :, k], microns_per_pixel), factor) for k in range(3)]
    return to_grayscale(channels)


def compute_mask(raster: np.ndarray, microns_per_pixel: float, cfg: RunConfig) -> MaskResult:
    gray = lowres_gray(raster, microns_per_pixel, cfg.mask_downsample)
    tissue, threshold = tissue_mask(gray, cfg.se_radius)
    w, h = cfg.foi_window(microns_per_pixel).dims_at(gray.microns_per_pixel)
    valid = coverage_mask(tissue, w, h, cfg.coverage_threshold)
    log.info("mask: otsu=%d, tissue=%.3f, valid=%.3f", threshold, tissue.values.mean(), valid.values.mean())
    return MaskResult(gray, tissue, valid, threshold)


def compute_segmentation(
    cfg: RunConfig,
    slide_dims: tuple[int, int],
    microns_per_pixel: float,
    points=(),
    spec: Optional[DetectorSpec] = None,
    tile_dir=None,
) -> ImagePlane:
    spec = spec or cfg.detector
    return detect_slide(
        spec,
        slide_dims,
        points,
        microns_per_pixel=microns_per_pixel,
        tile_size=cfg.tile_size,
        margin=cfg.margin,
        seed=cfg.seed,
        threads=cfg.threads,
        tile_dir=tile_dir,
    )


def compute_density(
    seg_map: ImagePlane, window: FoiWindow, disc_radius_px: float, density_downsample: int
) -> ImagePlane:
    """Estimated-count map at ``density_downsample`` x the slide resolution.

    ``seg_map`` may be at full or coarse resolution; it is block-averaged to
    the working resolution, where one disc of radius ``r`` has mass
    ``pi * (r / density_downsample)**2``.
    """
    full_mpp = window.microns_per_pixel
    target_mpp = full_mpp * density_downsample
    factor = target_mpp / seg_map.microns_per_pixel
    if abs(factor - round(factor)) > 1e-6 or round(factor) < 1:
        raise DimensionError(f"cannot bring a {seg_map.microns_per_pixel} um/px map to {target_mpp} um/px")
    work = downsample(seg_map, int(round(factor)))
    return estimate_mc_map(work, window, disc_radius_px / density_downsample)


def compute_proposal(
    mc_map: ImagePlane,
    valid_lowres: ImagePlane,
    window: FoiWindow,
    slide_dims: tuple[int, int],
    points=None,
) -> FoiProposal:
    aligned = align_nearest(valid_lowres, mc_map.width, mc_map.height, mc_map.microns_per_pixel)
    proposal = propose_foi(mc_map, aligned, window, slide_dims)
    if points is not None:
        proposal = proposal.with_gt(count_in_rect(points, proposal.rect))
    return proposal


@dataclass(frozen=True)
class EvaluationGrid:
    xs: np.ndarray
    ys: np.ndarray
    gt: ImagePlane
    est: ImagePlane
    valid: ImagePlane


def sample_on_grid(plane: ImagePlane, xs: np.ndarray, ys: np.ndarray, full_mpp: float, grid_mpp: float) -> ImagePlane:
    """Values of ``plane`` at the full-resolution pixels ``xs`` x ``ys``."""
    rows = nearest_index(ys, full_mpp, plane.microns_per_pixel, plane.height)
    cols = nearest_index(xs, full_mpp, plane.microns_per_pixel, plane.width)
    return ImagePlane(np.asarray(plane.values)[np.ix_(rows, cols)], grid_mpp)


def evaluation_grid(
    points,
    mc_map: ImagePlane,
    valid_lowres: ImagePlane,
    window: FoiWindow,
    slide_dims: tuple[int, int],
    grid_stride: int,
) -> EvaluationGrid:
    full_mpp = window.microns_per_pixel
    gt = gt_mc_map(points, window, slide_dims, grid_stride, full_mpp)
    xs = grid_positions(slide_dims[0], grid_stride)
    ys = grid_positions(slide_dims[1], grid_stride)
    est = sample_on_grid(mc_map, xs, ys, full_mpp, gt.microns_per_pixel)
    valid = sample_on_grid(valid_lowres, xs, ys, full_mpp, gt.microns_per_pixel)
    return EvaluationGrid(xs, ys, gt, est, valid)


@dataclass(frozen=True)
class SlideResult:
    slide_id: str
    detector: str
    window: FoiWindow
    mc_map: ImagePlane
    proposal: FoiProposal
    report: Optional[SlideReport]
    grid: Optional[EvaluationGrid]


def run_slide(
    cfg: RunConfig,
    slide_id: str,
    slide_dims: tuple[int, int],
    microns_per_pixel: float,
    mask: MaskResult,
    points=None,
    spec: Optional[DetectorSpec] = None,
    seg_map: Optional[ImagePlane] = None,
    tile_dir=None,
) -> SlideResult:
    """Detection (unless ``seg_map`` is given), density, proposal and, with ``points``, evaluation.

    ``points`` are the consensus mitoses; they feed the simulated detectors
    and the ground truth.
    """
    spec = spec or cfg.detector
    window = cfg.foi_window(microns_per_pixel)
    if seg_map is None:
        seg_map = compute_segmentation(cfg, slide_dims, microns_per_pixel, points if points is not None else (), spec, tile_dir)
    mc_map = compute_density(seg_map, window, spec.disc_radius_px, cfg.density_downsample)
    proposal = compute_proposal(mc_map, mask.valid, window, slide_dims, points)
    report = grid = None
    if points is not None:
        grid = evaluation_grid(points, mc_map, mask.valid, window, slide_dims, cfg.grid_stride)
        report = evaluate_slide(grid.est, grid.gt, grid.valid, proposal, slide_id, (grid.xs, grid.ys))
    return SlideResult(slide_id, spec.name, window, mc_map, proposal, report, grid)

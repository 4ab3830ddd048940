"""Synthetic slides: a tissue raster plus a patchy (Thomas-process) mitosis annotation set."""

from __future__ import annotations

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from .annotations import Annotation, AnnotationSet, CellClass
from .raster import ImagePlane, nearest_index

# Tissue shape is generated on a coarse lattice and upsampled by this factor.
_SHAPE_CELL = 32
# Colour offsets (R, G, B) added to the tissue gray level; luminance shift is ~+1.
_TISSUE_TINT = (25, -15, 20)


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    slide_id: Optional[str] = None
    width: int = Field(8192, gt=0)
    height: int = Field(6144, gt=0)
    microns_per_pixel: float = Field(1.0, gt=0)
    tissue_fill: float = Field(0.7, ge=0, le=1)
    cluster_intensity: float = Field(1.5, ge=0)  # parents per mm^2 of tissue
    offspring_mean: float = Field(25.0, ge=0)
    cluster_sigma: float = Field(200.0, ge=0)  # micrometres
    decoy_fraction: float = Field(0.1, ge=0, le=1)
    seed: int = 0

    @property
    def name(self) -> str:
        return self.slide_id or f"synth-{self.seed}"


def _rng(cfg: SynthConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream])


def tissue_shape(cfg: SynthConfig) -> np.ndarray:
    """Boolean full-resolution tissue mask: one irregular blob covering ~``tissue_fill``."""
    if cfg.tissue_fill <= 0:
        return np.zeros((cfg.height, cfg.width), dtype=bool)
    if cfg.tissue_fill >= 1:
        return np.ones((cfg.height, cfg.width), dtype=bool)
    rng = _rng(cfg, 0)
    ch, cw = -(-cfg.height // _SHAPE_CELL), -(-cfg.width // _SHAPE_CELL)
    noise = ndimage.gaussian_filter(rng.standard_normal((ch, cw)), sigma=max(min(ch, cw) / 12, 1.0), mode="wrap")
    noise /= noise.std() or 1.0
    yy, xx = np.mgrid[0:ch, 0:cw]
    radius2 = ((xx + 0.5) / cw - 0.5) ** 2 + ((yy + 0.5) / ch - 0.5) ** 2
    score = -8.0 * radius2 + 0.35 * noise
    coarse = score > np.quantile(score, 1.0 - cfg.tissue_fill)
    full = np.repeat(np.repeat(coarse, _SHAPE_CELL, axis=0), _SHAPE_CELL, axis=1)
    return full[: cfg.height, : cfg.width]


def gen_tissue(cfg: SynthConfig) -> tuple[np.ndarray, ImagePlane]:
    """RGB slide raster ``(H, W, 3)`` and its reference tissue mask.

    Background gray levels lie in 234..250, tissue in 125..195 (tinted pink).
    """
    mask = tissue_shape(cfg)
    rng = _rng(cfg, 1)
    noise = rng.integers(0, 71, size=mask.shape, dtype=np.uint8)
    gray = np.where(mask, noise + np.uint8(125), noise % np.uint8(17) + np.uint8(234))
    del noise
    rgb = np.empty(mask.shape + (3,), dtype=np.uint8)
    for k, tint in enumerate(_TISSUE_TINT):
        channel = gray.astype(np.int16)
        channel[mask] += tint
        rgb[:, :, k] = np.clip(channel, 0, 255)
    return rgb, ImagePlane(mask.astype(np.uint8), cfg.microns_per_pixel)


def _in_tissue(mask: ImagePlane, xs: np.ndarray, ys: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    rows = nearest_index(ys, cfg.microns_per_pixel, mask.microns_per_pixel, mask.height)
    cols = nearest_index(xs, cfg.microns_per_pixel, mask.microns_per_pixel, mask.width)
    return mask.values[rows, cols] > 0


def thomas_points(cfg: SynthConfig, tissue: ImagePlane) -> np.ndarray:
    """Integer ``(n, 2)`` figure positions from a Thomas cluster process restricted to tissue."""
    rng = _rng(cfg, 2)
    slide_mm2 = cfg.width * cfg.height * cfg.microns_per_pixel**2 * 1e-6
    n_parents = rng.poisson(cfg.cluster_intensity * slide_mm2)
    px = rng.uniform(0, cfg.width, n_parents)
    py = rng.uniform(0, cfg.height, n_parents)
    keep = _in_tissue(tissue, px.astype(np.int64), py.astype(np.int64), cfg)
    px, py = px[keep], py[keep]

    n_children = rng.poisson(cfg.offspring_mean, size=len(px))
    sigma_px = cfg.cluster_sigma / cfg.microns_per_pixel
    total = int(n_children.sum())
    cx = np.repeat(px, n_children) + rng.normal(0.0, sigma_px, total)
    cy = np.repeat(py, n_children) + rng.normal(0.0, sigma_px, total)
    xs = np.floor(cx).astype(np.int64)
    ys = np.floor(cy).astype(np.int64)
    inside = (xs >= 0) & (xs < cfg.width) & (ys >= 0) & (ys < cfg.height)
    xs, ys = xs[inside], ys[inside]
    inside = _in_tissue(tissue, xs, ys, cfg)
    return np.column_stack([xs[inside], ys[inside]])


def gen_mitoses(cfg: SynthConfig, tissue: ImagePlane) -> AnnotationSet:
    """Annotation set for a synthetic slide.

    A ``decoy_fraction`` of the generated figures is relabelled, half as
    ``mitosis_like`` and half as a mitosis seen by only one expert, so the
    consensus filter has something to reject.
    """
    points = thomas_points(cfg, tissue)
    rng = _rng(cfg, 3)
    draws = rng.random(len(points))
    annotations = []
    for (x, y), u in zip(points.tolist(), draws):
        if u < cfg.decoy_fraction / 2:
            annotations.append(Annotation(x, y, CellClass.MITOSIS_LIKE, False, False))
        elif u < cfg.decoy_fraction:
            annotations.append(Annotation(x, y, CellClass.MITOSIS, True, False))
        else:
            annotations.append(Annotation(x, y, CellClass.MITOSIS, True, True))
    return AnnotationSet(cfg.name, cfg.microns_per_pixel, cfg.width, cfg.height, tuple(annotations))

"""Cell annotations: JSON ingest, expert-consensus filtering, ground-truth count maps."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, StrictBool, StrictInt, ValidationError

from .errors import AnnotationParseError, AnnotationValidationError, GeometryError, ParameterError
from .raster import ImagePlane

DEFAULT_GRID_STRIDE = 256


class CellClass(str, enum.Enum):
    MITOSIS = "mitosis"
    MITOSIS_LIKE = "mitosis_like"
    GRANULOCYTE = "granulocyte"
    OTHER = "other"


@dataclass(frozen=True)
class Annotation:
    x: int
    y: int
    cell_class: CellClass
    expert1_mitosis: bool
    expert2_mitosis: bool

    @property
    def is_consensus_mitosis(self) -> bool:
        return self.cell_class is CellClass.MITOSIS and self.expert1_mitosis and self.expert2_mitosis


@dataclass(frozen=True)
class AnnotationSet:
    slide_id: str
    microns_per_pixel: float
    width: int
    height: int
    annotations: tuple[Annotation, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.annotations)

    def to_json(self) -> dict:
        return {
            "slide_id": self.slide_id,
            "microns_per_pixel": self.microns_per_pixel,
            "width": self.width,
            "height": self.height,
            "annotations": [
                {
                    "x": a.x,
                    "y": a.y,
                    "class": a.cell_class.value,
                    "expert1": a.expert1_mitosis,
                    "expert2": a.expert2_mitosis,
                }
                for a in self.annotations
            ],
        }


class _AnnotationRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x: StrictInt
    y: StrictInt
    cell_class: Literal["mitosis", "mitosis_like", "granulocyte", "other"] = Field(alias="class")
    expert1: StrictBool
    expert2: StrictBool


class _AnnotationFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    slide_id: str
    microns_per_pixel: float
    width: StrictInt
    height: StrictInt
    annotations: list[_AnnotationRecord]


def parse_annotations(data: dict, source: str = "<memory>") -> AnnotationSet:
    try:
        doc = _AnnotationFile.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        where = ".".join(str(p) for p in err["loc"])
        raise AnnotationParseError(f"{source}: field {where}: {err['msg']}") from exc
    if doc.width < 1 or doc.height < 1:
        raise AnnotationParseError(f"{source}: slide dimensions must be positive")
    if not doc.microns_per_pixel > 0:
        raise AnnotationParseError(f"{source}: microns_per_pixel must be > 0")
    annotations = []
    for i, rec in enumerate(doc.annotations):
        if not (0 <= rec.x < doc.width and 0 <= rec.y < doc.height):
            raise AnnotationValidationError(
                f"{source}: annotation {i} at ({rec.x}, {rec.y}) outside {doc.width}x{doc.height}", index=i
            )
        cell_class = CellClass(rec.cell_class)
        if cell_class is CellClass.MITOSIS_LIKE and rec.expert1 and rec.expert2:
            raise AnnotationValidationError(
                f"{source}: annotation {i} is mitosis_like but both experts marked mitosis", index=i
            )
        annotations.append(Annotation(rec.x, rec.y, cell_class, rec.expert1, rec.expert2))
    return AnnotationSet(doc.slide_id, doc.microns_per_pixel, doc.width, doc.height, tuple(annotations))


def load_annotations(path) -> AnnotationSet:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_annotations(data, source=str(path))


def save_annotations(aset: AnnotationSet, path) -> None:
    Path(path).write_text(json.dumps(aset.to_json(), indent=1) + "\n", encoding="utf-8")


def consensus_mitoses(aset: AnnotationSet) -> list[tuple[int, int]]:
    """Positions of figures both experts labelled as mitosis, in file order."""
    return [(a.x, a.y) for a in aset.annotations if a.is_consensus_mitosis]


def grid_positions(extent: int, stride: int) -> np.ndarray:
    """Full-resolution coordinates of the evaluation grid along one axis."""
    return np.arange(0, extent, stride, dtype=np.int64)


def _edge_index(lefts: np.ndarray, length: int):
    edges = np.unique(np.concatenate([lefts, lefts + length]))
    return edges, np.searchsorted(edges, lefts), np.searchsorted(edges, lefts + length)


def gt_mc_map(
    points: Sequence[tuple[int, int]],
    window,
    slide_dims: tuple[int, int],
    grid_stride: int = DEFAULT_GRID_STRIDE,
    microns_per_pixel: float = 1.0,
) -> ImagePlane:
    """Count points inside the window centred on every evaluation grid position.

    ``window`` needs ``w_px``/``h_px``. Grid position ``(i, j)`` sits at full
    resolution pixel ``(j * stride, i * stride)``; the window there spans
    ``[x - w//2, x - w//2 + w)`` horizontally (likewise vertically). Positions
    whose window leaves the slide are NaN.
    """
    width, height = slide_dims
    w, h = int(window.w_px), int(window.h_px)
    if grid_stride < 1:
        raise ParameterError(f"grid_stride must be >= 1, got {grid_stride}")
    if w > width or h > height:
        raise GeometryError(f"window {w}x{h} larger than slide {width}x{height}")

    gx = grid_positions(width, grid_stride)
    gy = grid_positions(height, grid_stride)
    out = np.full((len(gy), len(gx)), np.nan)
    lx = gx - w // 2
    ly = gy - h // 2
    okx = (lx >= 0) & (lx + w <= width)
    oky = (ly >= 0) & (ly + h <= height)
    if not okx.any() or not oky.any():
        return ImagePlane(out, microns_per_pixel * grid_stride)

    # Histogram the points into cells bounded by every window edge, then
    # read each window count off a summed-area table of that histogram.
    ex, lox, hix = _edge_index(lx[okx], w)
    ey, loy, hiy = _edge_index(ly[oky], h)
    hist = np.zeros((len(ey), len(ex)), dtype=np.int64)
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(pts):
        bx = np.searchsorted(ex, pts[:, 0], side="right") - 1
        by = np.searchsorted(ey, pts[:, 1], side="right") - 1
        keep = (bx >= 0) & (by >= 0)
        np.add.at(hist, (by[keep], bx[keep]), 1)
    sat = np.zeros((len(ey) + 1, len(ex) + 1), dtype=np.int64)
    sat[1:, 1:] = hist.cumsum(0).cumsum(1)
    counts = (
        sat[np.ix_(hiy, hix)] - sat[np.ix_(loy, hix)] - sat[np.ix_(hiy, lox)] + sat[np.ix_(loy, lox)]
    )
    out[np.ix_(oky, okx)] = counts
    return ImagePlane(out, microns_per_pixel * grid_stride)


def count_in_rect(points: Sequence[tuple[int, int]], rect) -> int:
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    return int(rect.contains(pts[:, 0], pts[:, 1]).sum())

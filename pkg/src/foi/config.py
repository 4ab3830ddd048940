"""Run configuration: one JSON document plus ``key=value`` overrides."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .annotations import DEFAULT_GRID_STRIDE
from .density import ASPECT, DEFAULT_DENSITY_DOWNSAMPLE, HPF10_AREA_MM2, FoiWindow
from .detector import DetectorSpec
from .raster import DEFAULT_MARGIN, DEFAULT_TILE_SIZE
from .synth import SynthConfig
from .tissue import DEFAULT_COVERAGE_THRESHOLD, DEFAULT_MASK_DOWNSAMPLE, DEFAULT_SE_RADIUS


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SlideEntry(_Strict):
    slide: Optional[str] = None
    annotations: Optional[str] = None
    seg_map: Optional[str] = None
    tile_dir: Optional[str] = None


class Paths(SlideEntry):
    out_dir: str = "out"
    # extra slides for ``evaluate``; each entry overrides the fields above
    slides: list[SlideEntry] = Field(default_factory=list)


class WindowConfig(_Strict):
    area_mm2: float = Field(HPF10_AREA_MM2, gt=0)
    aspect_w: float = Field(ASPECT[0], gt=0)
    aspect_h: float = Field(ASPECT[1], gt=0)


class RunConfig(_Strict):
    paths: Paths = Field(default_factory=Paths)
    microns_per_pixel: Optional[float] = Field(None, gt=0)
    tile_size: int = Field(DEFAULT_TILE_SIZE, gt=0)
    margin: int = Field(DEFAULT_MARGIN, ge=0)
    mask_downsample: int = Field(DEFAULT_MASK_DOWNSAMPLE, ge=1)
    density_downsample: int = Field(DEFAULT_DENSITY_DOWNSAMPLE, ge=1)
    window: WindowConfig = Field(default_factory=WindowConfig)
    coverage_threshold: float = Field(DEFAULT_COVERAGE_THRESHOLD, ge=0, le=1)
    se_radius: int = Field(DEFAULT_SE_RADIUS, ge=1)
    grid_stride: int = Field(DEFAULT_GRID_STRIDE, ge=1)
    detector: DetectorSpec = Field(default_factory=DetectorSpec)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    seed: int = 0
    threads: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.tile_size <= 2 * self.margin:
            raise ValueError(f"tile_size ({self.tile_size}) must exceed 2*margin ({2 * self.margin})")
        scale = self.detector.output_scale
        if self.density_downsample % scale:
            raise ValueError(f"density_downsample must be a multiple of detector.output_scale ({scale})")
        if self.tile_size % scale or self.margin % scale:
            raise ValueError(f"tile_size and margin must be multiples of detector.output_scale ({scale})")
        return self

    def foi_window(self, microns_per_pixel: float) -> FoiWindow:
        return FoiWindow(microns_per_pixel, self.window.area_mm2, self.window.aspect_w, self.window.aspect_h)


class ConfigError(ValueError):
    pass


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as JSON when possible."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override {item!r}: {part!r} is not a section")
            node = child
        node[parts[-1]] = _parse_value(raw)
    return data


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    apply_overrides(data, overrides or [])
    try:
        return RunConfig.model_validate(data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

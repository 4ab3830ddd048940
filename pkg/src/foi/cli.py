"""Command-line entry point: ``foi {synth,mask,detect,propose,evaluate}``.

Exit codes: 0 success, 2 configuration error, 3 missing input, 4 pipeline error.
Logs go to stderr; results are written to files under ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import formats
from .annotations import AnnotationSet, consensus_mitoses, load_annotations, save_annotations
from .config import ConfigError, RunConfig, SlideEntry, load_config
from .errors import FoiError
from .evaluation import emit_report
from .pipeline import compute_mask, compute_segmentation, run_slide
from .synth import gen_mitoses, gen_tissue

log = logging.getLogger("foi")

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_PIPELINE = 4


class MissingInput(Exception):
    pass


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _require(path, what: str) -> Path:
    if not path:
        raise MissingInput(f"no {what} given (set paths.{what})")
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"{what} not found: {p}")
    return p


class _Slide:
    """Lazily resolved inputs of one slide."""

    def __init__(self, cfg: RunConfig, entry: SlideEntry):
        self.cfg = cfg
        self.entry = entry
        self._annotations = None

    @property
    def annotations(self) -> AnnotationSet | None:
        if self._annotations is None and self.entry.annotations:
            self._annotations = load_annotations(_require(self.entry.annotations, "annotations"))
        return self._annotations

    @property
    def microns_per_pixel(self) -> float:
        if self.cfg.microns_per_pixel is not None:
            return self.cfg.microns_per_pixel
        if self.annotations is not None:
            return self.annotations.microns_per_pixel
        raise ConfigError("microns_per_pixel is unknown: set it in the config or provide annotations")

    @property
    def dims(self) -> tuple[int, int]:
        if self.annotations is not None:
            return self.annotations.width, self.annotations.height
        return formats.image_size(_require(self.entry.slide, "slide"))

    @property
    def slide_id(self) -> str:
        if self.annotations is not None:
            return self.annotations.slide_id
        return Path(self.entry.slide or "slide").stem

    def points(self):
        return consensus_mitoses(self.annotations) if self.annotations is not None else None

    def mask(self):
        raster = formats.read_image(_require(self.entry.slide, "slide"))
        if self.annotations is not None and raster.shape[:2] != (self.annotations.height, self.annotations.width):
            raise FoiError(
                f"slide raster {raster.shape[1]}x{raster.shape[0]} does not match annotation dims "
                f"{self.annotations.width}x{self.annotations.height}"
            )
        return compute_mask(raster, self.microns_per_pixel, self.cfg)

    def seg_map(self):
        if self.entry.seg_map:
            return formats.read_foim(_require(self.entry.seg_map, "seg_map"))
        return None

    def tile_dir(self):
        if self.cfg.detector.kind == "external":
            return _require(self.entry.tile_dir, "tile_dir")
        return None


def cmd_synth(cfg: RunConfig, out: Path) -> None:
    sc = cfg.synth
    rgb, reference = gen_tissue(sc)
    aset = gen_mitoses(sc, reference)
    formats.write_image(out / "slide.png", rgb)
    formats.write_mask(out / "tissue_reference.png", reference)
    save_annotations(aset, out / "annotations.json")
    log.info("synth: %s, %dx%d, %d annotations", sc.name, sc.width, sc.height, len(aset))


def cmd_mask(cfg: RunConfig, out: Path) -> None:
    slide = _Slide(cfg, cfg.paths)
    result = slide.mask()
    formats.write_mask(out / "valid_mask.pgm", result.valid)
    formats.write_mask(out / "tissue_mask.pgm", result.tissue)
    _write_json(out / "valid_mask.json", result.sidecar(cfg))


def cmd_detect(cfg: RunConfig, out: Path) -> None:
    slide = _Slide(cfg, cfg.paths)
    points = slide.points()
    if cfg.detector.kind != "external" and points is None:
        raise MissingInput(f"the {cfg.detector.kind} detector needs annotations (set paths.annotations)")
    seg = compute_segmentation(cfg, slide.dims, slide.microns_per_pixel, points or (), tile_dir=slide.tile_dir())
    formats.write_foim(out / "seg_map.foim", seg)


def _run(cfg: RunConfig, slide: _Slide):
    mask = slide.mask()
    seg = slide.seg_map()
    points = slide.points()
    if seg is None and cfg.detector.kind != "external" and points is None:
        raise MissingInput(f"the {cfg.detector.kind} detector needs annotations (set paths.annotations)")
    return run_slide(
        cfg,
        slide.slide_id,
        slide.dims,
        slide.microns_per_pixel,
        mask,
        points,
        seg_map=seg,
        tile_dir=None if seg is not None else slide.tile_dir(),
    )


def cmd_propose(cfg: RunConfig, out: Path) -> None:
    result = _run(cfg, _Slide(cfg, cfg.paths))
    _write_json(out / "proposal.json", result.proposal.to_json(result.slide_id, result.window, result.detector))


def cmd_evaluate(cfg: RunConfig, out: Path) -> None:
    base = cfg.paths.model_dump(exclude={"slides", "out_dir"})
    entries = [SlideEntry(**{**base, **e.model_dump(exclude_none=True)}) for e in cfg.paths.slides]
    entries = entries or [SlideEntry(**base)]
    reports = []
    proposals = []
    for entry in entries:
        slide = _Slide(cfg, entry)
        if slide.annotations is None:
            raise MissingInput("evaluate needs annotations for every slide")
        result = _run(cfg, slide)
        reports.append(result.report)
        proposals.append(result.proposal.to_json(result.slide_id, result.window, result.detector))
    _, _, pooled = emit_report(reports, out)
    _write_json(out / "proposals.json", proposals)
    log.info("evaluate: %d slide(s), pooled r = %s", len(reports), pooled)


COMMANDS = {
    "synth": cmd_synth,
    "mask": cmd_mask,
    "detect": cmd_detect,
    "propose": cmd_propose,
    "evaluate": cmd_evaluate,
}

_HELP = {
    "synth": "generate a synthetic slide and its annotations",
    "mask": "compute the tissue and valid masks",
    "detect": "run the detector tile by tile and write the stitched map",
    "propose": "propose the field of interest",
    "evaluate": "compare estimated and ground-truth counts",
}


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    """Flags accepted both before and after the subcommand."""

    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--config", default=default(None), help="run-config JSON file")
    parser.add_argument(
        "--set", action="append", default=default([]), metavar="KEY=VALUE", help="override a config key"
    )
    parser.add_argument("--out", default=default(None), help="output directory (overrides paths.out_dir)")
    parser.add_argument("--threads", type=int, default=default(None), help="worker threads for tile processing")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foi", description="Field-of-interest proposal for mitotic counting on whole-slide images."
    )
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _global_flags(sub.add_parser(name, help=_HELP[name]), suppress=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    overrides = list(args.set)
    if args.out:
        overrides.append(f"paths.out_dir={json.dumps(args.out)}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    try:
        cfg = load_config(args.config, overrides)
    except FileNotFoundError as exc:
        print(f"foi: config not found: {exc.filename}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"foi: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.paths.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"foi: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingInput, FileNotFoundError) as exc:
        print(f"foi: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (FoiError, OSError, ValueError) as exc:
        print(f"foi: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return 0


if __name__ == "__main__":
    sys.exit(main())

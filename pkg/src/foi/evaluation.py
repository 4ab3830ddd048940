"""Evaluation harness: count correlation, count distributions and proposal rank."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .density import FoiProposal
from .errors import DimensionError, EmptyValidMaskError, FoiError, ParameterError, UndefinedCorrelationError
from .raster import ImagePlane

log = logging.getLogger(__name__)

REPORT_JSON = "report.json"
SCATTER_CSV = "scatter.csv"
SCATTER_COLUMNS = ("slide_id", "grid_x", "grid_y", "gt_mc", "est_mc")


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise UndefinedCorrelationError(f"series lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise UndefinedCorrelationError("correlation needs at least two samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(max(r, -1.0), 1.0))


def quantiles(values) -> dict[str, float]:
    """Five-number summary using inclusive linear interpolation."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ParameterError("quantiles of an empty series")
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(a) for a in q)))


def proposal_rank(proposal_value, distribution) -> float:
    """Empirical CDF of ``distribution`` at the proposal's value."""
    d = np.asarray(distribution, dtype=np.float64).ravel()
    if d.size == 0:
        raise ParameterError("proposal rank against an empty distribution")
    return float(np.count_nonzero(d <= proposal_value)) / d.size


@dataclass
class SlideReport:
    slide_id: str
    pearson_r: Optional[float]
    mc_quantiles: dict[str, float]
    proposal_gt_mc: int
    proposal_rank: float
    n_positions: int
    notes: list[str] = field(default_factory=list)
    # per-position (grid_x, grid_y, gt_mc, est_mc); written to CSV, not JSON
    scatter: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)), repr=False)

    def to_json(self) -> dict:
        out = {
            "slide_id": self.slide_id,
            "pearson_r": self.pearson_r,
            "mc_quantiles": self.mc_quantiles,
            "proposal_gt_mc": self.proposal_gt_mc,
            "proposal_rank": self.proposal_rank,
            "n_positions": self.n_positions,
        }
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def evaluate_slide(
    est_map: ImagePlane,
    gt_map: ImagePlane,
    valid: ImagePlane,
    proposal: FoiProposal,
    slide_id: str = "",
    grid_coords: tuple[np.ndarray, np.ndarray] | None = None,
) -> SlideReport:
    """Compare estimated and ground-truth counts over valid, defined grid positions.

    All three maps must share one grid. ``grid_coords`` (x and y coordinates
    of the grid columns/rows) label the scatter rows; grid indices are used
    when omitted. An undefined correlation is recorded in ``notes`` and
    ``pearson_r`` is left as ``None``; quantiles and rank are still filled.
    """
    if not (est_map.shape == gt_map.shape == valid.shape):
        raise DimensionError(f"maps differ in shape: {est_map.shape}, {gt_map.shape}, {valid.shape}")
    if proposal.gt_mc is None:
        raise ParameterError("proposal carries no ground-truth count")
    est = np.asarray(est_map.values, dtype=np.float64)
    gt = np.asarray(gt_map.values, dtype=np.float64)
    use = (np.asarray(valid.values) > 0) & ~np.isnan(est) & ~np.isnan(gt)
    if not use.any():
        raise EmptyValidMaskError(f"slide {slide_id!r}: no valid evaluation positions")
    rows, cols = np.nonzero(use)
    if grid_coords is None:
        xs, ys = cols, rows
    else:
        xs, ys = np.asarray(grid_coords[0])[cols], np.asarray(grid_coords[1])[rows]
    gt_v, est_v = gt[use], est[use]

    notes = []
    try:
        r = pearson(est_v, gt_v)
    except UndefinedCorrelationError as exc:
        log.warning("slide %s: %s", slide_id, exc)
        notes.append(f"pearson undefined: {exc}")
        r = None
    return SlideReport(
        slide_id=slide_id,
        pearson_r=r,
        mc_quantiles=quantiles(gt_v),
        proposal_gt_mc=int(proposal.gt_mc),
        proposal_rank=proposal_rank(proposal.gt_mc, gt_v),
        n_positions=int(use.sum()),
        notes=notes,
        scatter=np.column_stack([xs, ys, gt_v, est_v]).astype(np.float64),
    )


def pooled_pearson(reports: Sequence[SlideReport]) -> Optional[float]:
    gt = np.concatenate([r.scatter[:, 2] for r in reports])
    est = np.concatenate([r.scatter[:, 3] for r in reports])
    try:
        return pearson(est, gt)
    except UndefinedCorrelationError:
        return None


def emit_report(reports: Sequence[SlideReport], out_dir) -> tuple[Path, Path, Optional[float]]:
    """Write ``report.json`` and ``scatter.csv``; return both paths and the pooled r."""
    if not reports:
        raise ParameterError("no slide reports to emit")
    out_dir = Path(out_dir)
    pooled = pooled_pearson(reports)
    doc = {"slides": [r.to_json() for r in reports], "pooled_pearson": pooled}
    json_path = out_dir / REPORT_JSON
    csv_path = out_dir / SCATTER_CSV
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(SCATTER_COLUMNS)
            for rep in reports:
                for gx, gy, gt, est in rep.scatter:
                    writer.writerow([rep.slide_id, int(gx), int(gy), int(gt), repr(float(est))])
    except OSError as exc:
        raise FoiError(f"cannot write report to {out_dir}: {exc}") from exc
    return json_path, csv_path, pooled


def read_scatter(path) -> dict[str, np.ndarray]:
    """Load a scatter CSV back as ``{slide_id: array of (grid_x, grid_y, gt_mc, est_mc)}``."""
    rows: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["slide_id"], []).append(
                [float(rec["grid_x"]), float(rec["grid_y"]), float(rec["gt_mc"]), float(rec["est_mc"])]
            )
    return {k: np.asarray(v) for k, v in rows.items()}

import json

import numpy as np
import pytest

from foi.density import FoiProposal
from foi.errors import DimensionError, EmptyValidMaskError, ParameterError, UndefinedCorrelationError
from foi.evaluation import (
    SlideReport,
    emit_report,
    evaluate_slide,
    pearson,
    proposal_rank,
    quantiles,
    read_scatter,
)
from foi.raster import ImagePlane, Rect


def plane(v):
    return ImagePlane(np.asarray(v, dtype=np.float64), 256.0)


def proposal(gt):
    return FoiProposal(Rect(0, 0, 10, 10), 1.0, gt)


class TestPearson:
    def test_identity_and_negation(self, rng):
        x = rng.random(50)
        assert pearson(x, x) == pytest.approx(1.0)
        assert pearson(x, -x) == pytest.approx(-1.0)

    def test_example(self):
        assert pearson([1, 2, 3], [2, 4, 5]) == pytest.approx(0.98198, abs=1e-5)

    @pytest.mark.parametrize("x, y", [([1.0], [1.0]), ([1, 2], [1, 2, 3]), ([3, 3, 3], [3, 3, 3]), ([1, 2, 3], [5, 5, 5])])
    def test_undefined(self, x, y):
        with pytest.raises(UndefinedCorrelationError):
            pearson(x, y)

    def test_affine_invariance(self, rng):
        x, y = rng.random(200), rng.random(200)
        r = pearson(x, y)
        for a, b in [(3.0, -7.0), (1e-3, 5.0), (250.0, 0.0)]:
            assert abs(pearson(a * x + b, y) - r) <= 1e-9
            assert abs(pearson(x, a * y + b) - r) <= 1e-9


class TestQuantiles:
    def test_examples(self):
        assert quantiles([5]) == dict(min=5, q1=5, median=5, q3=5, max=5)
        assert quantiles([1, 2, 3, 4, 5]) == dict(min=1, q1=2, median=3, q3=4, max=5)
        q = quantiles([1, 2, 3, 4])
        assert (q["q1"], q["median"], q["q3"]) == (1.75, 2.5, 3.25)

    def test_empty(self):
        with pytest.raises(ParameterError):
            quantiles([])

    def test_ordered(self, rng):
        q = quantiles(rng.normal(size=101))
        assert q["min"] <= q["q1"] <= q["median"] <= q["q3"] <= q["max"]


class TestRank:
    def test_examples(self):
        d = list(range(1, 101))
        assert proposal_rank(100, d) == 1.0
        assert proposal_rank(0, d) == 0.0
        assert proposal_rank(50.5, d) == pytest.approx(0.5, abs=0.01)

    def test_empty(self):
        with pytest.raises(ParameterError):
            proposal_rank(1, [])

    def test_monotone(self, rng):
        d = rng.integers(0, 20, 300)
        ranks = [proposal_rank(v, d) for v in range(-1, 22)]
        assert ranks == sorted(ranks)


class TestEvaluateSlide:
    def test_perfect_estimate(self, rng):
        gt = rng.integers(0, 30, (8, 10)).astype(float)
        rep = evaluate_slide(plane(gt), plane(gt), plane(np.ones((8, 10))), proposal(int(gt.max())), "s")
        assert rep.pearson_r == pytest.approx(1.0) and rep.proposal_rank == 1.0
        assert rep.n_positions == 80

    def test_excludes_invalid_and_undefined(self, rng):
        gt = rng.integers(0, 30, (8, 10)).astype(float)
        est = gt + rng.random((8, 10))
        gt[0, :] = np.nan
        valid = np.ones((8, 10))
        valid[:, 0] = 0
        xs, ys = np.arange(10) * 256, np.arange(8) * 256
        rep = evaluate_slide(plane(est), plane(gt), plane(valid), proposal(3), "s", (xs, ys))
        assert rep.n_positions == 7 * 9
        assert set(rep.scatter[:, 0]) == set(xs[1:]) and set(rep.scatter[:, 1]) == set(ys[1:])

    def test_constant_gt(self, rng):
        gt = np.full((5, 5), 4.0)
        rep = evaluate_slide(plane(rng.random((5, 5))), plane(gt), plane(np.ones((5, 5))), proposal(4), "flat")
        assert rep.pearson_r is None and rep.notes
        assert rep.mc_quantiles["median"] == 4.0 and rep.proposal_rank == 1.0

    def test_no_valid_positions(self):
        with pytest.raises(EmptyValidMaskError):
            evaluate_slide(plane(np.ones((3, 3))), plane(np.ones((3, 3))), plane(np.zeros((3, 3))), proposal(1))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            evaluate_slide(plane(np.ones((3, 3))), plane(np.ones((3, 4))), plane(np.ones((3, 3))), proposal(1))


def fake_report(rng, slide_id, n=40):
    gt = rng.integers(0, 25, n).astype(float)
    est = gt * 0.9 + rng.normal(0, 1.5, n)
    scatter = np.column_stack([np.arange(n) * 256, np.zeros(n), gt, est])
    return SlideReport(slide_id, pearson(est, gt), quantiles(gt), int(gt.max()), 1.0, n, scatter=scatter)


class TestEmit:
    def test_single_slide(self, tmp_path, rng):
        rep = fake_report(rng, "a")
        json_path, csv_path, pooled = emit_report([rep], tmp_path)
        doc = json.loads(json_path.read_text())
        assert len(doc["slides"]) == 1 and doc["pooled_pearson"] == pytest.approx(rep.pearson_r, abs=1e-12)
        assert csv_path.read_text().splitlines()[0] == "slide_id,grid_x,grid_y,gt_mc,est_mc"

    def test_pooled_matches_csv(self, tmp_path, rng):
        reps = [fake_report(rng, f"s{i}", 30 + i) for i in range(10)]
        _, csv_path, pooled = emit_report(reps, tmp_path)
        rows = read_scatter(csv_path)
        assert sorted(rows) == sorted(r.slide_id for r in reps)
        all_rows = np.concatenate(list(rows.values()))
        assert abs(pearson(all_rows[:, 3], all_rows[:, 2]) - pooled) <= 1e-9

    def test_empty(self, tmp_path):
        with pytest.raises(ParameterError):
            emit_report([], tmp_path)

import math

import numpy as np

from foi.annotations import consensus_mitoses, gt_mc_map
from foi.density import FoiWindow
from foi.raster import ImagePlane, to_grayscale
from foi.synth import SynthConfig, gen_mitoses, gen_tissue, thomas_points, tissue_shape

SMALL = dict(width=1024, height=768, microns_per_pixel=8.0)


def full_mask(cfg):
    return ImagePlane(np.ones((cfg.height, cfg.width), np.uint8), cfg.microns_per_pixel)


class TestTissue:
    def test_empty_fill(self):
        rgb, mask = gen_tissue(SynthConfig(**SMALL, tissue_fill=0.0))
        assert not mask.values.any() and to_grayscale(rgb).values.min() >= 230

    def test_full_fill(self):
        rgb, mask = gen_tissue(SynthConfig(**SMALL, tissue_fill=1.0))
        gray = to_grayscale(rgb).values
        assert mask.values.all() and 120 <= gray.min() and gray.max() <= 200

    def test_intensity_ranges(self):
        rgb, mask = gen_tissue(SynthConfig(**SMALL, seed=3))
        gray = to_grayscale(rgb).values
        inside = mask.values > 0
        assert gray[~inside].min() >= 230
        assert gray[inside].min() >= 120 and gray[inside].max() <= 200

    def test_half_fill(self):
        fractions = [tissue_shape(SynthConfig(**SMALL, tissue_fill=0.5, seed=s)).mean() for s in range(100)]
        assert all(abs(f - 0.5) <= 0.05 for f in fractions)

    def test_deterministic(self):
        cfg = SynthConfig(**SMALL, seed=9)
        a, ma = gen_tissue(cfg)
        b, mb = gen_tissue(cfg)
        assert np.array_equal(a, b) and np.array_equal(ma.values, mb.values)
        assert gen_mitoses(cfg, ma) == gen_mitoses(cfg, mb)


class TestMitoses:
    def test_zero_intensity(self):
        cfg = SynthConfig(**SMALL, cluster_intensity=0.0)
        assert len(gen_mitoses(cfg, full_mask(cfg))) == 0

    def test_points_inside_tissue(self):
        for seed in range(10):
            cfg = SynthConfig(**SMALL, seed=seed, cluster_intensity=3.0)
            _, mask = gen_tissue(cfg)
            pts = thomas_points(cfg, mask)
            assert len(pts) and mask.values[pts[:, 1], pts[:, 0]].all()

    def test_expected_count(self):
        lam, mu = 5.0, 10.0
        cfg0 = SynthConfig(width=1000, height=1000, microns_per_pixel=1.0, cluster_intensity=lam,
                           offspring_mean=mu, cluster_sigma=1.0)
        mask = full_mask(cfg0)
        counts = [len(thomas_points(cfg0.model_copy(update={"seed": s}), mask)) for s in range(1000)]
        area = 1.0
        expected = lam * area * mu
        sigma = math.sqrt(lam * area * (mu + mu * mu) / len(counts))
        assert abs(np.mean(counts) - expected) <= 3 * sigma

    def test_decoys_are_filtered(self):
        cfg = SynthConfig(**SMALL, seed=1, cluster_intensity=3.0, decoy_fraction=0.5)
        aset = gen_mitoses(cfg, full_mask(cfg))
        kept = consensus_mitoses(aset)
        assert 0 < len(kept) < len(aset)
        assert abs(len(kept) / len(aset) - 0.5) < 0.1

    def test_patchy(self):
        window = FoiWindow(4.0)
        for seed in range(20):
            cfg = SynthConfig(width=2048, height=1536, microns_per_pixel=4.0, seed=seed)
            _, mask = gen_tissue(cfg)
            pts = consensus_mitoses(gen_mitoses(cfg, mask))
            counts = gt_mc_map(pts, window, (cfg.width, cfg.height), 64, 4.0).values
            counts = counts[~np.isnan(counts)]
            assert counts.max() > 0 and counts.max() >= 2 * np.median(counts)

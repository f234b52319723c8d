import numpy as np
import pytest

from exemplarcount import (
    DegenerateMapError,
    DegenerateNormalizationError,
    ExemplarSet,
    GlobalMask,
    PatchBox,
    SimilarityMap,
    ValidationError,
    accumulate_global_mask,
    elliptical_mask,
    minmax,
    normalization_factor,
    normalize,
    threshold_and_count,
    unit_count,
)

PI4 = np.pi / 4.0


def sim(values):
    return SimilarityMap(values=np.asarray(values, dtype=np.float64))


class TestMinmax:
    def test_three_values(self):
        out = minmax(sim([[-2.0, 0.0, 2.0]]))
        assert np.allclose(out.values, [[0.0, 0.5, 1.0]])

    def test_idempotent_on_attained_bounds(self, rng):
        vals = rng.uniform(size=(4, 5))
        vals[0, 0], vals[-1, -1] = 0.0, 1.0
        out = minmax(sim(vals))
        assert np.allclose(out.values, vals, atol=1e-15)

    def test_constant_map_degenerate(self):
        with pytest.raises(DegenerateMapError):
            minmax(sim(np.full((3, 3), 0.7)))

    def test_bounds(self, rng):
        out = minmax(sim(rng.standard_normal((6, 7))))
        assert out.values.min() == 0.0 and out.values.max() == 1.0


class TestNormalizationFactor:
    def test_uniform_region(self):
        g = GlobalMask(weights=np.array([[1.0, 1.0], [1.0, 1.0]]), n_masks=1)
        s = sim(np.full((2, 2), 0.5))
        assert normalization_factor(s, g, 1) == pytest.approx(2.0)

    def test_two_disjoint_cells(self):
        g = np.zeros((1, 4))
        g[0, 0] = g[0, 2] = PI4
        s = np.zeros((1, 4))
        s[0, 0], s[0, 2] = 1.0, 0.5
        z = normalization_factor(sim(s), GlobalMask(weights=g, n_masks=2), 2)
        assert z == pytest.approx(PI4 * 1.5 / 2.0)

    def test_zero_response_degenerate(self):
        g = GlobalMask(weights=np.eye(3), n_masks=1)
        s = sim(1.0 - np.eye(3))  # zero wherever the mask is nonzero
        with pytest.raises(DegenerateNormalizationError):
            normalization_factor(s, g, 1)


class TestNormalize:
    def test_divides_and_sums(self):
        s = sim(np.full((2, 5), 1.0))
        d = normalize(s, z=2.0)
        assert d.raw_count == pytest.approx(5.0)
        assert d.count == d.raw_count
        assert d.tau is None

    def test_identity_at_z_one(self, rng):
        vals = rng.uniform(size=(3, 3))
        d = normalize(sim(vals), z=1.0)
        assert np.array_equal(d.values, vals)

    def test_exemplar_mass_identity(self, rng):
        # sum of mask * normalized map equals the number of exemplars
        for _ in range(50):
            rows, cols = int(rng.integers(6, 14)), int(rng.integers(6, 14))
            s01 = minmax(sim(rng.standard_normal((rows, cols))))
            n = int(rng.integers(1, 4))
            masks = []
            for _ in range(n):
                c1 = int(rng.integers(0, cols - 1))
                r1 = int(rng.integers(0, rows - 1))
                w = int(rng.integers(1, cols - c1 + 1))
                h = int(rng.integers(1, rows - r1 + 1))
                masks.append(elliptical_mask(PatchBox(c1, r1, c1 + w, r1 + h)))
            gmask = accumulate_global_mask(masks, (rows, cols))
            z = normalization_factor(s01, gmask, n)
            d = normalize(s01, z)
            assert (gmask.weights * d.values).sum() == pytest.approx(n, abs=1e-6)


class TestUnitCount:
    def test_single_box(self):
        assert unit_count(ExemplarSet((PatchBox(0, 0, 3, 2),))) == pytest.approx(1 / 6)

    def test_two_boxes(self):
        boxes = (PatchBox(0, 0, 2, 2), PatchBox(0, 0, 3, 2))
        assert unit_count(ExemplarSet(boxes)) == pytest.approx(0.2)

    def test_three_unit_boxes(self):
        boxes = tuple(PatchBox(i, 0, i + 1, 1) for i in range(3))
        assert unit_count(ExemplarSet(boxes)) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            ExemplarSet(())


class TestThresholdAndCount:
    def test_direct_application(self):
        vals = np.array([[0.1, 0.2, 0.167]])
        d = normalize(sim(vals), z=1.0)
        boxes = ExemplarSet((PatchBox(0, 0, 3, 2),))  # area 6 -> tau = 1/6
        out = threshold_and_count(d, boxes)
        assert out.tau == 1.0 / 6.0
        assert np.allclose(out.values, [[0.0, 0.2, 0.167]])
        assert out.count == pytest.approx(0.367)

    def test_boundary_value_survives(self):
        d = normalize(sim(np.array([[1.0 / 6.0, 1.0]])), z=1.0)
        out = threshold_and_count(d, ExemplarSet((PatchBox(0, 0, 3, 2),)))
        assert out.values[0, 0] == 1.0 / 6.0

    def test_all_above_threshold(self, rng):
        vals = rng.uniform(0.5, 1.0, size=(3, 3))
        d = normalize(sim(vals), z=1.0)
        out = threshold_and_count(d, ExemplarSet((PatchBox(0, 0, 2, 1),)))
        assert out.count == pytest.approx(d.raw_count)

    def test_tau_depends_only_on_max_area(self):
        a = ExemplarSet((PatchBox(0, 0, 3, 2), PatchBox(0, 0, 2, 2)))
        b = ExemplarSet((PatchBox(0, 0, 2, 2), PatchBox(0, 0, 2, 3)))
        d = normalize(sim(np.array([[0.5, 1.0]])), z=1.0)
        assert threshold_and_count(d, a).tau == threshold_and_count(d, b).tau == 1 / 6

    def test_never_increases_count(self, rng):
        for _ in range(100):
            vals = rng.uniform(size=(5, 5))
            vals[0, 0] = 1.0  # keep the map non-constant with a known max
            d = normalize(sim(vals), z=float(rng.uniform(0.2, 3.0)))
            w = int(rng.integers(1, 5))
            h = int(rng.integers(1, 5))
            out = threshold_and_count(d, ExemplarSet((PatchBox(0, 0, w, h),)))
            assert out.count <= d.raw_count + 1e-12

    def test_tau_monotone_in_largest_area(self):
        d = normalize(sim(np.array([[0.5, 1.0]])), z=1.0)
        taus = [
            threshold_and_count(d, ExemplarSet((PatchBox(0, 0, w, 1),))).tau
            for w in (1, 2, 4, 8)
        ]
        assert taus == sorted(taus, reverse=True)


class TestAffineInvariance:
    def test_full_head_absorbs_affine_maps(self, rng):
        for _ in range(50):
            rows, cols = 8, 9
            raw = rng.standard_normal((rows, cols))
            a = float(rng.uniform(0.1, 10.0))
            b = float(rng.uniform(-5.0, 5.0))
            masks = [elliptical_mask(PatchBox(1, 1, 4, 4))]
            gmask = accumulate_global_mask(masks, (rows, cols))
            boxes = ExemplarSet((PatchBox(1, 1, 4, 4),))

            def head(values):
                s01 = minmax(sim(values))
                z = normalization_factor(s01, gmask, 1)
                return threshold_and_count(normalize(s01, z), boxes)

            base = head(raw)
            shifted = head(a * raw + b)
            assert shifted.count == pytest.approx(base.count, rel=1e-6, abs=1e-6)
            assert shifted.tau == base.tau

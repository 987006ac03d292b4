import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardiorad.firstorder import first_order_features, histogram_probabilities
from cardiorad.preprocess import discretize

from conftest import line_region

values = st.lists(st.integers(-300, 300), min_size=2, max_size=50)

SHIFT_INVARIANT = ("variance", "standard_deviation", "mean_absolute_deviation", "robust_mad",
                   "range", "interquartile_range", "skewness", "kurtosis", "entropy", "uniformity")
SHIFT_COVARIANT = ("minimum", "p10", "median", "mean", "p90", "maximum")


def features(vals, bins=32, spacing=(1.0, 1.0, 1.0)):
    return first_order_features(discretize(line_region(vals, spacing), bins))


class TestFixtures:
    def test_one_two_three(self):
        f = features([1, 2, 3])
        assert f.mean == 2.0
        assert f.energy == 14.0
        assert f.variance == pytest.approx(2 / 3, abs=1e-15)
        assert f.root_mean_squared == pytest.approx(math.sqrt(14 / 3), abs=1e-15)
        assert f.median == 2.0
        assert f.skewness == 0.0

    def test_constant(self):
        f = features([5, 5, 5, 5])
        assert f.entropy == 0.0
        assert f.uniformity == 1.0
        assert f.skewness == 0.0 and f.kurtosis == 0.0
        assert f.range == 0.0

    def test_uniform_histogram(self):
        f = features([0, 1, 2, 3] * 3, bins=4)
        assert f.entropy == pytest.approx(2.0, abs=1e-15)
        assert f.uniformity == pytest.approx(0.25, abs=1e-15)

    def test_two_point_kurtosis(self):
        assert features([-3.0, 4.0] * 5).kurtosis == pytest.approx(1.0, abs=1e-12)

    def test_total_energy_scales_with_voxel_volume(self):
        f = features([1, 2, 3], spacing=(1.5, 1.5, 8.0))
        assert f.total_energy == pytest.approx(14.0 * 18.0)

    def test_histogram(self):
        p = histogram_probabilities(np.array([1, 1, 3]), 4)
        np.testing.assert_allclose(p, [2 / 3, 0, 1 / 3, 0])


class TestProperties:
    @given(values, st.integers(-1000, 1000))
    @settings(max_examples=100, deadline=None)
    def test_shift(self, vals, b):
        base = features(vals).as_dict()
        moved = features(np.asarray(vals, dtype=float) + b).as_dict()
        for name in SHIFT_INVARIANT:
            assert moved[name] == pytest.approx(base[name], rel=1e-9, abs=1e-9)
        for name in SHIFT_COVARIANT:
            assert moved[name] == pytest.approx(base[name] + b, rel=1e-12, abs=1e-9)

    @given(values, st.floats(0.1, 10.0))
    @settings(max_examples=100, deadline=None)
    def test_scale(self, vals, a):
        base = features(vals).as_dict()
        scaled = features(np.asarray(vals, dtype=float) * a).as_dict()
        for name in ("skewness", "kurtosis", "entropy", "uniformity"):
            assert scaled[name] == pytest.approx(base[name], rel=1e-9, abs=1e-9)
        assert scaled["standard_deviation"] == pytest.approx(base["standard_deviation"] * a,
                                                             rel=1e-9)

    @given(values, st.randoms(use_true_random=False))
    @settings(max_examples=50, deadline=None)
    def test_permutation(self, vals, rnd):
        shuffled = list(vals)
        rnd.shuffle(shuffled)
        a, b = features(vals).as_dict(), features(shuffled).as_dict()
        for name in a:
            assert b[name] == pytest.approx(a[name], rel=1e-12, abs=1e-12)

    @given(values, st.integers(2, 64))
    @settings(max_examples=100, deadline=None)
    def test_invariants(self, vals, bins):
        f = features(vals, bins)
        assert f.minimum <= f.p10 <= f.median <= f.p90 <= f.maximum
        assert f.variance == pytest.approx(f.standard_deviation ** 2, rel=1e-12)
        assert 0 < f.uniformity <= 1
        assert 0 <= f.entropy <= math.log2(bins) + 1e-12

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from cardiorad.preprocess import DiscretizedRegion
from cardiorad.texture import (DIRECTIONS, GLCM_FEATURES, GLRLM_FEATURES, GLSZM_FEATURES,
                               CooccurrenceMatrix, glcm_features, glcm_from_grid,
                               glrlm_features, glrlm_from_grid, glszm_features, glszm_from_grid,
                               texture_features)

GLCM_SLICE = [[1, 1, 2], [1, 2, 2], [2, 2, 3]]
ZONE_SLICE = [[1, 1, 2], [1, 2, 2], [3, 2, 2]]
ROW = np.array([1, 1, 2, 2, 2, 3])[:, None, None]


def random_grid(rng, max_dim=6, max_ng=4, fill=0.7):
    shape = tuple(rng.integers(1, max_dim + 1, size=3))
    ng = int(rng.integers(1, max_ng + 1))
    grid = rng.integers(1, ng + 1, size=shape)
    grid[rng.random(shape) > fill] = 0
    if not grid.any():
        grid.flat[0] = 1
    return grid, max(ng, 1)


grids = st.integers(1, 4).flatmap(
    lambda ng: st.tuples(
        arrays(np.int64, st.tuples(*[st.integers(1, 5)] * 3), elements=st.integers(0, ng)),
        st.just(ng)))


class TestDirections:
    def test_thirteen_unique(self):
        assert len(DIRECTIONS) == 13
        assert len(set(DIRECTIONS)) == 13

    def test_cover_all_neighbours_once(self):
        both = list(DIRECTIONS) + [tuple(-c for c in d) for d in DIRECTIONS]
        assert sorted(both) == sorted(oracles.NEIGHBOURS)


class TestGlcm:
    def test_worked_slice(self):
        m = glcm_from_grid(GLCM_SLICE, 3, offsets=[(1, 0, 0)])
        expected = np.array([[2, 2, 0], [2, 4, 1], [0, 1, 0]])
        np.testing.assert_array_equal(m.counts, expected)
        f = glcm_features(m)
        assert f["Contrast"] == pytest.approx(0.5, abs=1e-12)
        assert f["MaximumProbability"] == pytest.approx(1 / 3, abs=1e-12)
        assert f["Id"] == pytest.approx(0.75, abs=1e-12)

    def test_constant_region(self):
        m = glcm_from_grid(np.full((3, 2, 2), 1), 1)
        f = glcm_features(m)
        assert f["Contrast"] == 0.0
        assert f["MaximumProbability"] == 1.0
        assert f["JointEntropy"] == 0.0
        assert f["Correlation"] == 1.0

    def test_single_voxel_is_degenerate(self):
        m = glcm_from_grid(np.array([[[0, 0], [0, 3]]]), 4)
        assert m.degenerate
        assert m.entries[2, 2] == 1.0
        assert all(np.isfinite(v) for v in glcm_features(m).values())

    def test_diagonal_matrix(self):
        ng = 4
        m = CooccurrenceMatrix(ng, np.eye(ng, dtype=np.int64), np.eye(ng) / ng, (), 1)
        f = glcm_features(m)
        assert f["Contrast"] == 0.0
        assert f["JointEnergy"] == pytest.approx(1 / ng)

    def test_matches_pair_scan(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            grid, ng = random_grid(rng, max_dim=5)
            m = glcm_from_grid(grid, ng)
            np.testing.assert_array_equal(m.counts, oracles.glcm_counts(grid, ng))
            if not m.degenerate:
                assert m.entries.sum() == pytest.approx(1.0, abs=1e-12)
                np.testing.assert_array_equal(m.entries, m.entries.T)

    @given(grids)
    @settings(max_examples=60, deadline=None)
    def test_imc_bounds(self, case):
        grid, ng = case
        if not grid.any():
            return
        f = glcm_features(glcm_from_grid(grid, ng))
        assert f["Imc1"] <= 1e-12
        assert 0.0 <= f["Imc2"] < 1.0
        assert 0.0 < f["MaximumProbability"] <= 1.0
        assert f["Contrast"] >= 0.0


class TestGlrlm:
    def test_worked_row(self):
        m = glrlm_from_grid(ROW, 3, directions=[(1, 0, 0)])
        assert m.counts[0, 0, 1] == 1 and m.counts[0, 1, 2] == 1 and m.counts[0, 2, 0] == 1
        assert m.counts.sum() == 3
        f = glrlm_features(m)
        assert f["ShortRunEmphasis"] == pytest.approx((1 / 4 + 1 / 9 + 1) / 3, abs=1e-12)
        assert f["ShortRunEmphasis"] == pytest.approx(0.4537, abs=5e-5)
        assert f["RunPercentage"] == pytest.approx(0.5, abs=1e-12)

    def test_constant_row(self):
        n = 7
        m = glrlm_from_grid(np.ones((n, 1, 1), dtype=int), 1, directions=[(1, 0, 0)])
        f = glrlm_features(m)
        assert f["LongRunEmphasis"] == pytest.approx(n ** 2)
        assert f["RunPercentage"] == pytest.approx(1 / n)

    def test_all_unit_runs(self):
        grid = np.indices((4, 4, 4)).sum(axis=0) % 2 + 1
        m = glrlm_from_grid(grid, 2, directions=[(1, 0, 0), (0, 1, 0), (0, 0, 1)])
        f = glrlm_features(m)
        assert f["ShortRunEmphasis"] == pytest.approx(1.0)
        assert f["LongRunEmphasis"] == pytest.approx(1.0)

    def test_matches_line_walk(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            grid, ng = random_grid(rng, max_dim=5)
            m = glrlm_from_grid(grid, ng)
            for k, d in enumerate(m.directions):
                np.testing.assert_array_equal(
                    m.counts[k], oracles.direction_runs(grid, d, ng, m.max_run_length))

    @given(grids)
    @settings(max_examples=60, deadline=None)
    def test_run_census(self, case):
        grid, ng = case
        m = glrlm_from_grid(grid, ng)
        lengths = np.arange(1, m.max_run_length + 1)
        for per_dir in m.counts:
            assert int((per_dir * lengths).sum()) == int((grid > 0).sum())


class TestGlszm:
    def test_worked_slice(self):
        m = glszm_from_grid(ZONE_SLICE, 3)
        assert m.num_zones == 3
        assert m.counts[0, 2] == 1 and m.counts[1, 4] == 1 and m.counts[2, 0] == 1
        f = glszm_features(m)
        assert f["SmallAreaEmphasis"] == pytest.approx((1 / 9 + 1 / 25 + 1) / 3, abs=1e-12)
        assert f["SmallAreaEmphasis"] == pytest.approx(0.3837, abs=5e-5)
        assert f["ZonePercentage"] == pytest.approx(1 / 3, abs=1e-12)

    def test_constant_region(self):
        grid = np.ones((2, 3, 2), dtype=int)
        f = glszm_features(glszm_from_grid(grid, 1))
        assert f["LargeAreaEmphasis"] == pytest.approx(12 ** 2)
        assert f["ZonePercentage"] == pytest.approx(1 / 12)

    def test_checkerboard_slice(self):
        grid = (np.indices((4, 4)).sum(axis=0) % 2 + 1)[:, :, None]
        # diagonal neighbours join same-colour squares under 26-connectivity
        m = glszm_from_grid(grid, 2)
        assert m.num_zones == 2
        # a 3D checkerboard in face-adjacency has no same-level neighbours at all
        sparse = np.zeros((4, 4, 1), dtype=int)
        sparse[::2, ::2] = 1
        sparse[1::2, ::2] = 2
        f = glszm_features(glszm_from_grid(sparse, 2))
        assert f["SmallAreaEmphasis"] == pytest.approx(1.0)

    def test_matches_flood_fill(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            grid, ng = random_grid(rng)
            np.testing.assert_array_equal(glszm_from_grid(grid, ng).counts,
                                          oracles.zone_counts(grid, ng))

    @given(grids)
    @settings(max_examples=60, deadline=None)
    def test_zone_census(self, case):
        grid, ng = case
        if not grid.any():
            return
        m = glszm_from_grid(grid, ng)
        sizes = np.arange(1, m.max_zone_size + 1)
        assert int((m.counts * sizes).sum()) == int((grid > 0).sum())
        assert glszm_features(m)["ZoneEntropy"] >= 0.0


class TestRegionFeatures:
    @pytest.mark.parametrize("grid", [
        np.array([[[2]]]),
        np.full((3, 3, 3), 1),
        np.arange(1, 9).reshape(2, 2, 2),
    ])
    def test_finite_for_edge_regions(self, grid):
        feats = texture_features(DiscretizedRegion.from_level_grid(grid))
        assert list(feats["glcm"]) == list(GLCM_FEATURES)
        assert list(feats["glrlm"]) == list(GLRLM_FEATURES)
        assert list(feats["glszm"]) == list(GLSZM_FEATURES)
        for family in feats.values():
            assert all(np.isfinite(v) for v in family.values())

    @given(grids)
    @settings(max_examples=40, deadline=None)
    def test_level_reversal(self, case):
        grid, ng = case
        if not grid.any():
            return
        flipped = np.where(grid > 0, ng + 1 - grid, 0)
        a = texture_features(DiscretizedRegion.from_level_grid(grid, ng))
        b = texture_features(DiscretizedRegion.from_level_grid(flipped, ng))
        assert a["glcm"]["Contrast"] == pytest.approx(b["glcm"]["Contrast"], abs=1e-12)
        for name in ("ShortRunEmphasis", "LongRunEmphasis", "RunLengthNonUniformity",
                     "RunPercentage"):
            assert a["glrlm"][name] == pytest.approx(b["glrlm"][name], rel=1e-12)
        for name in ("SmallAreaEmphasis", "LargeAreaEmphasis", "ZonePercentage"):
            assert a["glszm"][name] == pytest.approx(b["glszm"][name], rel=1e-12)

    @given(grids)
    @settings(max_examples=40, deadline=None)
    def test_normalized_ranges(self, case):
        grid, ng = case
        if not grid.any():
            return
        f = texture_features(DiscretizedRegion.from_level_grid(grid, ng))
        for fam, short in (("glrlm", "ShortRunEmphasis"), ("glszm", "SmallAreaEmphasis")):
            assert 0.0 < f[fam][short] <= 1.0 + 1e-12
            assert 0.0 < f[fam]["GrayLevelNonUniformityNormalized"] <= 1.0 + 1e-12
        assert 0.0 < f["glrlm"]["RunLengthNonUniformityNormalized"] <= 1.0 + 1e-12
        assert 0.0 < f["glrlm"]["RunPercentage"] <= 1.0 + 1e-12
        assert 0.0 < f["glszm"]["ZonePercentage"] <= 1.0 + 1e-12


def test_oracle_neighbours_are_26():
    assert len(oracles.NEIGHBOURS) == 26
    assert (0, 0, 0) not in oracles.NEIGHBOURS
    assert set(itertools.chain.from_iterable(oracles.NEIGHBOURS)) == {-1, 0, 1}

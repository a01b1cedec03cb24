"""
Unit Tests for the Covers and Nerve Module

Tests sampled spaces, enlargement, multiplicity, Lebesgue numbers, the nerve
and the partition-of-unity map into the nerve.
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from modules.covers import (
    Cover, SampledSpace, CoverError, SampleError, LebesgueError,
    cobounded_report, enlarge, f_r, f_r_images, grid_cover, interval_cover,
    lebesgue_number, lipschitz_report, nerve, r_multiplicity, r_multiplicity_witness,
)


class TestSampledSpace:
    """Finite metric spaces."""

    def test_from_points_one_dimensional(self):
        space = SampledSpace.from_points(np.array([0.0, 1.0, 3.0]))
        assert space.n == 3
        assert space.dist[0, 2] == pytest.approx(3.0)
        assert space.points.shape == (3, 1)

    @pytest.mark.parametrize("dist", [
        np.array([[0.0, 1.0], [2.0, 0.0]]),
        np.array([[1.0, 1.0], [1.0, 1.0]]),
        np.array([[0.0, -1.0], [-1.0, 0.0]]),
        np.array([[0.0, np.nan], [np.nan, 0.0]]),
        np.zeros((2, 3)),
    ])
    def test_invalid_distance_matrices(self, dist):
        with pytest.raises(SampleError):
            SampledSpace(dist)

    def test_components_sit_at_infinite_distance(self, caplog):
        dist = np.array([[0.0, 1.0, np.inf], [1.0, 0.0, np.inf], [np.inf, np.inf, 0.0]])
        with caplog.at_level('WARNING'):
            space = SampledSpace(dist, check_triangle=200)
        assert not caplog.records
        assert np.isinf(space.diameter([0, 2]))
        assert space.diameter([0, 1]) == 1.0
        assert list(space.ball(0, 1e9)) == [0, 1]

    def test_triangle_violation_only_warns(self, caplog):
        dist = np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]])
        with caplog.at_level('WARNING'):
            SampledSpace(dist, check_triangle=500)
        assert any("Triangle inequality" in r.message for r in caplog.records)

    def test_from_csv(self, tmp_path):
        path = tmp_path / 'points.csv'
        path.write_text("0,0\n3,4\n")
        space = SampledSpace.from_csv(str(path))
        assert space.dist[0, 1] == pytest.approx(5.0)

    def test_ball_and_diameter(self, line_space):
        assert list(line_space.ball(0, 0.5)) == [0, 1, 2]
        assert list(line_space.ball(0, 0.5, closed=False)) == [0, 1]
        assert line_space.diameter([0, 4, 8]) == pytest.approx(2.0)


class TestCover:
    """Cover construction and operations."""

    def test_interval_cover_members(self, line_cover):
        assert len(line_cover) == 8
        assert line_cover.max_member_diameter() == pytest.approx(4.0)

    def test_uncovered_points_rejected(self, line_space):
        with pytest.raises(CoverError, match="not covered"):
            Cover(line_space, [[0, 1, 2]])

    def test_empty_member_rejected(self, line_space):
        with pytest.raises(CoverError):
            Cover(line_space, [list(range(line_space.n)), []])

    def test_nerve_of_interval_tiling_is_a_path(self, line_cover):
        N = nerve(line_cover)
        assert N.n_vertices == 8
        assert N.dimension == 1
        assert N.maximal_simplices == [(k, k + 1) for k in range(7)]

    def test_enlarge_keeps_base_members(self, line_cover):
        big = enlarge(line_cover, 1.0)
        assert big.enlarged_by == 1.0
        assert big.max_member_diameter(base=True) == pytest.approx(4.0)
        assert big.max_member_diameter(base=False) == pytest.approx(5.5)
        with pytest.raises(CoverError):
            enlarge(line_cover, 0.0)

    def test_multiplicity(self, line_cover):
        assert r_multiplicity(line_cover, 0.0) == 2
        assert r_multiplicity(line_cover, 1.0) == 2
        assert r_multiplicity(line_cover, 2.5) == 3
        witness = r_multiplicity_witness(line_cover, 1.0)
        assert witness['multiplicity'] == len(witness['members']) == 2

    def test_lebesgue_number_of_enlarged_cover(self, line_cover):
        assert lebesgue_number(enlarge(line_cover, 1.0)) == pytest.approx(1.0)

    def test_grid_cover_partitions_plane(self):
        xs, ys = np.meshgrid(np.arange(4) * 0.5, np.arange(4) * 0.5)
        space = SampledSpace.from_points(np.column_stack([xs.ravel(), ys.ravel()]))
        cover = grid_cover(space, 1.0)
        assert len(cover) == 4
        assert sum(len(m) for m in cover.members) == space.n

    def test_interval_cover_needs_one_dimension(self):
        space = SampledSpace.from_points(np.array([[0.0, 0.0], [1.0, 0.0]]))
        with pytest.raises(SampleError):
            interval_cover(space, 1.0, 1.0)

    def test_dict_round_trip(self, line_space, line_cover):
        again = Cover.from_dict(line_space, line_cover.to_dict())
        assert again.members == line_cover.members


class TestNerveMap:
    """Partition-of-unity map and its constants."""

    def test_images_are_supported_on_containing_members(self, line_cover):
        big = enlarge(line_cover, 1.0)
        for x, image in enumerate(f_r_images(big)):
            containing = {k for k, m in enumerate(big.members) if x in m}
            assert image.support <= containing
            assert sum(image.weights.values()) == pytest.approx(1.0)

    def test_single_member_cover_needs_enlargement(self, line_space):
        whole = Cover(line_space, [list(range(line_space.n))])
        point = f_r(whole, 5)
        assert point.support == frozenset({0})

    def test_whole_sample_member_uses_the_diameter(self, line_space):
        cover = Cover(line_space, [list(range(line_space.n)), list(range(10))])
        assert lebesgue_number(cover) == pytest.approx(30.0)
        # point 3 sits at 0.75, the first point outside member 1 at 2.5
        point = f_r(cover, 3)
        assert point.coordinate(1) == pytest.approx(1.75 / 31.75)
        single = Cover(SampledSpace.from_points(np.array([0.0])), [[0]])
        assert lebesgue_number(single) == 1.0
        assert lebesgue_number(enlarge(Cover(line_space, [list(range(line_space.n))]), 2.0)) == 2.0

    def test_zero_weight_raises(self):
        space = SampledSpace.from_points(np.array([0.0, 1.0]))
        cover = Cover(space, [[0], [1]])
        # point 1 is the whole complement of member 0
        assert f_r(cover, 0).support == frozenset({0})
        with pytest.raises(LebesgueError):
            f_r(cover, 0, weights=np.zeros((2, 2)))

    def test_lipschitz_bound_holds(self, line_cover):
        report = lipschitz_report(enlarge(line_cover, 1.0), 1.0, eps=0.1, max_points=60)
        assert report['verdict'] == 'PASS'
        assert report['bound'] == pytest.approx(4.0)
        assert report['nerve_dimension'] == 1

    def test_cobounded_bound_holds(self, line_cover):
        report = cobounded_report(enlarge(line_cover, 1.0), 1.0, eps=0.1, max_points=60)
        assert report['verdict'] == 'PASS'
        assert report['R'] == pytest.approx(4.0)


class TestWorkedExamples:
    """Hand-computed neighbourhoods and nerves."""

    def test_neighbourhood_of_a_single_point(self):
        space = SampledSpace.from_points(np.arange(11.0))
        cover = Cover(space, [[5], list(range(11))])
        assert sorted(enlarge(cover, 1.5).members[0]) == [4, 5, 6]

    def test_overlapping_thirds_give_a_path(self):
        space = SampledSpace.from_points(np.linspace(0.0, 1.0, 31))
        cover = interval_cover(space, 0.4, 0.3)
        N = nerve(cover)
        assert N.dimension == 1
        assert N.maximal_simplices == [(k, k + 1) for k in range(len(cover) - 1)]

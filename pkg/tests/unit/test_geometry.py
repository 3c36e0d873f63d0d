# tests/unit/test_geometry.py

import math

import numpy as np
import pytest

from core.exceptions import DegenerateProjectionError, InvalidDomainError, OutsideDomainError
from numerics.geometry import (
    FINITE,
    POLYLINE,
    SEGMENT,
    ConvexDomain,
    cut_locus,
    distance,
    hausdorff,
    high_ridge,
    is_stadium_like,
    lambda_infinity,
    max_distance,
    projection_set,
)


class TestDomains:
    def test_disc_distance_is_radius_minus_norm(self, disc):
        assert distance(disc, (0.3, 0.4)) == pytest.approx(0.5)
        assert distance(disc, (0.0, 0.0)) == pytest.approx(1.0)

    def test_square_distance(self, square):
        assert distance(square, (0.1, 0.5)) == pytest.approx(0.1)
        assert distance(square, (0.5, 0.5)) == pytest.approx(0.5)

    def test_stadium_distance(self, stadium):
        assert distance(stadium, (0.3, 0.2)) == pytest.approx(0.3)
        assert distance(stadium, (1.2, 0.0)) == pytest.approx(0.3)

    def test_boundary_point_has_zero_distance(self, square):
        assert distance(square, (0.0, 0.5)) == 0.0

    def test_outside_point_raises(self, disc):
        with pytest.raises(OutsideDomainError):
            distance(disc, (2.0, 0.0))

    def test_invalid_parameters(self):
        with pytest.raises(InvalidDomainError):
            ConvexDomain.disc((0.0, 0.0), -1.0)
        with pytest.raises(InvalidDomainError):
            ConvexDomain.stadium([(0.0, 0.0), (1.0, 0.0)], 0.0)

    def test_clockwise_polygon_rejected(self):
        with pytest.raises(InvalidDomainError):
            ConvexDomain.polygon([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)])

    def test_nonconvex_polygon_rejected(self):
        with pytest.raises(InvalidDomainError):
            ConvexDomain.polygon([(0.0, 0.0), (2.0, 0.0), (1.0, 0.2), (2.0, 2.0), (0.0, 2.0)])


class TestMaxDistance:
    def test_disc(self, disc):
        assert max_distance(disc) == pytest.approx(1.0)
        assert lambda_infinity(disc) == pytest.approx(1.0)

    def test_square(self, square):
        assert max_distance(square) == pytest.approx(0.5, abs=1e-7)
        assert lambda_infinity(square) == pytest.approx(2.0, rel=1e-7)

    def test_stadium(self, stadium):
        assert max_distance(stadium) == pytest.approx(0.5)

    def test_rectangle(self):
        rect = ConvexDomain.polygon([(0.0, 0.0), (3.0, 0.0), (3.0, 1.0), (0.0, 1.0)])
        assert max_distance(rect) == pytest.approx(0.5, abs=1e-7)


class TestProjection:
    def test_disc_off_center_is_single_point(self, disc):
        proj = projection_set(disc, (0.5, 0.0))
        assert proj.kind_tag == FINITE
        assert len(proj) == 1
        np.testing.assert_allclose(proj.points[0], [1.0, 0.0], atol=1e-12)

    def test_disc_center_is_whole_circle(self, disc):
        proj = projection_set(disc, (0.0, 0.0), circle_samples=32)
        assert proj.kind_tag == POLYLINE
        np.testing.assert_allclose(np.linalg.norm(proj.points, axis=1), 1.0)

    def test_square_center_has_four_feet(self, square):
        proj = projection_set(square, (0.5, 0.5))
        assert len(proj) == 4

    def test_square_diagonal_point_has_two_feet(self, square):
        proj = projection_set(square, (0.2, 0.2))
        expected = {(0.0, 0.2), (0.2, 0.0)}
        got = {tuple(np.round(p, 9)) for p in proj.points}
        assert got == expected

    def test_stadium_spine_interior_point(self, stadium):
        proj = projection_set(stadium, (0.0, 0.0))
        got = sorted(tuple(np.round(p, 9)) for p in proj.points)
        assert got == [(0.0, -0.5), (0.0, 0.5)]

    def test_boundary_point_is_degenerate(self, disc):
        with pytest.raises(DegenerateProjectionError):
            projection_set(disc, (1.0, 0.0))


class TestSets:
    def test_disc_ridge_and_cut_are_center(self, disc):
        assert high_ridge(disc).kind_tag == FINITE
        np.testing.assert_allclose(cut_locus(disc, 0.01).points, [[0.0, 0.0]])

    def test_stadium_ridge_is_spine(self, stadium):
        ridge = high_ridge(stadium)
        assert ridge.kind_tag == SEGMENT
        np.testing.assert_allclose(ridge.points, [[-1.0, 0.0], [1.0, 0.0]])

    def test_square_cut_locus_is_the_diagonals(self, square):
        cut = cut_locus(square, 0.01)
        # every sample lies on one of the two diagonals
        x, y = cut.points[:, 0], cut.points[:, 1]
        on_diag = np.minimum(np.abs(x - y), np.abs(x + y - 1.0))
        assert on_diag.max() < 1e-9
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        assert np.min(np.linalg.norm(cut.points - corners[0], axis=1)) < 0.02

    def test_square_ridge_is_center(self, square):
        ridge = high_ridge(square)
        assert ridge.points.mean(axis=0) == pytest.approx([0.5, 0.5], abs=1e-6)

    def test_hausdorff_symmetric(self):
        a = np.array([[0.0, 0.0]])
        b = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert hausdorff(a, b) == pytest.approx(5.0)
        assert hausdorff(b, a) == pytest.approx(5.0)


class TestStadiumLike:
    def test_disc_is_stadium_like(self, disc):
        report = is_stadium_like(disc, 0.05)
        assert report.passed
        assert "classification=disc" in report.notes

    def test_stadium_is_stadium_like(self, stadium):
        report = is_stadium_like(stadium, 0.05)
        assert report.passed
        assert "segment-parallel-set" in report.notes

    def test_square_is_not(self, square):
        report = is_stadium_like(square, 0.05)
        assert not report.passed
        assert report.value("hausdorff_cut_high") == pytest.approx(math.sqrt(2.0) / 2.0, abs=0.02)
        assert "not-stadium" in report.notes

    def test_parallel_set_of_segment_passes(self):
        dom = ConvexDomain.stadium([(0.0, 0.0), (0.0, 2.0)], 1.0)
        assert is_stadium_like(dom, 0.05).passed

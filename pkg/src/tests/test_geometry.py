"""
Tests for polygon shape statistics
"""

import math

import numpy as np
import pytest

from geoseg.errors import GeometryError
from geoseg.evaluation import Polygon, compactness, geometry_stats, min_area_rectangle, summarize_geometry


def _regular(n, radius=1.0):
    return Polygon(
        tuple((radius * math.cos(2 * math.pi * k / n), radius * math.sin(2 * math.pi * k / n)) for k in range(n))
    )


def _rectangle(length, width, angle=0.0):
    c, s = math.cos(angle), math.sin(angle)
    corners = [(0, 0), (length, 0), (length, width), (0, width)]
    return Polygon(tuple((x * c - y * s, x * s + y * c) for x, y in corners))


class TestPolygon:
    """Test polygon validation and basic measures"""

    def test_closing_vertex_is_dropped(self):
        """A repeated first vertex is treated as the implicit closure"""
        poly = Polygon(((0, 0), (1, 0), (1, 1), (0, 0)))
        assert len(poly.vertices) == 3
        assert poly.area == pytest.approx(0.5)

    def test_orientation_does_not_change_area(self):
        """Clockwise and counter-clockwise rings have the same area"""
        ring = ((0, 0), (2, 0), (2, 3), (0, 3))
        assert Polygon(ring).area == Polygon(tuple(reversed(ring))).area == 6.0

    def test_too_few_vertices(self):
        """Two points are not a polygon"""
        with pytest.raises(GeometryError):
            Polygon(((0, 0), (1, 1)))

    def test_collinear_vertices(self):
        """A degenerate ring has zero area"""
        with pytest.raises(GeometryError, match="zero area"):
            Polygon(((0, 0), (1, 1), (2, 2)))

    def test_self_intersecting_bowtie(self):
        """Crossing edges are rejected"""
        with pytest.raises(GeometryError, match="self-intersecting"):
            Polygon(((0, 0), (4, 2), (4, 0), (0, 3)))

    def test_non_finite(self):
        """NaN coordinates are rejected"""
        with pytest.raises(GeometryError):
            Polygon(((0, 0), (1, float("nan")), (1, 1)))

    def test_from_points_requires_pairs(self):
        """Vertices must be coordinate pairs"""
        with pytest.raises(GeometryError):
            Polygon.from_points([[0], [1], [2]])


class TestStatistics:
    """Test shape descriptors"""

    def test_circle_compactness_is_one(self):
        """A 360-gon is nearly a circle"""
        assert compactness(_regular(360, radius=50.0)) == pytest.approx(1.0, abs=1e-3)

    def test_square_compactness(self):
        """A square scores 4 / pi"""
        assert compactness(_rectangle(1.0, 1.0)) == pytest.approx(4 / math.pi, rel=1e-12)

    def test_elongated_rectangle_compactness(self):
        """A 10:1 rectangle has P = 22 and A = 10, so P^2 / 4 pi A = 121 / 10 pi"""
        assert compactness(_rectangle(10.0, 1.0)) == pytest.approx(121 / (10 * math.pi), rel=1e-12)

    def test_compactness_is_scale_invariant(self):
        """Scaling a shape leaves compactness unchanged"""
        poly = Polygon(((0, 0), (4, 0), (5, 2), (2, 5), (-1, 3)))
        assert compactness(poly.scaled(37.5)) == pytest.approx(compactness(poly), rel=1e-12)

    @pytest.mark.parametrize("angle", [0.0, 0.3, 1.1])
    def test_rotated_rectangle_axes(self, angle):
        """The minimum rectangle of a rectangle is itself"""
        length, width, _ = min_area_rectangle(_rectangle(10.0, 2.0, angle))
        assert length == pytest.approx(10.0, rel=1e-9)
        assert width == pytest.approx(2.0, rel=1e-9)

    def test_concave_polygon_uses_hull(self):
        """An L shape is enclosed by its bounding rectangle"""
        poly = Polygon(((0, 0), (4, 0), (4, 1), (1, 1), (1, 3), (0, 3)))
        length, width, _ = min_area_rectangle(poly)
        assert (length, width) == pytest.approx((4.0, 3.0))

    def test_geometry_stats(self):
        """All descriptors of a 6 x 2 rectangle"""
        stats = geometry_stats(_rectangle(6.0, 2.0))
        assert stats.area == pytest.approx(12.0)
        assert stats.length_major_axis == pytest.approx(6.0)
        assert stats.width_minor_axis == pytest.approx(2.0)
        assert stats.length_width_ratio == pytest.approx(3.0)
        assert stats.compactness == pytest.approx(16.0**2 / (4 * math.pi * 12.0))


class TestSummary:
    """Test box-plot summaries over feature sets"""

    def test_five_numbers_per_statistic(self):
        """Each statistic gets min, quartiles and max"""
        polygons = [_rectangle(float(k), 1.0) for k in range(1, 6)]
        summary = summarize_geometry(polygons)
        assert set(summary) == {
            "area",
            "length_major_axis",
            "width_minor_axis",
            "length_width_ratio",
            "compactness",
        }
        area = summary["area"]
        assert [area[k] for k in ("min", "q1", "median", "q3", "max")] == pytest.approx(
            [1.0, 2.0, 3.0, 4.0, 5.0]
        )

    def test_empty_set(self):
        """Nothing to summarize is an error"""
        with pytest.raises(GeometryError):
            summarize_geometry([])

    def test_summary_is_order_independent(self, rng):
        """Shuffling the polygons does not change the summary"""
        polygons = [_regular(int(n), radius=float(r)) for n, r in zip(rng.integers(3, 12, 8), rng.uniform(1, 5, 8))]
        shuffled = [polygons[i] for i in rng.permutation(len(polygons))]
        assert summarize_geometry(polygons) == summarize_geometry(shuffled)
        assert np.isfinite(summarize_geometry(polygons)["compactness"]["max"])

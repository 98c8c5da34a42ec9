"""
Polygon shape statistics (area, axes, elongation, compactness)
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ..errors import GeometryError
from ..models import GeometryStats

logger = logging.getLogger(__name__)

SUMMARY_KEYS = ("min", "q1", "median", "q3", "max")


def _orientation(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
        c[..., 0] - a[..., 0]
    )


def _self_intersects(points: np.ndarray) -> bool:
    """True if two non-adjacent edges of the closed ring cross properly."""
    n = len(points)
    if n < 4:
        return False
    start = points
    end = np.roll(points, -1, axis=0)
    a, b = start[:, None, :], end[:, None, :]
    c, d = start[None, :, :], end[None, :, :]
    o1 = _orientation(a, b, c)
    o2 = _orientation(a, b, d)
    o3 = _orientation(c, d, a)
    o4 = _orientation(c, d, b)
    crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
    i, j = np.indices((n, n))
    gap = np.abs(i - j)
    adjacent = (gap <= 1) | (gap == n - 1)
    return bool(np.any(crossing & ~adjacent))


@dataclass(frozen=True)
class Polygon:
    """Closed simple ring of (x, y) vertices in meters; the closing vertex is implicit."""

    vertices: Tuple[Tuple[float, float], ...]

    def __post_init__(self) -> None:
        vertices = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(vertices) > 1 and vertices[0] == vertices[-1]:
            vertices = vertices[:-1]
        object.__setattr__(self, "vertices", vertices)
        if len(vertices) < 3:
            raise GeometryError(f"polygon needs at least 3 vertices, got {len(vertices)}")
        if not np.all(np.isfinite(self.points)):
            raise GeometryError("polygon has non-finite coordinates")
        if self.area <= 0:
            raise GeometryError("polygon has zero area")
        if _self_intersects(self.points):
            raise GeometryError("polygon is self-intersecting")

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> "Polygon":
        try:
            return cls(tuple((p[0], p[1]) for p in points))
        except (TypeError, IndexError) as e:
            raise GeometryError(f"polygon vertices must be [x, y] pairs: {e}") from e

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=np.float64)

    @property
    def signed_area(self) -> float:
        p = self.points
        x, y = p[:, 0], p[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def area(self) -> float:
        return abs(self.signed_area)

    @property
    def perimeter(self) -> float:
        p = self.points
        return float(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1).sum())

    def scaled(self, factor: float) -> "Polygon":
        return Polygon(tuple((x * factor, y * factor) for x, y in self.vertices))


def compactness(poly: Polygon) -> float:
    """perimeter^2 / (4 pi area); 1 for a circle, larger for elongated or ragged shapes."""
    return poly.perimeter ** 2 / (4.0 * math.pi * poly.area)


def min_area_rectangle(poly: Polygon) -> Tuple[float, float, float]:
    """(length, width, angle) of the smallest enclosing rectangle, length >= width.

    One side of the optimal rectangle is collinear with a convex hull edge, so
    trying every hull edge direction is exhaustive.
    """
    points = poly.points
    try:
        hull = points[ConvexHull(points).vertices]
    except QhullError as e:
        raise GeometryError(f"cannot build convex hull: {e}") from e
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    best = None
    for angle in angles:
        u = np.array([math.cos(angle), math.sin(angle)])
        v = np.array([-u[1], u[0]])
        along, across = hull @ u, hull @ v
        extent_u = float(along.max() - along.min())
        extent_v = float(across.max() - across.min())
        area = extent_u * extent_v
        if best is None or area < best[0]:
            best = (area, max(extent_u, extent_v), min(extent_u, extent_v), float(angle))
    assert best is not None
    return best[1], best[2], best[3]


def geometry_stats(poly: Polygon) -> GeometryStats:
    length, width, _ = min_area_rectangle(poly)
    return GeometryStats(
        area=poly.area,
        length_major_axis=length,
        width_minor_axis=width,
        length_width_ratio=length / width,
        compactness=compactness(poly),
    )


def five_number_summary(values: Sequence[float]) -> Dict[str, float]:
    q = np.percentile(np.asarray(values, dtype=np.float64), [0, 25, 50, 75, 100])
    return dict(zip(SUMMARY_KEYS, (float(v) for v in q)))


def summarize_geometry(polygons: Iterable[Polygon]) -> Dict[str, Dict[str, float]]:
    """Box-plot numbers (min, quartiles, max) for each statistic over a feature set."""
    stats: List[GeometryStats] = [geometry_stats(p) for p in polygons]
    if not stats:
        raise GeometryError("no polygons to summarize")
    fields = list(GeometryStats.model_fields)
    return {name: five_number_summary([getattr(s, name) for s in stats]) for name in fields}

"""
Tests for the Delaunay triangulation.
"""

from fractions import Fraction

import numpy as np
import pytest

from delaunay import delaunay_triangulate, hull_vertex_count, incircle, orient, triangle_edges
from errors import GeometryError


def _ccw(points, tri):
    a, b, c = (points[i] for i in tri)
    return (a, b, c) if orient(a, b, c) > 0 else (a, c, b)


def assert_empty_circumcircles(points, triangles, tol):
    points = np.asarray(points, dtype=np.float64)
    for tri in triangles:
        a, b, c = _ccw(points, tri)
        for q in range(len(points)):
            if q in tri:
                continue
            assert incircle(a, b, c, points[q]) <= tol, f"point {q} inside circumcircle of {tri}"


def assert_euler(points, triangles):
    n = len(np.unique(np.asarray(points), axis=0))
    t = len(triangles)
    e = len(triangle_edges(triangles))
    h = hull_vertex_count(triangles)
    assert 2 * e == 3 * t + h
    assert t == 2 * n - h - 2


class TestDelaunayTriangulate:
    def test_single_triangle(self):
        assert delaunay_triangulate([(0, 0), (1, 0), (0, 1)]) == [(0, 1, 2)]

    def test_unit_square_tie_rule(self):
        points = [(0, 0), (1, 0), (1, 1), (0, 1)]
        triangles = delaunay_triangulate(points)
        assert len(triangles) == 2
        edges = triangle_edges(triangles)
        assert len(edges) == 5
        # both diagonals are cocircular; the smaller index pair wins
        assert (0, 2) in edges and (1, 3) not in edges
        assert_empty_circumcircles(points, triangles, tol=1e-12)

    def test_triangles_are_ccw_and_start_at_smallest(self):
        rng = np.random.default_rng(0)
        points = rng.uniform(size=(20, 2))
        for tri in delaunay_triangulate(points):
            assert tri[0] == min(tri)
            assert orient(*(points[i] for i in tri)) > 0

    def test_ten_random_points(self):
        points = np.random.default_rng(1).uniform(size=(10, 2))
        triangles = delaunay_triangulate(points)
        assert_empty_circumcircles(points, triangles, tol=1e-9)
        assert_euler(points, triangles)

    def test_random_point_sets(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            n = int(rng.integers(8, 65))
            span = float(rng.uniform(1.0, 100.0))
            points = rng.uniform(0.0, span, size=(n, 2))
            points += rng.normal(scale=1e-7 * span, size=points.shape)
            triangles = delaunay_triangulate(points)
            assert_empty_circumcircles(points, triangles, tol=1e-9 * span**2)
            assert_euler(points, triangles)

    def test_grid_points_with_ties(self):
        xs, ys = np.meshgrid(np.arange(5.0), np.arange(4.0))
        points = np.column_stack([xs.ravel(), ys.ravel()])
        triangles = delaunay_triangulate(points)
        assert len(triangles) == 2 * 4 * 3
        assert_empty_circumcircles(points, triangles, tol=1e-9)
        assert_euler(points, triangles)
        assert delaunay_triangulate(points) == triangles

    def test_collinear_hull_points(self):
        points = [(0, 0), (1, 0), (2, 0), (3, 0), (1.5, 2.0)]
        triangles = delaunay_triangulate(points)
        assert len(triangles) == 3
        assert_euler(points, triangles)

    def test_duplicates_dropped(self):
        triangles = delaunay_triangulate([(0, 0), (1, 0), (0, 0), (0, 1)])
        assert triangles == [(0, 1, 3)]

    def test_collinear_raises(self):
        with pytest.raises(GeometryError, match="degenerate point set"):
            delaunay_triangulate([(0, 0), (1, 1), (2, 2), (3, 3)])

    def test_too_few_points(self):
        with pytest.raises(GeometryError, match="degenerate point set"):
            delaunay_triangulate([(0, 0), (1, 1), (1, 1)])


def _exact_orient(a, b, c):
    ax, ay, bx, by, cx, cy = (Fraction(float(v)) for v in (*a, *b, *c))
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _exact_incircle(a, b, c, d):
    rows = [(Fraction(float(p[0])) - Fraction(float(d[0])), Fraction(float(p[1])) - Fraction(float(d[1]))) for p in (a, b, c)]
    (adx, ady), (bdx, bdy), (cdx, cdy) = rows
    return (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    )


def _sign(value):
    return (value > 0) - (value < 0)


class TestPredicates:
    def test_orient_sign_on_nearly_collinear_points(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            a, b = rng.uniform(-50.0, 50.0, size=(2, 2))
            c = a + rng.uniform(-2.0, 3.0) * (b - a) + rng.normal(scale=1e-15, size=2)
            assert _sign(orient(a, b, c)) == _sign(_exact_orient(a, b, c))

    def test_incircle_sign_on_nearly_cocircular_points(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            center = rng.uniform(-20.0, 20.0, size=2)
            radius = rng.uniform(1e-6, 10.0)
            angles = np.sort(rng.uniform(0.0, 2 * np.pi, size=4))
            a, b, c, d = (center + radius * np.array([np.cos(t), np.sin(t)]) for t in angles)
            assert _sign(incircle(a, b, c, d)) == _sign(_exact_incircle(a, b, c, d))

    def test_exact_ties(self):
        assert orient((0.0, 0.0), (1.0, 1.0), (3.0, 3.0)) == 0.0
        assert incircle((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)) == 0.0

    def test_tiny_cluster_next_to_far_points(self):
        offsets = np.array([[0.0, 0.0], [3e-5, -1e-5], [-2e-5, 2.5e-5], [1e-5, 3e-5]])
        points = np.vstack([[10.0, 10.0] + offsets, [[0.0, 0.0], [40.0, 0.0], [40.0, 40.0], [0.0, 40.0], [25.0, 5.0]]])
        triangles = delaunay_triangulate(points)
        assert_empty_circumcircles(points, triangles, tol=0.0)
        assert_euler(points, triangles)

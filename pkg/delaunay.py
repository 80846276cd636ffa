"""
Delaunay triangulation for the geometry graph
Incremental Bowyer-Watson insertion. Hull edges are closed with ghost
triangles (one vertex at infinity) instead of a finite super-triangle, so the
result always covers the convex hull. Cocircular ties are settled by a final
flip pass that prefers the lexicographically smaller diagonal.

Orientation and in-circle signs are exact: the floating-point determinant is
trusted only when it clears a forward error bound scaled by the magnitude of
its terms, otherwise it is recomputed in rational arithmetic.
"""

import logging
from collections import deque
from fractions import Fraction
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np

from errors import GeometryError

logger = logging.getLogger(__name__)

GHOST = -1

# Error bounds for the float determinants, relative to their permanents
EPSILON = np.finfo(np.float64).eps / 2
CCW_ERRBOUND = (3.0 + 16.0 * EPSILON) * EPSILON
ICC_ERRBOUND = (10.0 + 96.0 * EPSILON) * EPSILON

Triangle = Tuple[int, int, int]


def _orient_exact(a: Sequence[float], b: Sequence[float], c: Sequence[float]) -> float:
    ax, ay, bx, by, cx, cy = (Fraction(float(v)) for v in (a[0], a[1], b[0], b[1], c[0], c[1]))
    return float((ax - cx) * (by - cy) - (ay - cy) * (bx - cx))


def _incircle_exact(a: Sequence[float], b: Sequence[float], c: Sequence[float], d: Sequence[float]) -> float:
    dx, dy = Fraction(float(d[0])), Fraction(float(d[1]))
    adx, ady = Fraction(float(a[0])) - dx, Fraction(float(a[1])) - dy
    bdx, bdy = Fraction(float(b[0])) - dx, Fraction(float(b[1])) - dy
    cdx, cdy = Fraction(float(c[0])) - dx, Fraction(float(c[1])) - dy
    det = (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    )
    return float(det)


def _orient_many(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    """orient(a[k], b[k], p) for every row k, with exact signs."""
    detleft = (a[:, 0] - p[0]) * (b[:, 1] - p[1])
    detright = (a[:, 1] - p[1]) * (b[:, 0] - p[0])
    det = detleft - detright
    unsure = np.abs(det) <= CCW_ERRBOUND * (np.abs(detleft) + np.abs(detright))
    for k in np.nonzero(unsure)[0]:
        det[k] = _orient_exact(a[k], b[k], p)
    return det


def _incircle_many(a: np.ndarray, b: np.ndarray, c: np.ndarray, p: np.ndarray) -> np.ndarray:
    """incircle(a[k], b[k], c[k], p) for every row k, with exact signs."""
    adx, ady = a[:, 0] - p[0], a[:, 1] - p[1]
    bdx, bdy = b[:, 0] - p[0], b[:, 1] - p[1]
    cdx, cdy = c[:, 0] - p[0], c[:, 1] - p[1]
    bdxcdy, cdxbdy = bdx * cdy, cdx * bdy
    cdxady, adxcdy = cdx * ady, adx * cdy
    adxbdy, bdxady = adx * bdy, bdx * ady
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady)
    permanent = (
        (np.abs(bdxcdy) + np.abs(cdxbdy)) * alift
        + (np.abs(cdxady) + np.abs(adxcdy)) * blift
        + (np.abs(adxbdy) + np.abs(bdxady)) * clift
    )
    unsure = np.abs(det) <= ICC_ERRBOUND * permanent
    for k in np.nonzero(unsure)[0]:
        det[k] = _incircle_exact(a[k], b[k], c[k], p)
    return det


def orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    """Twice the signed area of (a, b, c); positive when counter-clockwise. The sign is exact."""
    rows = np.asarray([a, b], dtype=np.float64).reshape(2, 1, 2)
    return float(_orient_many(rows[0], rows[1], np.asarray(c, dtype=np.float64))[0])


def incircle(a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray) -> float:
    """Positive when d lies inside the circumcircle of counter-clockwise (a, b, c). The sign is exact."""
    rows = np.asarray([a, b, c], dtype=np.float64).reshape(3, 1, 2)
    return float(_incircle_many(rows[0], rows[1], rows[2], np.asarray(d, dtype=np.float64))[0])


class _Mesh:
    """Triangle store with a directed-edge -> triangle map."""

    def __init__(self, pts: np.ndarray, capacity: int = 64):
        self.pts = pts
        self.tris = np.full((capacity, 3), GHOST, dtype=np.int64)
        self.alive = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.n_alive = 0
        self.owner: Dict[Tuple[int, int], int] = {}

    @staticmethod
    def edges(tri: Sequence[int]) -> List[Tuple[int, int]]:
        a, b, c = (int(v) for v in tri)
        return [(a, b), (b, c), (c, a)]

    def add(self, a: int, b: int, c: int) -> int:
        # Ghost vertex, if any, is always stored last
        if a == GHOST:
            a, b, c = b, c, a
        elif b == GHOST:
            a, b, c = c, a, b
        if self.size == len(self.tris):
            self.tris = np.concatenate([self.tris, np.full_like(self.tris, GHOST)])
            self.alive = np.concatenate([self.alive, np.zeros_like(self.alive)])
        t = self.size
        self.tris[t] = (a, b, c)
        self.alive[t] = True
        self.size += 1
        self.n_alive += 1
        for e in self.edges((a, b, c)):
            self.owner[e] = t
        return t

    def remove(self, t: int):
        self.alive[t] = False
        self.n_alive -= 1
        for e in self.edges(self.tris[t]):
            if self.owner.get(e) == t:
                del self.owner[e]

    def compact(self):
        live = self.tris[: self.size][self.alive[: self.size]]
        self.tris = np.full((max(64, 2 * len(live)), 3), GHOST, dtype=np.int64)
        self.alive = np.zeros(len(self.tris), dtype=bool)
        self.size = 0
        self.n_alive = 0
        self.owner = {}
        for a, b, c in live:
            self.add(int(a), int(b), int(c))

    def live_ids(self) -> np.ndarray:
        return np.nonzero(self.alive[: self.size])[0]

    def neighbor(self, u: int, v: int) -> int:
        return self.owner[(v, u)]


def _bad_mask(mesh: _Mesh, ids: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Which live triangles conflict with p, plus the containment/visibility masks for seeding."""
    pts = mesh.pts
    tris = mesh.tris[ids]
    ghost = tris[:, 2] == GHOST
    bad = np.zeros(len(ids), dtype=bool)
    contains = np.zeros(len(ids), dtype=bool)
    visible = np.zeros(len(ids), dtype=bool)

    real = ~ghost
    if np.any(real):
        tr = tris[real]
        a, b, c = pts[tr[:, 0]], pts[tr[:, 1]], pts[tr[:, 2]]
        bad[real] = _incircle_many(a, b, c, p) > 0
        contains[real] = (_orient_many(a, b, p) >= 0) & (_orient_many(b, c, p) >= 0) & (_orient_many(c, a, p) >= 0)

    if np.any(ghost):
        tg = tris[ghost]
        u, v = pts[tg[:, 0]], pts[tg[:, 1]]
        side = _orient_many(u, v, p)
        # p on the hull edge itself counts as a conflict with the ghost
        along = np.einsum("ij,ij->i", p - u, v - u)
        between = (side == 0) & (along > 0) & (along < np.einsum("ij,ij->i", v - u, v - u))
        bad[ghost] = (side > 0) | between
        visible[ghost] = side > 0
    return bad, contains, visible


def _insert(mesh: _Mesh, i: int):
    p = mesh.pts[i]
    ids = mesh.live_ids()
    bad, contains, visible = _bad_mask(mesh, ids, p)
    if np.any(contains):
        seed = int(ids[np.argmax(contains)])
    elif np.any(visible):
        seed = int(ids[np.argmax(visible)])
    else:
        raise GeometryError(f"could not locate point {i} in triangulation")
    bad_ids = set(int(t) for t in ids[bad])

    cavity: Set[int] = {seed}
    stack = [seed]
    while stack:
        t = stack.pop()
        for u, v in mesh.edges(mesh.tris[t]):
            nb = mesh.neighbor(u, v)
            if nb not in cavity and nb in bad_ids:
                cavity.add(nb)
                stack.append(nb)

    # Grow the cavity until it is star-shaped from p
    changed = True
    while changed:
        changed = False
        for t in sorted(cavity):
            for u, v in mesh.edges(mesh.tris[t]):
                nb = mesh.neighbor(u, v)
                if nb in cavity or u == GHOST or v == GHOST:
                    continue
                if orient(mesh.pts[u], mesh.pts[v], p) <= 0:
                    cavity.add(nb)
                    changed = True

    boundary = []
    for t in sorted(cavity):
        for u, v in mesh.edges(mesh.tris[t]):
            if mesh.neighbor(u, v) not in cavity:
                boundary.append((u, v))
    for t in cavity:
        mesh.remove(t)
    for u, v in boundary:
        mesh.add(u, v, i)

    if mesh.size > 4 * mesh.n_alive + 256:
        mesh.compact()


def _flip_ties(mesh: _Mesh, labels: np.ndarray) -> int:
    """
    Lawson flip pass over interior edges.
    Flips edges that fail the in-circle test, and cocircular edges whose
    alternative diagonal has the smaller (min, max) label pair.
    """
    pts = mesh.pts
    queue = deque()
    for t in mesh.live_ids():
        for u, v in mesh.edges(mesh.tris[t]):
            if u != GHOST and v != GHOST and u < v:
                queue.append((u, v))
    flips = 0
    budget = 50 * (len(queue) + 1)
    while queue and budget > 0:
        budget -= 1
        a, b = queue.popleft()
        t1 = mesh.owner.get((a, b))
        t2 = mesh.owner.get((b, a))
        if t1 is None or t2 is None:
            continue
        tri1 = [int(v) for v in mesh.tris[t1]]
        tri2 = [int(v) for v in mesh.tris[t2]]
        if GHOST in tri1 or GHOST in tri2:
            continue
        c = next(v for v in tri1 if v not in (a, b))
        d = next(v for v in tri2 if v not in (a, b))
        det = incircle(pts[a], pts[b], pts[c], pts[d])
        current = tuple(sorted((int(labels[a]), int(labels[b]))))
        alternative = tuple(sorted((int(labels[c]), int(labels[d]))))
        should_flip = det > 0 or (det == 0 and alternative < current)
        if not should_flip:
            continue
        if orient(pts[c], pts[a], pts[d]) <= 0 or orient(pts[d], pts[b], pts[c]) <= 0:
            continue
        mesh.remove(t1)
        mesh.remove(t2)
        mesh.add(c, a, d)
        mesh.add(d, b, c)
        flips += 1
        for u, v in ((a, d), (d, b), (b, c), (c, a)):
            queue.append((min(u, v), max(u, v)))
    if queue:
        logger.warning(f"Delaunay flip pass stopped with {len(queue)} edges unchecked")
    return flips


def delaunay_triangulate(points: Sequence[Sequence[float]]) -> List[Triangle]:
    """
    Delaunay triangulation of a point set.

    Exact duplicate points are dropped (the first occurrence is kept) before
    triangulating. Returned triangles index into the input list, are
    counter-clockwise, start at their smallest index and are sorted.

    Raises:
        GeometryError: fewer than 3 distinct points, or all points collinear
    """
    raw = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(raw) == 0:
        raise GeometryError("degenerate point set: no points")
    if not np.all(np.isfinite(raw)):
        raise GeometryError("point coordinates must be finite")
    _, first = np.unique(raw, axis=0, return_index=True)
    keep = np.sort(first)
    if len(keep) < 3:
        raise GeometryError(f"degenerate point set: {len(keep)} distinct points")

    pts = raw[keep]

    third = None
    for k in range(2, len(pts)):
        if orient(pts[0], pts[1], pts[k]) != 0:
            third = k
            break
    if third is None:
        raise GeometryError("degenerate point set: all points collinear")

    mesh = _Mesh(pts, capacity=max(64, 8 * len(pts)))
    a, b, c = 0, 1, third
    if orient(pts[a], pts[b], pts[c]) < 0:
        a, b = b, a
    mesh.add(a, b, c)
    mesh.add(b, a, GHOST)
    mesh.add(c, b, GHOST)
    mesh.add(a, c, GHOST)

    for i in range(2, len(pts)):
        if i != third:
            _insert(mesh, i)

    flips = _flip_ties(mesh, keep)
    logger.debug(f"Triangulated {len(pts)} points with {flips} tie/legalization flips")

    triangles = []
    for t in mesh.live_ids():
        tri = [int(v) for v in mesh.tris[t]]
        if GHOST in tri:
            continue
        labelled = [int(keep[v]) for v in tri]
        r = labelled.index(min(labelled))
        triangles.append(tuple(labelled[r:] + labelled[:r]))
    return sorted(triangles)


def triangle_edges(triangles: Sequence[Triangle]) -> List[Tuple[int, int]]:
    """Unique undirected edges (u < v), sorted."""
    edges = set()
    for a, b, c in triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((min(u, v), max(u, v)))
    return sorted(edges)


def hull_vertex_count(triangles: Sequence[Triangle]) -> int:
    """Number of vertices on the triangulation boundary (edges used by one triangle)."""
    uses: Dict[Tuple[int, int], int] = {}
    for a, b, c in triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            uses[key] = uses.get(key, 0) + 1
    boundary = {v for edge, count in uses.items() if count == 1 for v in edge}
    return len(boundary)

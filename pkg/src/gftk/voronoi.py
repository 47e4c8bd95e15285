"""Areas of Voronoi cells clipped to a rectangular domain.

Each cell starts as the domain rectangle and is cut by the perpendicular
bisector between its site and every neighbour that can still reach it.
Neighbours are visited by increasing distance; once the next one is farther
than twice the cell's circumradius (measured from the site) no bisector can
intersect the cell any more, so the remaining sites are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import GraphError


@dataclass(frozen=True)
class Rectangle:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("degenerate rectangle")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def corners(self):
        """Counterclockwise corner list."""
        return [
            (self.xmin, self.ymin),
            (self.xmax, self.ymin),
            (self.xmax, self.ymax),
            (self.xmin, self.ymax),
        ]

    def contains_strictly(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return (
            (pts[:, 0] > self.xmin)
            & (pts[:, 0] < self.xmax)
            & (pts[:, 1] > self.ymin)
            & (pts[:, 1] < self.ymax)
        )

    @classmethod
    def bounding(cls, pts, pad: float = 0.1) -> "Rectangle":
        """Bounding box of ``pts`` grown by ``pad`` times its extent on each side."""
        pts = np.asarray(pts, dtype=float)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        ext = np.maximum(hi - lo, 1e-12)
        lo, hi = lo - pad * ext, hi + pad * ext
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


UNIT_SQUARE = Rectangle(0.0, 0.0, 1.0, 1.0)


def clip_halfplane(poly, mx, my, nx, ny):
    """Keep the part of a convex polygon where ``(p - m) . n <= 0``."""
    out = []
    k = len(poly)
    if k == 0:
        return out
    sx, sy = poly[-1]
    fs = (sx - mx) * nx + (sy - my) * ny
    for ex, ey in poly:
        fe = (ex - mx) * nx + (ey - my) * ny
        if fe <= 0.0:
            if fs > 0.0:
                t = fs / (fs - fe)
                out.append((sx + t * (ex - sx), sy + t * (ey - sy)))
            out.append((ex, ey))
        elif fs <= 0.0:
            t = fs / (fs - fe)
            out.append((sx + t * (ex - sx), sy + t * (ey - sy)))
        sx, sy, fs = ex, ey, fe
    return out


def polygon_area(poly) -> float:
    """Shoelace formula; positive for counterclockwise vertex order."""
    a = 0.0
    px, py = poly[-1]
    for x, y in poly:
        a += px * y - x * py
        px, py = x, y
    return 0.5 * a


def voronoi_cell(i, pts, tree, domain: Rectangle):
    """Vertices (counterclockwise) of the Voronoi cell of site ``i`` within ``domain``."""
    n = len(pts)
    xi, yi = float(pts[i, 0]), float(pts[i, 1])
    poly = domain.corners()
    r2max = max((x - xi) ** 2 + (y - yi) ** 2 for x, y in poly)
    k = min(n, 16)
    seen = {i}
    while True:
        dist, idx = tree.query(pts[i], k=k)
        dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
        for d, j in zip(dist.tolist(), idx.tolist()):
            if j in seen:
                continue
            seen.add(j)
            if d * d >= 4.0 * r2max:
                return poly
            xj, yj = float(pts[j, 0]), float(pts[j, 1])
            poly = clip_halfplane(poly, 0.5 * (xi + xj), 0.5 * (yi + yj), xj - xi, yj - yi)
            r2max = max((x - xi) ** 2 + (y - yi) ** 2 for x, y in poly)
        if k >= n:
            return poly
        k = min(n, 2 * k)


def voronoi_areas(points, domain: Rectangle = UNIT_SQUARE) -> np.ndarray:
    """Area of each point's Voronoi cell clipped to ``domain``.

    Points must be pairwise distinct and lie strictly inside the domain.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise GraphError("points must be a non-empty (n, 2) array")
    if not np.all(domain.contains_strictly(pts)):
        bad = int(np.flatnonzero(~domain.contains_strictly(pts))[0])
        raise GraphError(f"point {bad} is not strictly inside the domain")
    if len(np.unique(pts, axis=0)) != len(pts):
        raise GraphError("duplicate points: Voronoi cells undefined")
    tree = cKDTree(pts)
    areas = np.empty(len(pts))
    for i in range(len(pts)):
        areas[i] = polygon_area(voronoi_cell(i, pts, tree, domain))
    return areas

"""Conical F-connected targets: k-spiders and books of k half-planes.

A spider is k rays glued at a vertex; a point is ``(face, rho)``. A book is k
half-planes ``{(s, t): t >= 0}`` glued along the spine ``t = 0``; a point is
``(page, s, t)``. Faces are numbered ``0..k-1``. Shared points (the vertex,
the spine) are stored with face 0 so equal points compare equal.

Any two points of either family lie in a common flat (two rays form a line,
two pages form a plane), which is what makes the metric, geodesics and
barycenters closed-form.
"""
from dataclasses import dataclass

import numpy as np

SPIDER = "spider"
BOOK = "book"


@dataclass(frozen=True)
class TargetComplex:
    kind: str
    k: int

    def __post_init__(self):
        if self.kind not in (SPIDER, BOOK):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if int(self.k) != self.k or self.k < 3:
            raise ValueError(f"{self.kind} needs k >= 3 faces, got {self.k}")

    @property
    def coord_dim(self):
        return 1 if self.kind == SPIDER else 2

    @property
    def embedding_dim(self):
        # rays along coordinate axes / spine axis plus one axis per page
        return self.k if self.kind == SPIDER else self.k + 1

    def cone_point(self):
        return TargetPoint(0, (0.0,) * self.coord_dim)

    def point(self, face, *coords):
        """Build a validated point in canonical form."""
        face = int(face)
        if not 0 <= face < self.k:
            raise IndexError(f"face {face} out of range for {self.kind}({self.k})")
        if len(coords) != self.coord_dim:
            raise ValueError(f"{self.kind} points take {self.coord_dim} coordinate(s)")
        coords = tuple(float(c) for c in coords)
        if not all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        if coords[-1] < 0.0:
            raise ValueError("radial/normal coordinate must be >= 0")
        if coords[-1] == 0.0:
            face = 0
        return TargetPoint(face, coords)

    def check(self, p):
        if not 0 <= p.face < self.k:
            raise IndexError(f"face {p.face} out of range for {self.kind}({self.k})")
        if len(p.coords) != self.coord_dim:
            raise ValueError("coordinate count does not match target")
        return p


@dataclass(frozen=True)
class TargetPoint:
    face: int
    coords: tuple

    @property
    def height(self):
        """Radius (spider) or distance to the spine (book)."""
        return self.coords[-1]


def _chart(p, face):
    """Coordinates of ``p`` in the flat made of ``face`` and the face opposite ``p``.

    Points on ``face`` (or shared points) keep their sign; points on any other
    face are reflected through the vertex/spine.
    """
    c = np.array(p.coords, dtype=float)
    if p.face != face and c[-1] != 0.0:
        c[-1] = -c[-1]
    return c


def distance(p, q, X):
    """Length of the geodesic between ``p`` and ``q``."""
    X.check(p)
    X.check(q)
    a = np.array(p.coords, dtype=float)
    b = _chart(q, p.face)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def geodesic_point(p, q, lam, X):
    """Point at fraction ``lam`` of the way from ``p`` to ``q``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    X.check(p)
    X.check(q)
    a = np.array(p.coords, dtype=float)
    b = _chart(q, p.face)
    c = (1.0 - lam) * a + lam * b
    if c[-1] >= 0.0:
        return X.point(p.face, *c)
    c[-1] = -c[-1]
    return X.point(q.face, *c)


def cone_scale(p, lam, X):
    """Rescale ``p`` about the cone point by ``lam >= 0``."""
    if lam < 0:
        raise ValueError(f"scale must be >= 0, got {lam}")
    X.check(p)
    return X.point(p.face, *(lam * np.array(p.coords, dtype=float)))


def barycenter_objective(q, points, weights, X):
    return float(sum(w * distance(q, p, X) ** 2 for p, w in zip(points, weights)))


def weighted_barycenter(points, weights, X):
    """Minimiser of ``sum_i w_i d^2(q, p_i)``.

    One closed-form candidate per face: average the points unfolded into the
    flat of that face, clamp the normal coordinate at 0. The candidate with
    the least objective wins; ties go to the lowest face index.
    """
    points = list(points)
    weights = np.asarray(list(weights), dtype=float)
    if not points:
        raise ValueError("barycenter of an empty set")
    if len(weights) != len(points):
        raise ValueError("one weight per point required")
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    for p in points:
        X.check(p)
    wsum = weights.sum()
    best, best_val = None, np.inf
    for face in range(X.k):
        unfolded = np.array([_chart(p, face) for p in points])
        c = weights @ unfolded / wsum
        c[-1] = max(c[-1], 0.0)
        cand = X.point(face, *c)
        val = barycenter_objective(cand, points, weights, X)
        if val < best_val:
            best, best_val = cand, val
    return best


# -- array forms used by the grid code -------------------------------------

def dist2_arrays(X, f1, c1, f2, c2):
    """Squared distances between two aligned arrays of points.

    ``f*`` are integer face arrays, ``c*`` coordinate arrays with a trailing
    axis of length ``X.coord_dim``.
    """
    h1 = c1[..., -1]
    h2 = c2[..., -1]
    same = (f1 == f2) | (h1 == 0.0) | (h2 == 0.0)
    normal = np.where(same, h1 - h2, h1 + h2)
    if X.kind == SPIDER:
        return normal * normal
    ds = c1[..., 0] - c2[..., 0]
    return ds * ds + normal * normal


def height2_arrays(X, c):
    """Squared distance to the cone point."""
    return np.sum(c * c, axis=-1)

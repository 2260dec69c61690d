"""Weighted point clouds, mean flatness, span tests and dyadic flatness sums."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

LOG2 = math.log(2.0)
BALL_MEASURE = "ball_measure"
HAUSDORFF = "hausdorff_surrogate"


@dataclass(frozen=True, eq=False)
class WeightedPointCloud:
    """Atoms ``points[j]`` with masses ``weights[j]``.

    For ``tag == 'ball_measure'`` each atom also carries a ball radius
    ``radii[j]`` and its weight is ``radii[j] ** k``.
    """

    points: np.ndarray
    weights: np.ndarray
    tag: str = HAUSDORFF
    radii: np.ndarray = None
    k: int = None
    box: float = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if pts.shape[0] != w.shape[0]:
            raise ValueError("one weight per atom required")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValueError("atoms and weights must be finite")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if self.tag not in (BALL_MEASURE, HAUSDORFF):
            raise ValueError(f"unknown cloud tag {self.tag!r}")
        if self.box is not None and np.any(np.abs(pts) > self.box):
            raise ValueError("atoms outside the ambient box")
        if self.radii is not None:
            object.__setattr__(self, "radii", np.asarray(self.radii, dtype=float).reshape(-1))
            if self.radii.shape != w.shape or np.any(self.radii <= 0):
                raise ValueError("radii must be positive, one per atom")

    @classmethod
    def ball_measure(cls, centers, radii, k, box=None):
        radii = np.asarray(radii, dtype=float)
        return cls(centers, radii ** k, BALL_MEASURE, radii, k, box)

    @classmethod
    def unit(cls, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.ones(pts.shape[0]))

    @property
    def m(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def tree(self):
        return cKDTree(self.points)

    def mass(self, x0=None, r=None):
        if x0 is None:
            return float(self.weights.sum())
        sel = np.linalg.norm(self.points - np.asarray(x0, dtype=float), axis=1) <= r
        return float(self.weights[sel].sum())


@dataclass
class FlatnessResult:
    barycenter: np.ndarray
    eigenvalues: np.ndarray  # descending
    plane_point: np.ndarray
    directions: np.ndarray  # (k, m), orthonormal rows
    D: float
    mass: float


def _second_moment(pts, w):
    xbar = w @ pts / w.sum()
    d = pts - xbar
    return xbar, (d * w[:, None]).T @ d


def mean_flatness(mu, x0, r, k, _idx=None):
    """D_mu^k(x0, r): scaled least squared distance of mu on B_r(x0) to a k-plane.

    The optimal plane passes through the barycenter and is spanned by the top
    k eigenvectors of the second-moment form; the residual is the sum of the
    remaining eigenvalues.
    """
    m = mu.m
    if not 0 <= k <= m - 1:
        raise ValueError(f"k must lie in [0, {m - 1}], got {k}")
    x0 = np.asarray(x0, dtype=float)
    if _idx is None:
        sel = np.linalg.norm(mu.points - x0, axis=1) <= r
        pts, w = mu.points[sel], mu.weights[sel]
    else:
        pts, w = mu.points[_idx], mu.weights[_idx]
    if w.size == 0:
        return FlatnessResult(x0.copy(), np.zeros(m), x0.copy(), np.zeros((0, m)), 0.0, 0.0)
    xbar, M = _second_moment(pts, w)
    lam, vec = np.linalg.eigh(M)
    lam = np.clip(lam[::-1], 0.0, None)
    vec = vec[:, ::-1]
    D = float(r ** (-k - 2) * lam[k:].sum())
    return FlatnessResult(xbar, lam, xbar, vec[:, :k].T.copy(), D, float(w.sum()))


def plane_residual(mu, x0, r, point, directions):
    """r^{-k-2} times the mu-integral over B_r(x0) of dist(y, plane)^2."""
    directions = np.atleast_2d(np.asarray(directions, dtype=float)).reshape(-1, mu.m)
    k = directions.shape[0]
    sel = np.linalg.norm(mu.points - np.asarray(x0, dtype=float), axis=1) <= r
    d = mu.points[sel] - np.asarray(point, dtype=float)
    if k:
        Q, _ = np.linalg.qr(directions.T)
        d = d - (d @ Q) @ Q.T
    return float(r ** (-k - 2) * np.sum(mu.weights[sel] * np.sum(d * d, axis=1)))


# -- quantitative independence ----------------------------------------------


def _extend_basis(basis, v, tol=0.0):
    """Component of v orthogonal to span(basis) and its length."""
    for b in basis:
        v = v - (v @ b) * b
    return v, float(np.linalg.norm(v))


def rho_linear_independence(points, rho_r):
    """Sequential test: each point at distance >= rho_r from the affine span of
    its predecessors. Returns ``(True, basis)`` with an orthonormal basis of
    the spanned directions, else ``(False, None)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1 or pts.shape[0] - 1 > pts.shape[1]:
        raise ValueError("need between 1 and m+1 points")
    x0 = pts[0]
    basis = []
    for p in pts[1:]:
        v, dist = _extend_basis(basis, p - x0)
        if dist < rho_r:
            return False, None
        basis.append(v / dist)
    return True, np.array(basis).reshape(len(basis), pts.shape[1])


def greedy_span(points, rho_r, dim):
    """Look for dim + 1 points of ``points`` that are rho_r-linearly independent.

    Starts from the first point (lexicographic order) and repeatedly adds the
    point farthest from the current affine span. Returns
    ``(ok, anchor, basis)``; for dim = 0 any nonempty set spans.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        return False, None, None
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    x0 = pts[0]
    basis = []
    resid = pts - x0
    for _ in range(dim):
        dist = np.linalg.norm(resid, axis=1)
        j = int(np.argmax(dist))
        if dist[j] < rho_r:
            return False, x0, None
        b = resid[j] / dist[j]
        basis.append(b)
        resid = resid - np.outer(resid @ b, b)
    return True, x0, np.array(basis).reshape(dim, pts.shape[1])


# -- dyadic sums -------------------------------------------------------------


def dyadic_scales(s_max, s_min):
    """s_max, s_max/2, ... down to the last scale >= s_min."""
    if not 0 < s_min <= s_max:
        raise ValueError("need 0 < s_min <= s_max")
    J = int(math.floor(math.log2(s_max / s_min) + 1e-12))
    return s_max * 0.5 ** np.arange(J + 1)


def rectifiability_statistic(mu, x, k, s_min, s_max):
    """Dyadic approximation of the integral of D_mu^k(x, s) ds / s over [s_min, s_max]."""
    tree = mu.tree()
    x = np.asarray(x, dtype=float)
    total = 0.0
    for s in dyadic_scales(s_max, s_min):
        idx = tree.query_ball_point(x, s)
        total += mean_flatness(mu, x, s, k, _idx=np.sort(np.asarray(idx, dtype=int))).D
    return total * LOG2


def rectifiability_statistics(mu, k, s_min, s_max):
    """The statistic at every atom."""
    return np.array([rectifiability_statistic(mu, x, k, s_min, s_max) for x in mu.points])


def check_disjoint(mu):
    """Raise ValueError if two atom balls overlap (open balls, touching allowed)."""
    if mu.radii is None:
        raise ValueError("cloud has no ball radii")
    tree = mu.tree()
    pairs = tree.query_pairs(2.0 * float(mu.radii.max()), output_type="ndarray")
    if pairs.size:
        d = np.linalg.norm(mu.points[pairs[:, 0]] - mu.points[pairs[:, 1]], axis=1)
        bad = d < mu.radii[pairs[:, 0]] + mu.radii[pairs[:, 1]]
        if np.any(bad):
            i, j = pairs[np.argmax(bad)]
            raise ValueError(f"balls {i} and {j} overlap")


@dataclass
class ReifenbergReport:
    max_ratio: float
    delta0: float
    passed: bool
    mass_B1: float
    per_ball: list = field(default_factory=list)  # (center index, r, ratio)


def reifenberg_test(mu, delta0=0.01, scales=None, s_min=None):
    """Integral flatness condition over balls centred at atoms.

    For each atom x and tested radius r the quantity
    sum_{y in B_r(x)} w_y sum_{s <= r dyadic} D(y, s) log 2, divided by r^k,
    is compared with delta0^2.
    """
    if mu.tag != BALL_MEASURE or mu.k is None:
        raise ValueError("the Reifenberg test needs a ball_measure cloud")
    check_disjoint(mu)
    k = mu.k
    if scales is None:
        s_lo = s_min if s_min is not None else max(float(mu.radii.min()), 1e-6)
        scales = dyadic_scales(1.0, s_lo)
    scales = np.sort(np.asarray(scales, dtype=float))[::-1]
    tree = mu.tree()
    # D(y, s) for every atom and scale
    Dtab = np.zeros((len(mu), scales.size))
    for j, s in enumerate(scales):
        for i, y in enumerate(mu.points):
            idx = np.sort(np.asarray(tree.query_ball_point(y, s), dtype=int))
            Dtab[i, j] = mean_flatness(mu, y, s, k, _idx=idx).D
    rows = []
    worst = 0.0
    for i, x in enumerate(mu.points):
        for j, r in enumerate(scales):
            inner = Dtab[:, j:].sum(axis=1) * LOG2
            idx = np.asarray(tree.query_ball_point(x, r), dtype=int)
            lhs = float(np.sum(mu.weights[idx] * inner[idx]))
            ratio = lhs / r ** k if k else lhs
            rows.append((i, float(r), ratio))
            worst = max(worst, float(ratio))
    return ReifenbergReport(worst, delta0, worst < delta0 ** 2, mu.mass(np.zeros(mu.m), 1.0), rows)


# -- pinching versus flatness ------------------------------------------------


def flatness_pinching_ratio(dmap, s0_points, x0, r, profile=None):
    """Both sides of D^{m-2}(x0, r/8) <= C r^{2-m} sum_{y in S0 cap B_r(x0)} W_{r/8}^{4r}(y).

    mu is unit mass on the given S0 nodes. Radii below 4h are clamped to 4h.
    Returns (lhs, rhs, C_emp) with C_emp = lhs / rhs (0 when lhs is 0).
    """
    from .functionals import DEFAULT_PROFILE, pinching

    profile = profile or DEFAULT_PROFILE
    g = dmap.grid
    m = g.m
    mu = WeightedPointCloud.unit(s0_points)
    lhs = mean_flatness(mu, x0, r / 8.0, m - 2).D
    near = mu.points[np.linalg.norm(mu.points - np.asarray(x0, dtype=float), axis=1) <= r]
    lo = max(r / 8.0, 4 * g.h)
    W = [pinching(dmap, y, lo, 4 * r, profile) for y in near]
    rhs = r ** (2 - m) * float(np.sum(np.maximum(W, 0.0)))
    if lhs == 0.0:
        return lhs, rhs, 0.0
    return lhs, rhs, (lhs / rhs if rhs > 0 else float("inf"))

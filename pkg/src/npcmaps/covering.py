"""Frequency-drop coverings of point clouds and Minkowski-content estimates.

A frequency oracle is any object with ``__call__(points, t) -> array`` giving
I(y, t) for each row of ``points``. :class:`MapOracle` wraps a solved map;
:class:`SyntheticOracle` wraps a closed form so the covering combinatorics can
be exercised without any PDE error.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .functionals import DEFAULT_PROFILE, DomainError, smoothed_frequency
from .gmt import greedy_span

GOOD, BAD, TERMINAL = "good", "bad", "terminal"


class OracleError(RuntimeError):
    """Frequency query that the oracle cannot answer."""

    def __init__(self, message, point, radius):
        super().__init__(message)
        self.point = point
        self.radius = radius


class SyntheticOracle:
    """I(y, t) = func(y, t), vectorised over y."""

    def __init__(self, func, name="synthetic"):
        self.func = func
        self.name = name

    def __call__(self, points, t):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.broadcast_to(np.asarray(self.func(points, t), dtype=float),
                               (points.shape[0],)).copy()

    @classmethod
    def affine(cls, a=1.0, b=1.0):
        return cls(lambda y, t: a + b * t + 0.0 * y[:, 0], f"{a}+{b}t")

    @classmethod
    def constant(cls, value):
        return cls(lambda y, t: np.full(y.shape[0], value), f"const{value}")

    @classmethod
    def near_set(cls, anchors, high, low, width):
        """``high`` within ``width`` of the anchor points, ``low`` elsewhere."""
        tree = cKDTree(np.atleast_2d(anchors))

        def f(y, t):
            d, _ = tree.query(y)
            return np.where(d <= width, high, low)

        return cls(f, "near_set")


class MapOracle:
    """I_phi(y, t) on a discrete map.

    ``min_radius`` is 'raise' (queries below 4h fail) or 'clamp' (they are
    answered at 4h).
    """

    def __init__(self, dmap, profile=DEFAULT_PROFILE, min_radius="raise"):
        if min_radius not in ("raise", "clamp"):
            raise ValueError("min_radius must be 'raise' or 'clamp'")
        self.dmap = dmap
        self.profile = profile
        self.policy = min_radius
        self.rmin = 4 * dmap.grid.h
        self._cache = {}

    def __call__(self, points, t):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if t < self.rmin * (1 - 1e-12):
            if self.policy == "raise":
                raise OracleError(f"radius {t:g} below resolution 4h = {self.rmin:g}",
                                  points[0], t)
            t = self.rmin
        out = np.empty(points.shape[0])
        for i, y in enumerate(points):
            key = (tuple(np.round(y, 12)), round(t, 14))
            if key not in self._cache:
                try:
                    self._cache[key] = smoothed_frequency(self.dmap, y, t, self.profile)
                except DomainError as exc:
                    raise OracleError(str(exc), y, t) from exc
            out[i] = self._cache[key]
        return out


@dataclass(frozen=True)
class CoverParams:
    rho: float = 1.0 / 16.0
    delta: float = 0.2
    sigma: float = 0.01
    tau: float = 1.0
    U: float = None
    center: tuple = None

    def __post_init__(self):
        if not 0 < self.rho < 0.1:
            raise ValueError("rho must lie in (0, 1/10) so that radii shrink")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.sigma < self.tau:
            raise ValueError("need 0 < sigma < tau")


@dataclass
class Ball:
    center: np.ndarray
    radius: float
    kind: str
    generation: int
    npts: int = 0

    @property
    def core(self):
        return self.radius / 5.0


@dataclass
class CoverState:
    """Final balls plus the full per-generation history."""

    m: int
    balls: list
    generations: list  # list of lists of Ball, one per generation
    tube_violations: int = 0
    meta: dict = field(default_factory=dict)

    def packing_sum(self, balls=None):
        balls = self.balls if balls is None else balls
        return float(sum(b.radius ** (self.m - 2) for b in balls))

    def rows(self):
        for g, balls in enumerate(self.generations):
            for b in balls:
                yield (g, *b.center, b.radius, b.kind)


def _lex(points):
    return np.lexsort(np.asarray(points).T[::-1]) if len(points) else np.array([], int)


def _core_clear(c, core, centers, cores):
    if not centers:
        return True
    d = np.linalg.norm(np.asarray(centers) - c, axis=1)
    return bool(np.all(d >= core + np.asarray(cores)))


def _lattice(anchor, basis, center, radius, spacing):
    """Points anchor + spacing * Z^k combos (k = len(basis)) lying in B(center, radius)."""
    k = basis.shape[0]
    if k == 0:
        return anchor[None].copy()
    # project the ball centre onto the plane to bound the index range
    base = anchor + (center - anchor) @ basis.T @ basis
    J = int(math.ceil(radius / spacing)) + 1
    grid = np.array(np.meshgrid(*([np.arange(-J, J + 1)] * k), indexing="ij")).reshape(k, -1).T
    # snap to the lattice through ``anchor``
    shift = np.round((base - anchor) @ basis.T / spacing)
    pts = anchor + ((grid + shift) * spacing) @ basis
    keep = np.linalg.norm(pts - center, axis=1) <= radius
    return pts[keep]


def refine_cover(D, freq, params, center=None):
    """Refine B_tau(center) into balls that are bad, terminal, or dense along a plane.

    Per ball B(c, r): F = D cap B cap {I(y, rho r) > U - delta}. If F fails to
    rho r-span an (m-2)-plane the ball is bad and kept. Otherwise it is good:
    its points are re-covered by radius 10 rho r balls on a spacing-4 rho r
    lattice of the spanned plane V, accepted in lexicographic order when
    their one-fifth cores clear every ball already in the generation, and any
    point still uncovered gets a ball centred on it. Balls of radius <= sigma
    are terminal. Stops when no good balls remain.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    m = D.shape[1]
    if params.U is None:
        raise ValueError("params.U must be set")
    c0 = np.zeros(m) if center is None else np.asarray(center, dtype=float)
    tree = cKDTree(D)
    if np.any(np.linalg.norm(D - c0, axis=1) > params.tau * (1 + 1e-12)):
        raise ValueError("D must lie in B_tau(center)")
    rho, thr = params.rho, params.U - params.delta
    current = [Ball(c0, params.tau, GOOD, 0, len(D))]
    generations = []
    violations = 0
    gen = 0
    while True:
        kept, good = [], []
        for b in current:
            if b.kind != GOOD:
                kept.append(b)
                continue
            idx = np.asarray(tree.query_ball_point(b.center, b.radius * (1 + 1e-12)), dtype=int)
            b.npts = idx.size
            if idx.size == 0:
                continue
            if b.radius <= params.sigma * (1 + 1e-12):
                b.kind = TERMINAL
                kept.append(b)
                continue
            pts = D[np.sort(idx)]
            vals = freq(pts, rho * b.radius)
            F = pts[vals > thr]
            ok, anchor, basis = greedy_span(F, rho * b.radius, m - 2)
            if not ok:
                b.kind = BAD
                kept.append(b)
            else:
                good.append((b, pts, F, anchor, basis))
        generations.append([Ball(b.center, b.radius, b.kind if b.kind != GOOD else GOOD,
                                 gen, b.npts) for b in kept]
                           + [Ball(b.center, b.radius, GOOD, gen, b.npts) for b, *_ in good])
        if not good:
            break
        gen += 1
        nxt = list(kept)
        centers = [b.center for b in nxt]
        cores = [b.core for b in nxt]
        for b, pts, F, anchor, basis in good:
            rn = 10.0 * rho * b.radius
            # tube condition: F within rho r of V
            d = F - anchor
            if basis.shape[0]:
                d = d - (d @ basis.T) @ basis
            violations += int(np.sum(np.linalg.norm(d, axis=1) > rho * b.radius * (1 + 1e-12)))
            cands = _lattice(anchor, basis, b.center, b.radius, 4.0 * rho * b.radius)
            for c in cands[_lex(cands)]:
                if _core_clear(c, rn / 5.0, centers, cores):
                    nxt.append(Ball(c, rn, GOOD, gen))
                    centers.append(c)
                    cores.append(rn / 5.0)
        # every point of a refined ball must stay covered
        C = np.array(centers).reshape(-1, m)
        R = np.array([b.radius for b in nxt])
        for b, pts, *_ in good:
            rn = 10.0 * rho * b.radius
            pts = pts[_lex(pts)]
            dist = np.linalg.norm(pts[:, None, :] - C[None, :, :], axis=2)
            covered = np.any(dist <= R[None, :] * (1 + 1e-12), axis=1)
            for i in np.flatnonzero(~covered):
                if covered[i]:
                    continue
                y = pts[i]
                nxt.append(Ball(y.copy(), rn, GOOD, gen))
                covered |= np.linalg.norm(pts - y, axis=1) <= rn * (1 + 1e-12)
                C = np.vstack([C, y])
                R = np.append(R, rn)
        current = nxt
    final = [b for b in generations[-1] if b.npts > 0 or b.kind != GOOD]
    return CoverState(m, final, generations, violations,
                      {"rho": rho, "delta": params.delta, "U": params.U})


def pinching_alternative(cover, freq, U=None):
    """Which alternative a finished cover lands in.

    ``"initial"`` when refinement stopped at the starting ball. Otherwise
    ``"refined"`` together with min over final balls B_s(x) of
    I(x, rho s / 5) - U, the margin of the frequency lower bound; balls whose
    oracle call fails are skipped and the margin is nan if none remain.
    """
    U = cover.meta["U"] if U is None else U
    if len(cover.generations) == 1:
        return "initial", float("nan")
    rho = cover.meta["rho"]
    margins = []
    for b in cover.balls:
        try:
            margins.append(float(freq(b.center[None], rho * b.radius / 5.0)[0]) - U)
        except OracleError:
            continue
    return "refined", (min(margins) if margins else float("nan"))


# -- decomposition -----------------------------------------------------------


@dataclass
class Piece:
    indices: np.ndarray  # into D
    center: np.ndarray
    radius: float
    s_i: float
    dropped: bool
    generation: int


@dataclass
class Decomposition:
    pieces: list
    packing: list  # per generation: (sum over its bad balls, sum over balls passed on)
    covers: list
    meta: dict = field(default_factory=dict)

    def assignment(self, npts):
        out = np.full(npts, -1)
        for j, p in enumerate(self.pieces):
            out[p.indices] = j
        return out


def _greedy_net(pts, radius):
    """Centres from ``pts`` (lexicographic greedy) whose radius balls cover pts."""
    centers = []
    for y in pts[_lex(pts)]:
        if not any(np.linalg.norm(y - c) <= radius for c in centers):
            centers.append(y)
    return np.array(centers).reshape(-1, pts.shape[1])


def frequency_drop_decomposition(D, freq, s, r, U, delta=0.2, rho=1.0 / 16.0, center=None):
    """Split D into pieces on which the frequency has dropped below U - delta at
    scale s_i, or which have reached scale s_i = s.

    Each generation runs :func:`refine_cover` on the balls handed to it. Inside
    every bad ball of radius r_i the low points (I(y, rho r_i) <= U - delta)
    are covered by radius rho r_i balls and dropped (or, if rho r_i <= s,
    kept with s_i = s); the high points sit within rho r_i of a single point
    and are passed to the next generation in one ball of radius 4 rho r_i.
    Terminal balls end with s_i = s.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    m = D.shape[1]
    if not 0 < s < r:
        raise ValueError("need 0 < s < r")
    c0 = np.zeros(m) if center is None else np.asarray(center, dtype=float)
    thr = U - delta
    assigned = np.zeros(len(D), dtype=bool)
    pieces, packing, covers = [], [], []
    work = [(c0, r)]
    gen = 0
    tree = cKDTree(D)

    def take(idx):
        idx = np.asarray(idx, dtype=int)
        idx = idx[~assigned[idx]]
        assigned[idx] = True
        return np.sort(idx)

    while work:
        nxt = []
        bad_sum = 0.0
        for c, rad in work:
            idx = np.sort(np.asarray(tree.query_ball_point(c, rad * (1 + 1e-12)), dtype=int))
            idx = idx[~assigned[idx]]
            if idx.size == 0:
                continue
            if rad <= s * (1 + 1e-12):
                pieces.append(Piece(take(idx), c, rad, s, False, gen))
                continue
            params = CoverParams(rho=rho, delta=delta, sigma=s, tau=rad, U=U)
            cover = refine_cover(D[idx], freq, params, center=c)
            covers.append(cover)
            sub = cKDTree(D[idx])
            for b in cover.balls:
                loc = np.sort(np.asarray(sub.query_ball_point(b.center, b.radius * (1 + 1e-12)),
                                         dtype=int))
                gidx = idx[loc]
                gidx = gidx[~assigned[gidx]]
                if gidx.size == 0:
                    continue
                if b.kind == TERMINAL:
                    pieces.append(Piece(take(gidx), b.center, b.radius, s, False, gen))
                    continue
                bad_sum += b.radius ** (m - 2)
                vals = freq(D[gidx], rho * b.radius)
                high = gidx[vals > thr]
                low = gidx[vals <= thr]
                small = rho * b.radius
                for cc in _greedy_net(D[low], small) if low.size else []:
                    near = low[np.linalg.norm(D[low] - cc, axis=1) <= small * (1 + 1e-12)]
                    near = near[~assigned[near]]
                    if near.size == 0:
                        continue
                    if small <= s:
                        pieces.append(Piece(take(near), cc, s, s, False, gen))
                    else:
                        pieces.append(Piece(take(near), cc, small, small, True, gen))
                if high.size:
                    # F failed to span: all of it lies within rho r_i of the first point
                    anchor = D[high][_lex(D[high])[0]]
                    nxt.append((anchor.copy(), 4.0 * rho * b.radius))
        packing.append((bad_sum, float(sum(rad ** (m - 2) for _, rad in nxt))))
        work = nxt
        gen += 1
    # any point not reached (cannot happen for a correct cover) is reported
    missing = np.flatnonzero(~assigned)
    return Decomposition(pieces, packing, covers,
                         {"unassigned": missing.size, "U": U, "delta": delta, "rho": rho})


# -- Minkowski content -------------------------------------------------------


def packing_count(D, rho):
    """Size of a greedy maximal 2 rho-separated subset (disjoint rho-balls)."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    chosen = []
    tree = None
    blocked = np.zeros(len(D), dtype=bool)
    tree = cKDTree(D)
    for i in _lex(D):
        if blocked[i]:
            continue
        chosen.append(i)
        blocked[tree.query_ball_point(D[i], 2.0 * rho * (1 - 1e-12))] = True
    return len(chosen)


def tube_volume(D, rho, cells=None):
    """|B_rho(D)| by counting cell centres of a grid with spacing rho / cells."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    m = D.shape[1]
    cells = cells or (64 if m == 2 else 12)
    step = rho / cells
    lo = D.min(axis=0) - rho
    hi = D.max(axis=0) + rho
    axes = [lo[a] + step * (np.arange(int(math.ceil((hi[a] - lo[a]) / step))) + 0.5)
            for a in range(m)]
    tree = cKDTree(D)
    total = 0
    # slab by slab along the first axis to bound memory
    rest = np.array(np.meshgrid(*axes[1:], indexing="ij")).reshape(m - 1, -1).T
    for x0 in axes[0]:
        pts = np.column_stack([np.full(rest.shape[0], x0), rest])
        d, _ = tree.query(pts, distance_upper_bound=rho)
        total += int(np.sum(d < rho))
    return total * step ** m


@dataclass
class MinkowskiTable:
    m: int
    radii: np.ndarray
    N: np.ndarray
    volume: np.ndarray
    U0: float = None
    delta: float = None

    @property
    def packing(self):
        return self.N * self.radii ** (self.m - 2)

    @property
    def ratio(self):
        return self.volume / self.radii ** 2

    @property
    def bound(self):
        """Run constant: the largest N(rho) rho^{m-2} seen."""
        return float(self.packing.max())

    @property
    def kappa(self):
        if self.U0 is None or self.delta is None:
            return None
        return int(math.floor(self.U0 / self.delta)) + 1

    def rows(self):
        for i in range(self.radii.size):
            yield (self.radii[i], int(self.N[i]), self.packing[i], self.volume[i], self.ratio[i])


def minkowski_estimate(D, radii, cells=None, U0=None, delta=None):
    """Packing counts and tube volumes of D across the given radii."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    N = np.array([packing_count(D, r) for r in radii])
    vol = np.array([tube_volume(D, r, cells) for r in radii])
    table = MinkowskiTable(D.shape[1], radii, N, vol, U0, delta)
    assert np.all(table.packing <= table.bound + 1e-12)
    return table

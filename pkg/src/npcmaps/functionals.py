"""Smoothed energy, height, frequency and their identities on discrete maps.

Quadrature
----------
All ball and annulus integrals are evaluated in polar coordinates about the
centre ``x``: Gauss-Legendre in the radius (one panel on each side of r / 2,
where the cutoff has a kink, with about ``density`` nodes per h) times a
spherical rule (uniform angles for m = 2, Gauss-Legendre in cos(theta) times
uniform azimuth for m = 3). Integrands come from node jets blended with
multilinear weights (see :meth:`MapFields.interpolate`), so the cutoff
``phi(|y - x| / r)`` is integrated against a smooth function of the radius
instead of being sampled at grid nodes. Summing nodes directly gives a
frequency that jitters by about 10% as ``r`` moves across grid rows, which
would swamp every monotonicity check.

Node fields (built once per map, see :class:`MapFields`):

``q``   squared distance to the cone point
``p``   sum_c u_c grad u_c (so that grad q = 2 p)
``G``   pullback tensor sum_c grad u_c (x) grad u_c; its trace is |grad u|^2

Gradients and Hessians are central differences of chart coordinates: a
node's own face is unfolded together with whatever face each neighbour lies
on, which is exact wherever the stencil touches at most two faces (spider)
or pages (book). Plain multilinear interpolation of q overestimates it by
about (h / r)^2 relative, which at r = 6h already bends the frequency of a
homogeneous map by 2%; the jets remove that bias.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

_TINY = 1e-28


class DomainError(ValueError):
    """Ball leaves the grid or radius is below the resolution limit."""


class DegenerateMapError(ArithmeticError):
    """Height vanishes, so a frequency ratio is undefined."""


@dataclass(frozen=True)
class SmoothingProfile:
    """phi = 1 on [0, 1/2], 2(1 - t) on [1/2, 1], 0 beyond."""

    knee: float = 0.5

    def __post_init__(self):
        if self.knee != 0.5:
            raise ValueError("only the knee at 1/2 (slope -2) is supported")

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip(2.0 * (1.0 - t), 0.0, 1.0)

    def dphi(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t > 0.5) & (t < 1.0), -2.0, 0.0)


DEFAULT_PROFILE = SmoothingProfile()


# -- node fields -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MapFields:
    """Per-node derived quantities of a discrete map; arrays are flat (C order).

    ``U``, ``DU`` and ``D2U`` hold each node's value, gradient and Hessian in
    that node's chart, so a second-order Taylor jet of the map is available
    around every node.
    """

    m: int
    n: int
    L: float
    h: float
    q: np.ndarray  # (N,)
    p: np.ndarray  # (N, m)
    G: np.ndarray  # (N, m, m)
    density: np.ndarray  # forward-difference |grad u|^2, (N,)
    U: np.ndarray = None  # (N, c)
    DU: np.ndarray = None  # (N, c, m)
    D2U: np.ndarray = None  # (N, c, m, m)

    @property
    def n1(self):
        return self.n + 1

    @property
    def trG(self):
        return np.trace(self.G, axis1=1, axis2=2)

    def stacked(self):
        """Node values of [q, p_1..p_m, G_11..G_mm, trG]."""
        N = self.q.shape[0]
        return np.column_stack(
            [self.q, self.p, self.G.reshape(N, self.m * self.m), self.trG]
        )

    @classmethod
    def from_map(cls, dmap):
        g = dmap.grid
        m, n, shape = g.m, g.n, g.shape
        face = dmap.face
        coords = dmap.coords
        hgt = coords[..., -1]
        c = coords.shape[-1]

        # chart face: own face, or at shared points the face of the highest neighbour
        chart = face.copy()
        best = np.zeros(shape)
        pf = np.pad(face, 1, mode="edge")
        ph = np.pad(hgt, 1, mode="edge")
        for a in range(m):
            for step in (-1, 1):
                sl = [slice(1, -1)] * m
                sl[a] = slice(1 + step, shape[a] + 1 + step)
                nf, nh = pf[tuple(sl)], ph[tuple(sl)]
                sel = (hgt == 0.0) & (nh > best)
                chart = np.where(sel, nf, chart)
                best = np.where(sel, nh, best)

        ar = np.arange(n + 1)
        inner = np.clip(ar, 1, n - 1)

        def value(off, base):
            """Coordinates of node base + off (clamped) in each node's chart."""
            f, v = face, coords
            for a in range(m):
                j = np.clip(base + off[a], 0, n)
                f = np.take(f, j, axis=a)
                v = np.take(v, j, axis=a)
            v = v.copy()
            hv = v[..., -1]
            v[..., -1] = np.where((f == chart) | (hv == 0.0), hv, -hv)
            return v

        def unit(a, k=1):
            off = [0] * m
            off[a] = k
            return off

        DU = np.zeros(shape + (c, m))
        D2U = np.zeros(shape + (c, m, m))
        ip, im = np.minimum(ar + 1, n), np.maximum(ar - 1, 0)
        span = (ip - im) * g.h
        for a in range(m):
            bshape = [1] * m
            bshape[a] = n + 1
            den = span.reshape(bshape + [1])
            DU[..., a] = (value(unit(a), ar) - value(unit(a, -1), ar)) / den
            # second differences about the nearest interior node
            D2U[..., a, a] = (value(unit(a), inner) - 2.0 * value([0] * m, inner)
                              + value(unit(a, -1), inner)) / g.h ** 2
            for b in range(a + 1, m):
                acc = 0.0
                for sa in (1, -1):
                    for sb in (1, -1):
                        off = [0] * m
                        off[a], off[b] = sa, sb
                        acc = acc + sa * sb * value(off, inner)
                D2U[..., a, b] = D2U[..., b, a] = acc / (4.0 * g.h ** 2)
        N = g.size
        U = coords.reshape(N, c).copy()
        DU = DU.reshape(N, c, m)
        D2U = D2U.reshape(N, c, m, m)
        q = np.sum(U * U, axis=1)
        p = np.einsum("nc,nca->na", U, DU)
        G = np.einsum("nca,ncb->nab", DU, DU)

        dens = np.zeros(shape)
        for a in range(m):
            lo = [slice(None)] * m
            hi = [slice(None)] * m
            lo[a], hi[a] = slice(0, -1), slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            h1, h2 = hgt[lo], hgt[hi]
            same = (face[lo] == face[hi]) | (h1 == 0.0) | (h2 == 0.0)
            dn = np.where(same, h1 - h2, h1 + h2)
            d2 = dn * dn
            if c == 2:
                d2 = d2 + (coords[lo][..., 0] - coords[hi][..., 0]) ** 2
            dens[lo] += d2
            # last layer copies its lower neighbour's edge so every node has m edges
            last = [slice(None)] * m
            last[a] = slice(-1, None)
            dens[tuple(last)] += d2[tuple(last)]
        dens /= g.h * g.h
        return cls(m, g.n, g.L, g.h, q, p, G, dens.reshape(N), U, DU, D2U)

    def interpolate(self, pts, values=None):
        """[q, p, G, trG] at ``pts`` from the node jets, or multilinear ``values``.

        With ``values=None`` every corner of the containing cell contributes
        its Taylor jet evaluated at the point, and q, p, G are formed from
        that jet before blending. Each corner then contributes a Gram matrix
        of (u, grad u), so the blend stays positive semidefinite and the
        Cauchy-Schwarz inequality between q, p and G holds pointwise.
        """
        if values is None:
            return kernels.jet_interpolate(self.U, self.DU, self.D2U, self.n1, self.m,
                                           -self.L, self.h, pts)
        return kernels.interpolate(values, self.n1, self.m, -self.L, self.h, pts)


# -- polar quadrature --------------------------------------------------------


def _sphere_rule(m, n_dir):
    """Unit directions and weights summing to |S^{m-1}|."""
    if m == 2:
        th = (np.arange(n_dir) + 0.5) * (2.0 * np.pi / n_dir)
        dirs = np.column_stack([np.cos(th), np.sin(th)])
        return dirs, np.full(n_dir, 2.0 * np.pi / n_dir)
    n_az = n_dir
    n_pol = max(8, n_dir // 2)
    z, wz = np.polynomial.legendre.leggauss(n_pol)
    az = (np.arange(n_az) + 0.5) * (2.0 * np.pi / n_az)
    zz, aa = np.meshgrid(z, az, indexing="ij")
    s = np.sqrt(1.0 - zz * zz)
    dirs = np.column_stack([(s * np.cos(aa)).ravel(), (s * np.sin(aa)).ravel(), zz.ravel()])
    w = np.outer(wz, np.full(n_az, 2.0 * np.pi / n_az)).ravel()
    return dirs, w


def _radial_rule(a, b, count):
    """Gauss-Legendre nodes and weights on [a, b]."""
    t, w = np.polynomial.legendre.leggauss(count)
    return a + 0.5 * (b - a) * (t + 1.0), 0.5 * (b - a) * w


@dataclass(frozen=True)
class Quadrature:
    """Polar rule for a ball of radius ``r``: inner disk, annulus and directions."""

    inner: np.ndarray
    inner_w: np.ndarray
    outer: np.ndarray
    outer_w: np.ndarray
    dirs: np.ndarray
    dir_w: np.ndarray

    @classmethod
    def build(cls, m, h, r, density=None):
        density = density or (4.0 if m == 2 else 2.0)
        nr = max(4, math.ceil(density * 0.5 * r / h))
        inner, inner_w = _radial_rule(0.0, 0.5 * r, nr)
        outer, outer_w = _radial_rule(0.5 * r, r, nr)
        n_dir = max(64 if m == 2 else 24, math.ceil(density * 2.0 * np.pi * r / h))
        dirs, dir_w = _sphere_rule(m, n_dir)
        return cls(inner, inner_w, outer, outer_w, dirs, dir_w)


def _sphere_integrals(fields, x, radii, dirs, dir_w, values, chunk=200_000):
    """For each radius: integrals over the unit sphere of q, w.p, w'Gw, trG.

    Returns an array (len(radii), 4).
    """
    m = fields.m
    nd = dirs.shape[0]
    out = np.empty((radii.shape[0], 4))
    per = max(1, chunk // nd)
    for start in range(0, radii.shape[0], per):
        rr = radii[start:start + per]
        pts = (x[None, None, :] + rr[:, None, None] * dirs[None, :, :]).reshape(-1, m)
        val = fields.interpolate(pts, values).reshape(rr.shape[0], nd, -1)
        q = val[..., 0]
        p = val[..., 1:1 + m]
        G = val[..., 1 + m:1 + m + m * m].reshape(rr.shape[0], nd, m, m)
        tr = val[..., -1]
        wp = np.einsum("rda,da->rd", p, dirs)
        wGw = np.einsum("rdab,da,db->rd", G, dirs, dirs)
        blk = np.stack([q, wp, wGw, tr], axis=-1)
        out[start:start + rr.shape[0]] = np.einsum("rdk,d->rk", blk, dir_w)
    return out


def _check_ball(fields, x, r):
    if r < 4.0 * fields.h * (1 - 1e-12):
        raise DomainError(f"radius {r:g} is below the minimum 4h = {4 * fields.h:g}")
    if np.any(np.abs(x) + r > fields.L * (1 + 1e-12)):
        raise DomainError(f"ball B({tuple(np.round(x, 6))}, {r:g}) leaves the domain")


@dataclass(frozen=True)
class BallQuantities:
    """All smoothed quantities of one (x, r) from a single quadrature pass."""

    E: float
    H: float
    xi: float
    E_calc1: float
    r: float

    @property
    def I(self):
        if not self.H > _TINY * self.r:
            raise DegenerateMapError(f"height vanishes at r={self.r:g}")
        return self.r * self.E / self.H


def _fields_of(obj):
    return obj.fields if hasattr(obj, "fields") else obj


def ball_quantities(dmap, x, r, profile=DEFAULT_PROFILE, density=None, check=True):
    """E_phi, H_phi, xi_phi and the calc1 form of E_phi at one centre and radius."""
    f = _fields_of(dmap)
    x = np.asarray(x, dtype=float)
    if check:
        _check_ball(f, x, r)
    m = f.m
    rule = Quadrature.build(m, f.h, r, density)
    radii = np.concatenate([rule.inner, rule.outer])
    S = _sphere_integrals(f, x, radii, rule.dirs, rule.dir_w, None)
    nin = rule.inner.shape[0]
    Si, So = S[:nin], S[nin:]
    ro, wo = rule.outer, rule.outer_w
    wgt_o = profile.phi(ro / r)
    E = (np.sum(rule.inner ** (m - 1) * rule.inner_w * Si[:, 3])
         + np.sum(wgt_o * ro ** (m - 1) * wo * So[:, 3]))
    # -phi' = 2 on the annulus
    H = np.sum(2.0 * ro ** (m - 2) * wo * So[:, 0])
    xi = np.sum(2.0 * ro ** m * wo * So[:, 2])
    E1 = np.sum(2.0 * ro ** (m - 1) * wo * So[:, 1]) / r
    return BallQuantities(float(E), float(H), float(xi), float(E1), float(r))


def smoothed_energy(dmap, x, r, profile=DEFAULT_PROFILE):
    return ball_quantities(dmap, x, r, profile).E


def smoothed_height(dmap, x, r, profile=DEFAULT_PROFILE):
    bq = ball_quantities(dmap, x, r, profile)
    if not bq.H > _TINY * r:
        raise DegenerateMapError(f"height vanishes on B({tuple(x)}, {r:g})")
    return bq.H


def smoothed_frequency(dmap, x, r, profile=DEFAULT_PROFILE):
    return ball_quantities(dmap, x, r, profile).I


def xi(dmap, x, r, profile=DEFAULT_PROFILE):
    return ball_quantities(dmap, x, r, profile).xi


def pinching(dmap, x, s, r, profile=DEFAULT_PROFILE):
    """W_s^r(x) = I_phi(x, r) - I_phi(x, s)."""
    if s > r:
        raise ValueError("pinching needs s <= r")
    return smoothed_frequency(dmap, x, r, profile) - smoothed_frequency(dmap, x, s, profile)


def classical_order(dmap, x, r, Q=None, density=None):
    """Unsmoothed frequency r E(x, r) / H(x, r, Q) with H a sphere integral.

    ``Q`` defaults to the value of the map at the node nearest ``x``.
    """
    f = dmap.fields
    x = np.asarray(x, dtype=float)
    if r < 2.0 * f.h:
        raise DomainError(f"sphere of radius {r:g} is below grid resolution h = {f.h:g}")
    if np.any(np.abs(x) + r > f.L * (1 + 1e-12)):
        raise DomainError("sphere leaves the domain")
    from .target import dist2_arrays

    g = dmap.grid
    if Q is None:
        Q = dmap.value(g.nearest_index(x))
    X = dmap.target
    X.check(Q)
    qf = np.full(dmap.face.shape, Q.face)
    qc = np.broadcast_to(np.asarray(Q.coords, dtype=float), dmap.coords.shape)
    dQ = dist2_arrays(X, dmap.face, dmap.coords, qf, qc).reshape(-1)
    m = f.m
    rule = Quadrature.build(m, f.h, r, density)
    radii = np.concatenate([rule.inner, rule.outer])
    wts = np.concatenate([rule.inner_w, rule.outer_w])
    vals = np.column_stack([dQ, np.zeros((dQ.size, m + m * m)), f.trG])
    S = _sphere_integrals(f, x, radii, rule.dirs, rule.dir_w, vals)
    E = np.sum(radii ** (m - 1) * wts * S[:, 3])
    Sq = _sphere_integrals(f, x, np.array([r]), rule.dirs, rule.dir_w, vals)
    H = r ** (m - 1) * Sq[0, 0]
    if not H > _TINY * r ** (m + 1):
        raise DegenerateMapError("sphere height vanishes (map constant near x?)")
    return float(r * E / H)


# -- frequencies at every node via a fixed stencil --------------------------


def _node_stencil(m, h, r, n1, density=None):
    """Offsets and weights so that stencil sums over trG and q give E and H."""
    rule = Quadrature.build(m, h, r, density)
    K = math.ceil(r / h) + 1
    side = 2 * K + 1
    acc = np.zeros((side ** m, 2))
    profile = DEFAULT_PROFILE
    for radii, wr, part in ((rule.inner, rule.inner_w, 0), (rule.outer, rule.outer_w, 1)):
        pts = (radii[:, None, None] * rule.dirs[None]).reshape(-1, m)
        rw = wr * radii ** (m - 1)
        if part == 0:
            wE = rw
            wH = np.zeros_like(rw)
        else:
            wE = rw * profile.phi(radii / r)
            wH = 2.0 * wr * radii ** (m - 2)
        pw = np.outer(np.ones_like(radii), rule.dir_w).reshape(-1)
        wE = (wE[:, None] * np.ones(rule.dirs.shape[0])[None]).reshape(-1) * pw
        wH = (wH[:, None] * np.ones(rule.dirs.shape[0])[None]).reshape(-1) * pw
        u = pts / h
        base = np.floor(u).astype(np.int64)
        fr = u - base
        for corner in range(2 ** m):
            bits = [(corner >> (m - 1 - a)) & 1 for a in range(m)]
            w = np.ones(pts.shape[0])
            lin = np.zeros(pts.shape[0], dtype=np.int64)
            for a in range(m):
                w = w * (fr[:, a] if bits[a] else 1.0 - fr[:, a])
                lin = lin * side + (base[:, a] + bits[a] + K)
            np.add.at(acc, lin, np.column_stack([w * wE, w * wH]))
    keep = np.flatnonzero(np.any(acc != 0.0, axis=1))
    offs = np.array(np.unravel_index(keep, (side,) * m)).T - K
    strides = np.array([n1 ** (m - 1 - a) for a in range(m)], dtype=np.int64)
    return offs, offs @ strides, acc[keep], K


def node_frequencies(dmap, radius_cells=4, density=None):
    """I_phi(node, radius_cells * h) at every node; NaN where undefined.

    Nodes whose ball leaves the grid, or whose height vanishes, get NaN.
    """
    f = dmap.fields
    g = dmap.grid
    r = radius_cells * g.h
    offs, deltas, weights, K = _node_stencil(g.m, g.h, r, g.n + 1, density)
    reach = np.max(np.abs(offs))
    ii = np.indices(g.shape).reshape(g.m, -1)
    ok = np.all((ii >= reach) & (ii <= g.n - reach), axis=0)
    # the ball itself must fit too
    rad = int(math.ceil(radius_cells - 1e-12))
    ok &= np.all((ii >= rad) & (ii <= g.n - rad), axis=0)
    ids = np.flatnonzero(ok)
    vals = np.column_stack([f.trG, f.q])
    EH = kernels.stencil_apply(vals, ids, deltas, weights)
    out = np.full(g.size, np.nan)
    H = EH[:, 1]
    good = H > _TINY * r
    out[ids[good]] = r * EH[good, 0] / H[good]
    return out.reshape(g.shape)


# -- frequency profiles ------------------------------------------------------


@dataclass
class AnalysisConfig:
    """Centres and radii at which functionals are tabulated."""

    radii: tuple
    points: tuple
    Lambda: float = 10.0
    quadrature: str = "polar"
    density: float = None

    def validate(self, grid):
        if self.quadrature != "polar":
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        radii = np.asarray(self.radii, dtype=float)
        if radii.size == 0 or len(self.points) == 0:
            raise ValueError("need at least one radius and one sample point")
        if radii.min() < 4 * grid.h * (1 - 1e-12) or radii.max() > 0.5 * grid.L * (1 + 1e-12):
            raise ValueError(f"radii must lie in [4h, L/2] = [{4 * grid.h:g}, {0.5 * grid.L:g}]")
        for x in self.points:
            if len(x) != grid.m:
                raise ValueError(f"sample point {x} has the wrong dimension")
            if not grid.contains_ball(x, radii.max()):
                raise ValueError(f"ball of radius {radii.max():g} about {x} leaves the domain")
        return self


@dataclass
class FrequencyProfile:
    """E, H, I, xi on a (point, radius) table; W is derived by differencing I."""

    points: np.ndarray  # (P, m)
    radii: np.ndarray  # (R,)
    E: np.ndarray  # (P, R)
    H: np.ndarray
    I: np.ndarray
    xi: np.ndarray
    E_calc1: np.ndarray
    profile: SmoothingProfile = DEFAULT_PROFILE
    meta: dict = field(default_factory=dict)

    def W(self, i, s_idx, r_idx):
        return self.I[i, r_idx] - self.I[i, s_idx]

    @property
    def W_ref(self):
        """Pinching against the smallest tabulated radius."""
        return self.I - self.I[:, :1]

    def rows(self):
        P, R = self.I.shape
        Wr = self.W_ref
        for i in range(P):
            for j in range(R):
                yield (*self.points[i], self.radii[j], self.E[i, j], self.H[i, j],
                       self.I[i, j], self.xi[i, j], Wr[i, j])

    def header(self):
        m = self.points.shape[1]
        return [f"x{a + 1}" for a in range(m)] + ["r", "E", "H", "I", "xi", "W_ref"]


def frequency_profile(dmap, config, profile=DEFAULT_PROFILE):
    config.validate(dmap.grid)
    pts = np.asarray(config.points, dtype=float)
    radii = np.asarray(config.radii, dtype=float)
    shape = (pts.shape[0], radii.shape[0])
    E, H, I, X, E1 = (np.zeros(shape) for _ in range(5))
    for i, x in enumerate(pts):
        for j, r in enumerate(radii):
            bq = ball_quantities(dmap, x, r, profile, config.density)
            E[i, j], H[i, j], X[i, j], E1[i, j] = bq.E, bq.H, bq.xi, bq.E_calc1
            I[i, j] = bq.I
    return FrequencyProfile(pts, radii, E, H, I, X, E1, profile,
                            {"map": dmap.digest()[:16], "Lambda": config.Lambda})


# -- identity checks ---------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    threshold: float = None  # None: reported only
    detail: str = ""
    higher_is_worse: bool = True

    @property
    def passed(self):
        if self.threshold is None:
            return True
        if not np.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.higher_is_worse else self.value >= self.threshold

    @property
    def status(self):
        if self.threshold is None:
            return "REPORT"
        return "PASS" if self.passed else "FAIL"


@dataclass
class ResidualReport:
    checks: list = field(default_factory=list)

    def add(self, name, value, *args, **kw):
        self.checks.append(Check(name, float(value), *args, **kw))

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def rows(self):
        for c in self.checks:
            thr = "" if c.threshold is None else repr(c.threshold)
            yield c.name, repr(c.value), thr, c.status, c.detail


def bump(y, center, radius):
    """(1 - |y-c|^2/R^2)^3 on the ball, with its gradient."""
    d = y - center
    s = 1.0 - np.sum(d * d, axis=-1) / radius ** 2
    inside = s > 0
    s = np.where(inside, s, 0.0)
    val = s ** 3
    grad = (-6.0 / radius ** 2) * (s ** 2)[..., None] * d
    return val, grad


_BUMP_CENTER = (0.13, 0.07, 0.05)


def _pad(center, m):
    c = np.zeros(m)
    c[:min(m, len(center))] = np.asarray(center, dtype=float)[:m]
    return c


def weak_residual(dmap, center=_BUMP_CENTER, radius=0.5):
    """Relative residual of the weak form of Lap d^2(u, 0) = 2 |grad u|^2.

    Evaluates 2 sum psi e + sum grad psi . grad q over nodes, with ``e`` the
    forward-difference energy density and central differences for grad q;
    divided by 2 sum psi e.
    """
    f = dmap.fields
    g = dmap.grid
    y = g.nodes().reshape(-1, g.m)
    psi, dpsi = bump(y, _pad(center, g.m), radius)
    lhs = 2.0 * np.sum(psi * f.density)
    rhs = np.sum(np.einsum("na,na->n", dpsi, 2.0 * f.p))
    if not lhs > 0:
        raise DegenerateMapError("energy vanishes on the test function support")
    return abs(lhs + rhs) / lhs


def inner_variation_residual(dmap, center=_BUMP_CENTER, radius=0.5):
    """Relative residual of 2 int <grad u, grad u o grad psi> - int |grad u|^2 div psi.

    Uses the vector field psi(y) = eta(y) (y - c) with eta the bump above.
    """
    f = dmap.fields
    g = dmap.grid
    c = _pad(center, g.m)
    y = g.nodes().reshape(-1, g.m)
    eta, deta = bump(y, c, radius)
    d = y - c
    # D psi_ab = d_a psi_b = deta_a d_b + eta delta_ab
    Dpsi = deta[:, :, None] * d[:, None, :] + eta[:, None, None] * np.eye(g.m)[None]
    div = np.trace(Dpsi, axis1=1, axis2=2)
    t1 = 2.0 * np.einsum("nab,nab->", f.G, Dpsi)
    t2 = np.sum(f.trG * div)
    scale = np.sum(f.trG * np.abs(div)) + np.abs(t1)
    if not scale > 0:
        raise DegenerateMapError("energy vanishes on the test function support")
    return abs(t1 - t2) / scale


def doubling_ratio(dmap, x, s, r, n_t=33, profile=DEFAULT_PROFILE):
    """Ratio of the two sides of s^{1-m}H(s) exp(2 int_s^r I dt/t) = r^{1-m}H(r)."""
    m = dmap.grid.m
    ts = np.geomspace(s, r, n_t)
    qs = [ball_quantities(dmap, x, t, profile) for t in ts]
    I = np.array([b.I for b in qs])
    integral = np.trapezoid(I, np.log(ts))
    lhs = s ** (1 - m) * qs[0].H * np.exp(2.0 * integral)
    rhs = r ** (1 - m) * qs[-1].H
    return lhs / rhs


def _d5(vals, h):
    fm2, fm1, fp1, fp2 = vals
    return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h)


def verify_identities(dmap, config, profile=DEFAULT_PROFILE, thresholds=None):
    """Numerical residuals of the frequency identities at the configured points.

    Radii are those of ``config``; derivatives in r are five-point central
    differences with step h (the three-point rule carries an O(h^2 / r^2)
    truncation error that reaches 2% at r = 6h). Returns a :class:`ResidualReport`.
    """
    config.validate(dmap.grid)
    thr = {"calc1": 1e-2, "calc2": 1e-2, "calc4": 1e-2, "calc7": 1e-2,
           "monotone": 1e-3, "cauchy_schwarz": 1e-9}
    thr.update(thresholds or {})
    g = dmap.grid
    h = g.h
    m = g.m
    radii = np.sort(np.asarray(config.radii, dtype=float))
    rep = ResidualReport()
    c1 = c2 = c4 = 0.0
    cs_worst = np.inf
    mono_I = mono_H = np.inf
    for x in np.asarray(config.points, dtype=float):
        Ivals, Hs = [], []
        for r in radii:
            b0 = ball_quantities(dmap, x, r, profile)
            Ivals.append(b0.I)
            Hs.append(r ** (1 - m) * b0.H)
            c1 = max(c1, abs(b0.E_calc1 - b0.E) / abs(b0.E)) if b0.E > 0 else c1
            # Cauchy-Schwarz in the calc1 form, where it holds exactly
            prod = b0.H * b0.xi
            if prod > 0:
                cs_worst = min(cs_worst, (prod - (r * b0.E_calc1) ** 2) / prod)
            if r - 2 * h >= 4 * h and g.contains_ball(x, r + 2 * h):
                # five-point central difference, step h
                bq = [ball_quantities(dmap, x, r + k * h, profile) for k in (-2, -1, 1, 2)]
                dE = _d5([b.E for b in bq], h)
                dH = _d5([b.H for b in bq], h)
                rhsE = (m - 2) / r * b0.E + 2.0 / r ** 2 * b0.xi
                rhsH = (m - 1) / r * b0.H + 2.0 * b0.E
                if abs(rhsE) > 0:
                    c2 = max(c2, abs(dE - rhsE) / abs(rhsE))
                if abs(rhsH) > 0:
                    c4 = max(c4, abs(dH - rhsH) / abs(rhsH))
        Ivals = np.array(Ivals)
        Hs = np.array(Hs)
        if radii.size > 1:
            mono_I = min(mono_I, float(np.min(np.diff(Ivals))))
            mono_H = min(mono_H, float(np.min(np.diff(Hs) / Hs[1:])))
    rep.add("calc1", c1, thr["calc1"], "max |E_calc1 - E| / E")
    rep.add("calc2", c2, thr["calc2"], "max relative residual of dE/dr")
    rep.add("calc4", c4, thr["calc4"], "max relative residual of dH/dr")
    rep.add("cauchy_schwarz", cs_worst, -thr["cauchy_schwarz"],
            "min (H xi - r^2 E^2) / (H xi)", higher_is_worse=False)
    rep.add("monotone_I", mono_I, -thr["monotone"], "min increment of I over radii",
            higher_is_worse=False)
    rep.add("monotone_H", mono_H, -thr["monotone"],
            "min relative increment of r^(1-m) H", higher_is_worse=False)
    # doubling over the widest admissible pair at the first point
    x0 = np.asarray(config.points[0], dtype=float)
    s, r = radii[0], radii[-1]
    if s < r:
        ratio = doubling_ratio(dmap, x0, s, r, profile=profile)
        rep.add("calc7", abs(ratio - 1.0), thr["calc7"], f"doubling ratio {ratio:.6f} on [{s:g}, {r:g}]")
    rep.add("weak_laplacian", weak_residual(dmap), None, "relative weak residual, O(h)")
    rep.add("inner_variation", inner_variation_residual(dmap), None, "relative residual")
    try:
        cmp_c = frequency_comparison_constant(dmap, x0, profile)
        rep.add("comparison_C", cmp_c, None, "max I(y,r) / (I(x,16r) + 1)")
    except DomainError as exc:
        rep.add("comparison_C", float("nan"), None, f"skipped: {exc}")
    return rep


def frequency_comparison_constant(dmap, x, profile=DEFAULT_PROFILE):
    """Empirical C in I(y, r) <= C (I(x, 16 r) + 1) for nodes y in B_{r/4}(x).

    The outer radius 16 r is capped at L/2, then r = max(cap / 16, 4h).
    """
    g = dmap.grid
    x = np.asarray(x, dtype=float)
    R = min(0.5 * g.L, float(np.min(g.L - np.abs(x))))
    r = max(R / 16.0, 4 * g.h)
    R = min(16 * r, R)
    Ix = smoothed_frequency(dmap, x, R, profile)
    worst = 0.0
    base = np.array(g.nearest_index(x))
    k = int(math.floor(0.25 * r / g.h))
    for off in np.ndindex(*((2 * k + 1,) * g.m)):
        idx = base + np.array(off) - k
        y = g.node(idx)
        if np.linalg.norm(y - x) < 0.25 * r and g.contains_ball(y, r):
            worst = max(worst, smoothed_frequency(dmap, y, r, profile) / (Ix + 1.0))
    return worst


def weak_rate(coarse, fine, **kw):
    """Ratio of weak residuals on a grid and its refinement (about 2 for O(h))."""
    return weak_residual(coarse, **kw) / weak_residual(fine, **kw)


# -- sanity reports for the rigidity estimates -------------------------------


def homogeneity_defect(dmap, x, lam, profile=DEFAULT_PROFILE, n_freq=24):
    """Defect integral over B_{2 lam}(x) minus B_{lam/4}(x) against W_{lam/8}^{4 lam}(x).

    The integrand |grad u(z) o (z - x) - I(x, |z - x|) u(z)|^2 expands in the
    node fields as v'Gv - 2 I v.p + I^2 q with v = z - x. It is reported
    relative to the integral of v'Gv, which makes it scale free. Radii below
    4h are clamped to 4h. Returns (relative defect, W, C_emp).
    """
    f = dmap.fields
    g = dmap.grid
    x = np.asarray(x, dtype=float)
    m = g.m
    rmin = 4 * g.h
    a, b = max(lam / 4.0, rmin), 2.0 * lam
    ts = np.geomspace(max(a, rmin), b, n_freq)
    Is = np.array([smoothed_frequency(dmap, x, t, profile) for t in ts])
    rule = Quadrature.build(m, g.h, b)
    count = max(8, math.ceil((b - a) / (g.h / 4)))
    radii, wr = _radial_rule(a, b, count)
    S = _sphere_integrals(f, x, radii, rule.dirs, rule.dir_w, None)
    Ir = np.interp(np.log(radii), np.log(ts), Is)
    # on a sphere of radius t: v = t w, so v'Gv = t^2 w'Gw and v.p = t w.p
    dens = radii ** 2 * S[:, 2] - 2.0 * Ir * radii * S[:, 1] + Ir ** 2 * S[:, 0]
    jac = radii ** (m - 1) * wr
    lhs = float(np.sum(dens * jac))
    ref = float(np.sum(radii ** 2 * S[:, 2] * jac))
    rel = lhs / ref if ref > 0 else float("nan")
    W = pinching(dmap, x, max(lam / 8.0, rmin), 4.0 * lam, profile)
    C = rel / W if W > 0 else float("inf") if rel > 0 else 0.0
    return rel, W, C


def frequency_lipschitz_constant(dmap, x1, x2, r, n_pts=5, profile=DEFAULT_PROFILE):
    """Empirical C in |I(z,r) - I(y,r)| <= C [W(x1) + W(x2)]^(1/2) |z-y| / |x1-x2|.

    z and y run over ``n_pts`` equally spaced points of the segment [x1, x2];
    W is W_{r/8}^{4r} with the lower radius clamped to 4h.
    """
    g = dmap.grid
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    sep = np.linalg.norm(x2 - x1)
    lo = max(r / 8.0, 4 * g.h)
    W = sum(max(pinching(dmap, p, lo, 4 * r, profile), 0.0) for p in (x1, x2))
    pts = [x1 + t * (x2 - x1) for t in np.linspace(0.0, 1.0, n_pts)]
    Is = [smoothed_frequency(dmap, p, r, profile) for p in pts]
    worst = 0.0
    for i in range(n_pts):
        for j in range(i + 1, n_pts):
            dist = np.linalg.norm(pts[i] - pts[j]) / sep
            worst = max(worst, abs(Is[i] - Is[j]) / (math.sqrt(max(W, 1e-300)) * dist))
    return worst, W

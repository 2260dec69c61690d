"""Uniform grids on [-L, L]^m, boundary fixtures, discrete maps and their energy."""
import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .target import BOOK, SPIDER, TargetComplex, TargetPoint

MAP_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Grid:
    m: int
    n: int
    L: float = 1.0

    def __post_init__(self):
        if self.m not in (2, 3):
            raise ValueError(f"domain dimension must be 2 or 3, got {self.m}")
        if int(self.n) != self.n or self.n < 8:
            raise ValueError(f"resolution n must be an integer >= 8, got {self.n}")
        if not self.L > 0:
            raise ValueError("half-width L must be positive")

    @property
    def h(self):
        return 2.0 * self.L / self.n

    @property
    def shape(self):
        return (self.n + 1,) * self.m

    @property
    def size(self):
        return (self.n + 1) ** self.m

    @property
    def strides(self):
        n1 = self.n + 1
        return np.array([n1 ** (self.m - 1 - a) for a in range(self.m)], dtype=np.int64)

    def axis(self):
        return -self.L + self.h * np.arange(self.n + 1)

    def nodes(self):
        """Node coordinates, shape ``grid.shape + (m,)``."""
        ax = self.axis()
        return np.stack(np.meshgrid(*([ax] * self.m), indexing="ij"), axis=-1)

    def boundary_mask(self):
        idx = np.indices(self.shape)
        return np.any((idx == 0) | (idx == self.n), axis=0)

    def nearest_index(self, x):
        x = np.asarray(x, dtype=float)
        return tuple(int(i) for i in np.clip(np.rint((x + self.L) / self.h), 0, self.n))

    def node(self, index):
        return -self.L + self.h * np.asarray(index, dtype=float)

    def contains_ball(self, x, r, slack=1e-12):
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.abs(x) + r <= self.L * (1 + slack)))


# -- analytic fixtures -------------------------------------------------------


def _sector_split(theta, k):
    width = 2.0 * np.pi / k
    sector = np.mod(np.rint(theta / width), k).astype(np.int64)
    offset = np.mod(theta - sector * width + np.pi, 2.0 * np.pi) - np.pi
    return sector, offset


def _homogeneous_profile(x, y, k, alpha):
    r = np.hypot(x, y)
    sector, offset = _sector_split(np.arctan2(y, x), k)
    prof = np.cos(alpha * offset)
    prof = np.where(prof < 1e-12, 0.0, prof)
    return sector, r ** alpha * prof


@dataclass(frozen=True)
class Fixture:
    """Closed-form map used for boundary traces, initial guesses and oracles.

    ``alpha`` is the homogeneity degree about the origin when the map is
    conically homogeneous there, else ``None``.
    """

    name: str
    target: TargetComplex
    m: int
    params: dict = field(default_factory=dict)

    @property
    def alpha(self):
        if self.name == "spider_homogeneous":
            return self.target.k / 2.0
        if self.name == "product_tripod":
            return 1.5
        if self.name == "linear":
            return 1.0
        return None

    @property
    def harmonic(self):
        """True when the closed form is itself energy minimising."""
        return self.name != "perturbed_tripod"

    def evaluate(self, pts):
        """Faces and coordinates of the fixture at points of shape (..., m)."""
        pts = np.asarray(pts, dtype=float)
        X = self.target
        lead = pts.shape[:-1]
        coords = np.zeros(lead + (X.coord_dim,))
        if self.name == "constant":
            p = self.params["point"]
            face = np.full(lead, p.face, dtype=np.int64)
            coords[...] = p.coords
            return face, coords
        if self.name == "linear":
            slope = self.params.get("slope", 1.0)
            signed = slope * pts[..., self.params.get("axis", 0)]
            face = np.where(signed > 0, 0, 1).astype(np.int64)
            coords[..., -1] = np.abs(signed)
            if X.kind == BOOK:
                coords[..., 0] = self.params.get("spine_slope", 0.0) * pts[..., 1]
            face = np.where(coords[..., -1] == 0.0, 0, face)
            return face, coords
        if self.name == "spider_homogeneous":
            k = X.k
            face, rho = _homogeneous_profile(pts[..., 0], pts[..., 1], k, k / 2.0)
        elif self.name == "perturbed_tripod":
            eps = self.params.get("epsilon", 0.25)
            face, rho = _homogeneous_profile(pts[..., 0], pts[..., 1], 3, 1.5)
            r = np.hypot(pts[..., 0], pts[..., 1])
            theta = np.arctan2(pts[..., 1], pts[..., 0])
            rho = rho * (1.0 + eps * np.sqrt(r) * np.cos(2.0 * theta))
        elif self.name == "product_tripod":
            face, rho = _homogeneous_profile(pts[..., 1], pts[..., 2], 3, 1.5)
        else:
            raise ValueError(f"unknown fixture {self.name!r}")
        face = np.where(rho > 0.0, face, 0)
        coords[..., -1] = rho
        return face.astype(np.int64), coords


def spider_homogeneous_fixture(k, m=2):
    if k < 3:
        raise ValueError("spider fixtures need k >= 3")
    if m != 2:
        raise ValueError("the sector fixture lives on planar domains")
    return Fixture("spider_homogeneous", TargetComplex(SPIDER, k), 2)


def linear_fixture(target, m=2, slope=1.0, axis=0):
    return Fixture("linear", target, m, {"slope": slope, "axis": axis})


def constant_fixture(target, point, m=2):
    target.check(point)
    return Fixture("constant", target, m, {"point": point})


def perturbed_tripod_fixture(epsilon=0.25):
    """Tripod trace plus a degree-2 radial correction; not homogeneous."""
    return Fixture("perturbed_tripod", TargetComplex(SPIDER, 3), 2, {"epsilon": epsilon})


def product_tripod_fixture():
    """Book(3) map: tripod in the (x2, x3) cross-section, constant along x1."""
    return Fixture("product_tripod", TargetComplex(BOOK, 3), 3)


# -- boundary data and maps --------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryData:
    grid: Grid
    target: TargetComplex
    face: np.ndarray
    coords: np.ndarray
    name: str = "tabulated"
    fixture: Fixture = None

    def __post_init__(self):
        if self.face.shape != self.grid.shape:
            raise ValueError("boundary faces must cover the whole grid array")
        if self.coords.shape != self.grid.shape + (self.target.coord_dim,):
            raise ValueError("boundary coordinates have the wrong shape")
        mask = self.grid.boundary_mask()
        if not np.all(np.isfinite(self.coords[mask])):
            raise ValueError("boundary data must cover every boundary node")

    def trace_at(self, pts):
        """Boundary values at boundary points (exact for fixtures, else nearest node)."""
        if self.fixture is not None:
            return self.fixture.evaluate(pts)
        idx = np.clip(np.rint((pts + self.grid.L) / self.grid.h), 0, self.grid.n).astype(int)
        idx = tuple(idx[..., a] for a in range(self.grid.m))
        return self.face[idx], self.coords[idx]


def boundary_from_fixture(fixture, grid):
    if fixture.m != grid.m:
        raise ValueError(f"fixture {fixture.name} needs m={fixture.m}")
    face, coords = fixture.evaluate(grid.nodes())
    mask = grid.boundary_mask()
    face = np.where(mask, face, 0)
    coords = np.where(mask[..., None], coords, np.nan)
    return BoundaryData(grid, fixture.target, face, coords, fixture.name, fixture)


def make_boundary_spider_homogeneous(k, grid):
    """Trace of the degree-k/2 sector map into Spider(k) on the box boundary."""
    if grid.m != 2:
        raise ValueError("spider sector boundary data needs m = 2")
    return boundary_from_fixture(spider_homogeneous_fixture(k), grid)


class DiscreteMap:
    """Grid map into a target: one point (face, coords) per node."""

    def __init__(self, grid, target, face, coords, boundary_mask=None, meta=None):
        self.grid = grid
        self.target = target
        self.face = np.ascontiguousarray(face, dtype=np.int64).reshape(grid.shape)
        self.coords = np.ascontiguousarray(coords, dtype=np.float64).reshape(
            grid.shape + (target.coord_dim,)
        )
        self.boundary_mask = grid.boundary_mask() if boundary_mask is None else boundary_mask
        self.meta = dict(meta or {})
        self._validate()

    def _validate(self):
        if np.any((self.face < 0) | (self.face >= self.target.k)):
            raise IndexError("face index out of range")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("map values must be finite")
        if np.any(self.coords[..., -1] < 0):
            raise ValueError("normal coordinate must be >= 0")
        if np.any(self.face[self.coords[..., -1] == 0.0] != 0):
            raise ValueError("shared points must carry face 0")

    @classmethod
    def from_fixture(cls, fixture, grid):
        face, coords = fixture.evaluate(grid.nodes())
        return cls(grid, fixture.target, face, coords, meta={"fixture": fixture.name})

    def copy(self):
        return DiscreteMap(self.grid, self.target, self.face.copy(), self.coords.copy(),
                           self.boundary_mask.copy(), self.meta)

    def value(self, index):
        index = tuple(index)
        return TargetPoint(int(self.face[index]), tuple(float(c) for c in self.coords[index]))

    def height2(self):
        return np.sum(self.coords * self.coords, axis=-1)

    @cached_property
    def fields(self):
        from .functionals import MapFields

        return MapFields.from_map(self)

    def digest(self):
        hsh = hashlib.sha256()
        hsh.update(self.face.tobytes())
        hsh.update(self.coords.tobytes())
        return hsh.hexdigest()


def energy(dmap):
    """Forward-difference Dirichlet energy: sum over edges of d^2/h^2 * h^m."""
    g = dmap.grid
    return kernels.edge_sum(dmap.face, dmap.coords, g.shape) * g.h ** (g.m - 2)


# -- persistence -------------------------------------------------------------


def save_map(path, dmap, extra=None):
    """Write a map as CSV: '#'-prefixed header, then ``face,coord...`` per node."""
    g, X = dmap.grid, dmap.target
    lines = [
        f"# npcmaps-map v{MAP_FORMAT_VERSION}",
        f"# m={g.m} n={g.n} L={g.L!r} kind={X.kind} k={X.k}",
    ]
    for key, val in (extra or {}).items():
        lines.append(f"# {key}={val}")
    cols = "face," + ",".join(["rho"] if X.coord_dim == 1 else ["s", "t"])
    lines.append(cols)
    face = dmap.face.reshape(-1)
    coords = dmap.coords.reshape(-1, X.coord_dim)
    for f, c in zip(face.tolist(), coords.tolist()):
        lines.append(f"{f}," + ",".join(repr(v) for v in c))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_map(path):
    header = {}
    rows = []
    with open(path, encoding="ascii") as fh:
        first = fh.readline().strip()
        if not first.startswith("# npcmaps-map v"):
            raise ValueError(f"{path}: not a map file")
        version = int(first.rsplit("v", 1)[1])
        if version != MAP_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported map format version {version}")
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        header[key] = val
            elif line and not line.startswith("face"):
                rows.append(line.split(","))
    grid = Grid(int(header["m"]), int(header["n"]), float(header["L"]))
    target = TargetComplex(header["kind"], int(header["k"]))
    if len(rows) != grid.size:
        raise ValueError(f"{path}: expected {grid.size} rows, found {len(rows)}")
    face = np.array([int(r[0]) for r in rows], dtype=np.int64)
    coords = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    meta = {k: v for k, v in header.items() if k not in ("m", "n", "L", "kind", "k")}
    return DiscreteMap(grid, target, face, coords, meta=meta)

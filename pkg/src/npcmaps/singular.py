"""Singular and high-order points of discrete maps, plus rigid-case oracles."""
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .functionals import classical_order, node_frequencies

CENSUS_RADII = (2, 4, 8)  # in units of h


@dataclass(frozen=True)
class ClassifyConfig:
    eps_gap: float = 0.1
    census_radii: tuple = CENSUS_RADII
    freq_radius: int = 4  # reference radius for the order test, in units of h
    vertex_tol: float = 1e-9  # relative to the largest height in the map

    def __post_init__(self):
        if not self.eps_gap > 0:
            raise ValueError("eps_gap must be positive")
        if not self.census_radii or min(self.census_radii) <= 0:
            raise ValueError("census radii must be positive")
        if self.freq_radius < 4:
            raise ValueError("frequencies below radius 4h are not computed")
        if self.vertex_tol < 0:
            raise ValueError("vertex_tol must be >= 0")


@dataclass
class PointClassification:
    """Per-node flags on the grid array. ``census`` is the fewest faces seen."""

    grid: object
    singular: np.ndarray
    high_order: np.ndarray
    I_ref: np.ndarray
    census: np.ndarray
    config: ClassifyConfig
    meta: dict = field(default_factory=dict)

    @property
    def s0(self):
        return self.singular & self.high_order

    def s0_points(self):
        return self.grid.nodes()[self.s0]

    def gap_report(self, low=0.02):
        """Counts of node frequencies inside and around the forbidden gap."""
        I = self.I_ref[np.isfinite(self.I_ref)]
        hi = 1.0 + self.config.eps_gap
        return {
            "order_one": int(np.sum(I <= 1.0 + low)),
            "in_gap": int(np.sum((I > 1.0 + low) & (I <= hi))),
            "high": int(np.sum(I > hi)),
            "undefined": int(self.I_ref.size - I.size),
        }

    def rows(self):
        pts = self.grid.nodes().reshape(-1, self.grid.m)
        flat = [a.reshape(-1) for a in (self.singular, self.high_order, self.s0,
                                         self.I_ref, self.census)]
        for i in range(pts.shape[0]):
            yield (*pts[i], int(flat[0][i]), int(flat[1][i]), int(flat[2][i]),
                   flat[3][i], int(flat[4][i]))

    def header(self):
        return ([f"x{a + 1}" for a in range(self.grid.m)]
                + ["singular", "high_order", "s0", "I_ref", "faces"])


def face_census(dmap, radius_cells):
    """Number of faces with a positive-height node strictly inside B(node, radius).

    One Euclidean distance transform per face; the count is invariant under
    relabelling faces.
    """
    hgt = dmap.coords[..., -1]
    count = np.zeros(dmap.grid.shape, dtype=np.int64)
    for f in range(dmap.target.k):
        on = (dmap.face == f) & (hgt > 0.0)
        if not on.any():
            continue
        dist = ndimage.distance_transform_edt(~on)
        count += dist < radius_cells
    return count


def classify(dmap, config=None):
    """Flag singular nodes, high-order nodes and their intersection S0.

    A node is singular when its own value is a shared point (vertex or spine,
    up to ``vertex_tol``) and every census ball about it meets at least three
    faces at positive height; no single flat then contains the local image.
    High order means I_phi(node, 4h) > 1 + eps_gap.
    """
    cfg = config or ClassifyConfig()
    hgt = dmap.coords[..., -1]
    scale = float(hgt.max()) if hgt.size else 0.0
    at_shared = hgt <= cfg.vertex_tol * scale
    counts = [face_census(dmap, rc) for rc in cfg.census_radii]
    census = np.minimum.reduce(counts)
    singular = at_shared & (census >= 3) & ~dmap.boundary_mask
    if scale > 0:
        I = node_frequencies(dmap, cfg.freq_radius)
    else:
        I = np.full(dmap.grid.shape, np.nan)
    with np.errstate(invalid="ignore"):
        high = np.isfinite(I) & (I > 1.0 + cfg.eps_gap)
    return PointClassification(dmap.grid, singular, high, I, census, cfg,
                               {"map": dmap.digest()[:16]})


# -- rigid-case oracles ------------------------------------------------------


def _point_value(fixture, x):
    from .target import TargetPoint

    face, coords = fixture.evaluate(np.asarray(x, dtype=float)[None])
    return TargetPoint(int(face[0]), tuple(float(c) for c in coords[0]))


def ray_order_constancy(dmap, fixture, theta=np.pi / 7, base=0.4, r0=0.1,
                        lams=(0.5, 0.75)):
    """Classical order at base*w and lam*base*w (radius scaled by lam).

    For a map homogeneous about 0 the two balls are rescalings of one
    another, so the orders agree. Returns the largest difference.
    """
    w = np.array([np.cos(theta), np.sin(theta)] + [0.0] * (dmap.grid.m - 2))
    z = base * w
    ref = classical_order(dmap, z, r0, Q=_point_value(fixture, z))
    diffs = []
    for lam in lams:
        y = lam * z
        val = classical_order(dmap, y, lam * r0, Q=_point_value(fixture, y))
        diffs.append(abs(val - ref))
    return max(diffs), ref


def translation_defect(dmap, axis=0):
    """Largest change of node values along ``axis`` (0 for exact invariance)."""
    c = np.moveaxis(dmap.coords, axis, 0)
    f = np.moveaxis(dmap.face, axis, 0)
    dc = float(np.max(np.abs(c - c[:1])))
    df = int(np.sum(f != f[:1]))
    return dc if df == 0 else float("inf")


def line_height(dmap, axis=0):
    """Largest height on nodes within h/2 of the coordinate line along ``axis``,
    and that value divided by h^{3/2}."""
    g = dmap.grid
    x = g.nodes()
    other = [a for a in range(g.m) if a != axis]
    near = np.all(np.abs(x[..., other]) < 0.5 * g.h, axis=-1)
    hmax = float(dmap.coords[..., -1][near].max()) if near.any() else 0.0
    return hmax, hmax / g.h ** 1.5


def rigid_oracles(dmap, fixture):
    """Checks that hold exactly (up to discretisation) on homogeneous fixtures."""
    out = {}
    if fixture.name in ("spider_homogeneous", "linear") and dmap.grid.m == 2:
        diff, ref = ray_order_constancy(dmap, fixture)
        out["ray_order_diff"] = diff
        out["ray_order_ref"] = ref
    if fixture.name == "product_tripod":
        out["translation_defect"] = translation_defect(dmap, axis=0)
        hmax, ratio = line_height(dmap, axis=0)
        out["line_height"] = hmax
        out["line_height_over_h15"] = ratio
    return out

"""The numba kernels and their numpy twins must agree bit for bit."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npcmaps import _accel, kernels
from npcmaps.grid import DiscreteMap, Grid, energy
from npcmaps.minimizer import SolveConfig, _sweep_plan, solve
from npcmaps.grid import boundary_from_fixture, spider_homogeneous_fixture
from npcmaps.target import TargetComplex

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def both(fn):
    out = {}
    for be in ("numba", "numpy"):
        prev = _accel.set_backend(be)
        try:
            out[be] = fn()
        finally:
            _accel.set_backend(prev)
    return out["numba"], out["numpy"]


def random_map(seed, m, n, kind, k):
    rng = np.random.default_rng(seed)
    X = TargetComplex(kind, k)
    g = Grid(m, n)
    face = rng.integers(0, k, size=g.shape)
    coords = rng.uniform(0, 1, size=g.shape + (X.coord_dim,))
    if X.coord_dim == 2:
        coords[..., 0] -= 0.5
    zero = rng.random(g.shape) < 0.2
    coords[..., -1][zero] = 0.0
    face[zero] = 0
    return DiscreteMap(g, X, face, coords)


maps = st.builds(random_map, st.integers(0, 10_000), st.sampled_from([2, 3]),
                 st.integers(8, 12), st.sampled_from(["spider", "book"]), st.integers(3, 5))


@settings(max_examples=25, deadline=None)
@given(maps, st.sampled_from(["lexicographic", "red_black"]))
def test_sweep_backends_agree(dmap, order):
    plan, colors = _sweep_plan(dmap.grid, order)

    def run():
        f = dmap.face.reshape(-1).copy()
        c = dmap.coords.reshape(-1, dmap.target.coord_dim).copy()
        step = kernels.sweep(f, c, plan, dmap.grid.strides, dmap.target.k, colors)
        return f, c, step

    (f1, c1, s1), (f2, c2, s2) = both(run)
    assert np.array_equal(f1, f2)
    assert np.array_equal(c1, c2)
    assert s1 == s2


@settings(max_examples=25, deadline=None)
@given(maps)
def test_energy_backends_agree(dmap):
    a, b = both(lambda: energy(dmap))
    assert a == pytest.approx(b, rel=1e-13)


@settings(max_examples=25, deadline=None)
@given(maps, st.integers(0, 1000))
def test_interpolation_backends_agree(dmap, seed):
    pts = np.random.default_rng(seed).uniform(-1, 1, size=(300, dmap.grid.m))
    vals = np.random.default_rng(seed + 1).normal(size=(dmap.grid.size, 3))
    g = dmap.grid
    a, b = both(lambda: kernels.interpolate(vals, g.n + 1, g.m, -g.L, g.h, pts))
    assert np.array_equal(a, b)


def test_interpolation_reproduces_nodes_and_linears():
    g = Grid(2, 10)
    x = g.nodes().reshape(-1, 2)
    vals = np.column_stack([1 + 2 * x[:, 0] - 3 * x[:, 1], x[:, 0] * x[:, 1]])
    pts = np.random.default_rng(3).uniform(-1, 1, size=(100, 2))
    for be in ("numba", "numpy"):
        prev = _accel.set_backend(be)
        try:
            out = kernels.interpolate(vals, 11, 2, -1.0, g.h, pts)
            assert np.allclose(out[:, 0], 1 + 2 * pts[:, 0] - 3 * pts[:, 1], atol=1e-13)
            at_nodes = kernels.interpolate(vals, 11, 2, -1.0, g.h, x)
            assert np.allclose(at_nodes, vals, atol=1e-13)
        finally:
            _accel.set_backend(prev)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_jet_backends_agree(seed, m):
    rng = np.random.default_rng(seed)
    n, c = 6, 2
    N = (n + 1) ** m
    U = rng.normal(size=(N, c))
    DU = rng.normal(size=(N, c, m))
    D2U = rng.normal(size=(N, c, m, m))
    D2U = 0.5 * (D2U + np.swapaxes(D2U, -1, -2))
    pts = rng.uniform(-1, 1, size=(200, m))
    a, b = both(lambda: kernels.jet_interpolate(U, DU, D2U, n + 1, m, -1.0, 2.0 / n, pts))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_jets_reproduce_quadratics():
    # u = x^2 - y^2 has exact jets, so q, p and G come out exact everywhere
    g = Grid(2, 8)
    x = g.nodes().reshape(-1, 2)
    U = (x[:, 0] ** 2 - x[:, 1] ** 2)[:, None]
    DU = np.stack([2 * x[:, 0], -2 * x[:, 1]], axis=-1)[:, None, :]
    D2U = np.broadcast_to(np.diag([2.0, -2.0]), (x.shape[0], 1, 2, 2)).copy()
    pts = np.random.default_rng(5).uniform(-1, 1, size=(100, 2))
    u = pts[:, 0] ** 2 - pts[:, 1] ** 2
    grad = np.column_stack([2 * pts[:, 0], -2 * pts[:, 1]])
    for be in ("numba", "numpy"):
        prev = _accel.set_backend(be)
        try:
            out = kernels.jet_interpolate(U, DU, D2U, 9, 2, -1.0, g.h, pts)
        finally:
            _accel.set_backend(prev)
        assert np.allclose(out[:, 0], u * u, atol=1e-12)
        assert np.allclose(out[:, 1:3], u[:, None] * grad, atol=1e-12)
        assert np.allclose(out[:, -1], np.sum(grad ** 2, axis=1), atol=1e-12)


def test_stencil_backends_agree():
    rng = np.random.default_rng(7)
    vals = rng.normal(size=(400, 3))
    ids = np.arange(30, 370)
    deltas = np.array([-21, -1, 0, 1, 21])
    w = rng.normal(size=(5, 3))
    a, b = both(lambda: kernels.stencil_apply(vals, ids, deltas, w))
    assert np.array_equal(a, b)


def test_full_solve_backends_agree():
    g = Grid(2, 24)
    fx = spider_homogeneous_fixture(3)
    bd = boundary_from_fixture(fx, g)
    a, b = both(lambda: solve(bd, fx.target, g, SolveConfig(tol=1e-12)))
    assert np.array_equal(a.coords, b.coords) and np.array_equal(a.face, b.face)
    assert a.meta["sweeps"] == b.meta["sweeps"]


def test_env_flag_selects_numpy(monkeypatch):
    import importlib

    monkeypatch.setenv(_accel.ENV_FLAG, "1")
    mod = importlib.reload(_accel)
    try:
        assert mod.backend() == "numpy"
    finally:
        monkeypatch.delenv(_accel.ENV_FLAG)
        importlib.reload(_accel)
    assert _accel.backend() == "numba"

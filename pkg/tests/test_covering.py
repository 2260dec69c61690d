import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npcmaps.covering import (BAD, TERMINAL, CoverParams, MapOracle, OracleError,
                              SyntheticOracle, frequency_drop_decomposition,
                              minkowski_estimate, packing_count, pinching_alternative,
                              refine_cover, tube_volume)

from conftest import sampled


def random_cloud(seed):
    """A cloud in B_1 (uniform, near a line, or clustered) and a step oracle."""
    rng = np.random.default_rng(seed)
    m = int(rng.choice([2, 3]))
    n = int(rng.integers(5, 80))
    kind = rng.integers(0, 3)
    if kind == 0:
        pts = rng.uniform(-0.6, 0.6, (n, m))
    elif kind == 1:
        d = rng.normal(size=m)
        d /= np.linalg.norm(d)
        pts = np.outer(rng.uniform(-0.8, 0.8, n), d) + rng.normal(size=m) * 0.02
    else:
        c = rng.uniform(-0.5, 0.5, (3, m))
        pts = c[rng.integers(0, 3, n)] + rng.normal(size=(n, m)) * 0.05
    pts = pts[np.linalg.norm(pts, axis=1) <= 0.95]
    anchors = rng.uniform(-0.5, 0.5, (2, m))
    return pts, SyntheticOracle.near_set(anchors, 2.0, 1.0, rng.uniform(0.1, 0.5))


def covered(D, balls):
    C = np.array([b.center for b in balls])
    R = np.array([b.radius for b in balls])
    d = np.linalg.norm(D[:, None, :] - C[None, :, :], axis=2)
    return np.any(d <= R[None, :] * (1 + 1e-12), axis=1)


def cores_disjoint(balls):
    for i, a in enumerate(balls):
        for b in balls[i + 1:]:
            if np.linalg.norm(a.center - b.center) < (a.radius + b.radius) / 5.0 - 1e-12:
                return False
    return True


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 100_000))
def test_cover_invariants_on_random_clouds(seed):
    D, oracle = random_cloud(seed)
    if len(D) == 0:
        return
    params = CoverParams(rho=1 / 16, delta=0.2, sigma=0.01, tau=1.0, U=2.0)
    cover = refine_cover(D, oracle, params)
    assert np.all(covered(D, cover.balls))
    for gen in cover.generations:
        assert cores_disjoint(gen)
    # radii of generation g are (10 rho)^j, j <= g
    for g, gen in enumerate(cover.generations):
        for b in gen:
            j = round(math.log(b.radius) / math.log(10 * params.rho))
            assert 0 <= j <= g and b.radius == pytest.approx((10 * params.rho) ** j)
    dec = frequency_drop_decomposition(D, oracle, 0.01, 1.0, 2.0)
    assert dec.meta["unassigned"] == 0
    owner = dec.assignment(len(D))
    assert np.all(owner >= 0)
    sizes = sum(p.indices.size for p in dec.pieces)
    assert sizes == len(D)
    for bad_sum, passed in dec.packing:
        assert passed <= 0.5 * bad_sum + 1e-15
    for p in dec.pieces:
        assert p.dropped or p.s_i == 0.01
        if p.dropped:
            assert np.all(oracle(D[p.indices], p.s_i) <= 2.0 - 0.2)
    # identical inputs give identical covers
    again = refine_cover(D, oracle, params)
    assert list(again.rows()) == list(cover.rows())


def test_single_point_is_one_terminal_ball():
    D = np.zeros((1, 2))
    cover = refine_cover(D, SyntheticOracle.constant(1.5), CoverParams(sigma=0.01, tau=0.4, U=1.5))
    assert len(cover.balls) == 1 and cover.balls[0].kind == TERMINAL
    assert cover.packing_sum() == 1.0
    dec = frequency_drop_decomposition(D, SyntheticOracle.constant(1.5), 0.01, 0.4, 1.5)
    assert len(dec.pieces) == 1 and dec.pieces[0].s_i == 0.01 and not dec.pieces[0].dropped


def test_no_high_points_leaves_the_initial_ball():
    rng = np.random.default_rng(2)
    D = rng.uniform(-0.5, 0.5, (30, 3))
    params = CoverParams(sigma=0.01, tau=1.0, U=2.0, delta=0.2)
    cover = refine_cover(D, SyntheticOracle.constant(2.0 - 0.4), params)
    assert len(cover.generations) == 1
    assert len(cover.balls) == 1 and cover.balls[0].kind == BAD
    assert cover.balls[0].radius == 1.0


def test_affine_oracle_drops_everything_in_one_generation():
    rng = np.random.default_rng(4)
    D = rng.uniform(-0.4, 0.4, (40, 3))
    # I(y, t) = 1 + t, U = I(y, r) at r = 1
    dec = frequency_drop_decomposition(D, SyntheticOracle.affine(1.0, 1.0), 0.005, 1.0, 2.0)
    assert dec.meta["unassigned"] == 0
    assert all(p.dropped for p in dec.pieces)
    assert all(p.generation == 0 for p in dec.pieces)


def test_line_cloud_is_tracked_by_good_balls():
    x = np.linspace(-0.9, 0.9, 73)
    D = np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])
    params = CoverParams(rho=1 / 16, sigma=0.02, tau=1.0, U=1.5)
    cover = refine_cover(D, SyntheticOracle.constant(1.5), params)
    assert np.all(covered(D, cover.balls))
    # only balls at the segment ends, holding a single point, fail to span
    for b in cover.balls:
        assert b.kind == TERMINAL or (b.npts == 1 and abs(abs(b.center[0]) - 0.9) < 0.1)
    assert cover.tube_violations == 0
    for gen in cover.generations:
        for b in gen:
            assert abs(b.center[1]) < 1e-12 and abs(b.center[2]) < 1e-12
    # sum r over the final balls is comparable to the length, not to its square
    assert cover.packing_sum() <= 10.0 * 1.8


def test_params_validation():
    with pytest.raises(ValueError):
        CoverParams(rho=0.2)
    with pytest.raises(ValueError):
        CoverParams(sigma=1.0, tau=0.5)
    with pytest.raises(ValueError):
        refine_cover(np.zeros((1, 2)), SyntheticOracle.constant(1.0), CoverParams(U=None))
    with pytest.raises(ValueError):
        refine_cover(np.array([[2.0, 0.0]]), SyntheticOracle.constant(1.0),
                     CoverParams(U=1.0, tau=1.0))
    with pytest.raises(ValueError):
        frequency_drop_decomposition(np.zeros((1, 2)), SyntheticOracle.constant(1.0), 1.0, 0.5, 1.0)


def test_map_oracle_resolution_policy():
    _, dmap = sampled("tripod", 64)
    strict = MapOracle(dmap)
    with pytest.raises(OracleError) as err:
        strict(np.zeros((1, 2)), 0.01)
    assert err.value.radius == 0.01
    clamp = MapOracle(dmap, min_radius="clamp")
    assert clamp(np.zeros((1, 2)), 0.01)[0] == pytest.approx(1.5, abs=0.05)
    with pytest.raises(OracleError):
        clamp(np.array([[0.95, 0.0]]), 0.2)


def test_tripod_singular_node_never_drops():
    _, dmap = sampled("tripod", 128)
    oracle = MapOracle(dmap, min_radius="clamp")
    U = float(oracle(np.zeros((1, 2)), 0.4)[0])
    dec = frequency_drop_decomposition(np.zeros((1, 2)), oracle, 4 * dmap.grid.h, 0.4, U)
    assert len(dec.pieces) == 1 and not dec.pieces[0].dropped


def test_minkowski_point():
    radii = [0.02, 0.05, 0.1, 0.2, 0.3]
    t = minkowski_estimate(np.zeros((1, 2)), radii)
    assert np.all(t.N == 1) and np.all(t.packing == 1)
    assert np.allclose(t.ratio, math.pi, rtol=0.01)


def test_minkowski_segment_in_3d():
    h = 1.0 / 64
    x = np.arange(-0.5, 0.5 + h / 2, h)
    D = np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])
    t = minkowski_estimate(D, [0.2, 0.1, 0.05, 4 * h])
    # tube of a unit segment: pi rho^2 + (4/3) pi rho^3
    exact = math.pi * t.radii ** 2 + 4.0 / 3.0 * math.pi * t.radii ** 3
    assert np.allclose(t.volume, exact, rtol=0.03)
    assert t.ratio[-1] == pytest.approx(math.pi, rel=0.2)
    assert np.all(np.abs(t.N * 2 * t.radii - 1.0) <= 2 * 2 * t.radii + 0.05)


def test_minkowski_patch_negative_control():
    t = np.linspace(-0.5, 0.5, 65)
    D = np.array(np.meshgrid(t, t, indexing="ij")).reshape(2, -1).T
    radii = [0.2, 0.1, 0.05, 0.025]
    table = minkowski_estimate(D, radii)
    ratio = table.ratio[::-1]  # increasing radii
    assert np.all(ratio[:-1] / ratio[1:] > 2.0)


def test_packing_and_tube_basics():
    D = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert packing_count(D, 0.4) == 2 and packing_count(D, 0.6) == 1
    assert tube_volume(D, 0.2) == pytest.approx(2 * math.pi * 0.04, rel=0.01)


def test_pinching_alternative_is_recorded():
    rng = np.random.default_rng(2)
    D = rng.uniform(-0.5, 0.5, (30, 3))
    oracle = SyntheticOracle.constant(1.6)
    cover = refine_cover(D, oracle, CoverParams(sigma=0.01, tau=1.0, U=2.0, delta=0.2))
    alt, margin = pinching_alternative(cover, oracle)
    assert alt == "initial" and math.isnan(margin)
    x = np.linspace(-0.9, 0.9, 73)
    L = np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])
    oracle = SyntheticOracle.constant(1.5)
    cover = refine_cover(L, oracle, CoverParams(rho=1 / 16, sigma=0.02, tau=1.0, U=1.5))
    assert pinching_alternative(cover, oracle) == ("refined", 0.0)

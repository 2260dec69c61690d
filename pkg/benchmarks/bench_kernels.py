"""Time the hot kernels under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--n 128] [--repeat 3]

Each kernel runs once to warm up (JIT compile), then ``repeat`` times; the
best wall time is reported with the speedup and a bit-exactness check
(jet blending agrees to rounding only, so its largest difference is shown).
"""
import argparse
import time

import numpy as np

from npcmaps import _accel, kernels
from npcmaps.functionals import node_frequencies
from npcmaps.grid import DiscreteMap, Grid, energy, spider_homogeneous_fixture
from npcmaps.minimizer import _sweep_plan


def _setup(n):
    grid = Grid(2, n)
    fx = spider_homogeneous_fixture(3)
    return grid, DiscreteMap.from_fixture(fx, grid)


def bench_sweep(grid, dmap, order):
    plan, colors = _sweep_plan(grid, order)
    face = dmap.face.reshape(-1).copy()
    coords = dmap.coords.reshape(-1, 1).copy()
    coords[plan if plan is not None else np.concatenate(colors)] *= 0.5

    def run():
        f, c = face.copy(), coords.copy()
        for _ in range(5):
            kernels.sweep(f, c, plan, grid.strides, 3, colors)
        return c

    return run


def bench_energy(grid, dmap):
    return lambda: energy(dmap)


def bench_interp(grid, dmap):
    vals = np.random.default_rng(1).normal(size=(grid.size, 4))
    pts = np.random.default_rng(0).uniform(-0.9, 0.9, size=(200_000, 2))
    return lambda: kernels.interpolate(vals, grid.n + 1, 2, -grid.L, grid.h, pts)


def bench_jets(grid, dmap):
    f = dmap.fields
    pts = np.random.default_rng(0).uniform(-0.9, 0.9, size=(200_000, 2))
    return lambda: kernels.jet_interpolate(f.U, f.DU, f.D2U, grid.n + 1, 2, -grid.L, grid.h, pts)


def bench_stencil(grid, dmap):
    def run():
        d = dmap.copy()
        return node_frequencies(d, 4)

    return run


def timed(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    grid, dmap = _setup(args.n)
    cases = {
        "sweep_lex x5": bench_sweep(grid, dmap, "lexicographic"),
        "sweep_redblack x5": bench_sweep(grid, dmap, "red_black"),
        "energy": bench_energy(grid, dmap),
        "interpolate 2e5": bench_interp(grid, dmap),
        "jets 2e5": bench_jets(grid, dmap),
        "node_frequencies": bench_stencil(grid, dmap),
    }
    print(f"n={args.n}  numba available: {_accel.HAVE_NUMBA}")
    print(f"{'kernel':20s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}  equal")
    for name, fn in cases.items():
        res = {}
        for be in ("numba", "numpy"):
            if be == "numba" and not _accel.HAVE_NUMBA:
                continue
            prev = _accel.set_backend(be)
            try:
                res[be] = timed(fn, args.repeat)
            finally:
                _accel.set_backend(prev)
        tn = res.get("numba", (np.nan, None))[0]
        tp = res["numpy"][0]
        same = "numba" in res and np.array_equal(np.asarray(res["numba"][1]),
                                                 np.asarray(res["numpy"][1]), equal_nan=True)
        if not same and "numba" in res:
            a, c = np.asarray(res["numba"][1]), np.asarray(res["numpy"][1])
            same = f"max diff {np.nanmax(np.abs(a - c)):.1e}"
        print(f"{name:20s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f}  {same}")


if __name__ == "__main__":
    main()

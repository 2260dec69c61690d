"""Command-line experiment runner.

    npcmaps SUBCOMMAND CONFIG.ini [--output DIR] [--seed S] [--threads N] [--map FILE]

Subcommands: solve, frequency, verify, classify, flatness, reifenberg, cover,
minkowski, all. Every CSV starts with ``# config_hash=<hex>`` and every SVG
carries the hash in a comment. Floats are written with ``repr`` so reruns with
the same config and seed are byte-identical.

Exit status: 0 success, 1 ``verify`` reported FAIL, 2 invalid config,
3 numerical failure (see ``diagnostics.txt``), 4 I/O failure.

CSV files (columns in order):

- ``energy_history.csv``: sweep, energy
- ``frequency.csv``: x1..xm, r, E, H, I, xi, W_ref
- ``verify.csv``: check, value, threshold, status, detail
- ``classify.csv``: x1..xm, singular, high_order, s0, I_ref, faces
- ``flatness.csv``: x1..xm, weight, statistic
- ``reifenberg.csv``: atom, r, ratio
- ``cover.csv``: x1..xm, radius, kind, generation, npts
- ``decomposition.csv``: generation, bad_sum, passed_on
- ``minkowski.csv``: rho, N, N_rho_m2, volume, volume_over_rho2
"""
import argparse
import math
import os
import sys
import traceback

import numpy as np

from . import _accel, svg
from .config import ConfigError, analysis_config, build_fixture, load_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4
SUBCOMMANDS = ("solve", "frequency", "verify", "classify", "flatness", "reifenberg",
               "cover", "minkowski", "all")


class NumericalFailure(RuntimeError):
    pass


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Run:
    """One experiment: config, output directory, and lazily built objects."""

    def __init__(self, cfg, outdir, map_path=None):
        from .grid import Grid
        from .target import TargetComplex

        self.cfg = cfg
        self.out = outdir
        self.hash = cfg.digest()
        self.map_path = map_path
        self.target = TargetComplex(cfg["target"]["kind"], cfg["target"]["k"])
        self.grid = Grid(cfg["grid"]["m"], cfg["grid"]["n"], cfg["grid"]["L"])
        self.fixture = build_fixture(cfg, self.target, self.grid)
        self.rng = np.random.default_rng(cfg.seed)
        self._map = None
        self._cls = None
        self.messages = []

    # -- output helpers ----------------------------------------------------

    def path(self, name):
        return os.path.join(self.out, name)

    def write_csv(self, name, header, rows, notes=()):
        lines = [f"# config_hash={self.hash}"]
        lines += [f"# {n}" for n in notes]
        lines.append(",".join(header))
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        with open(self.path(name), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    def comment(self):
        return f"config_hash={self.hash}"

    def say(self, text):
        self.messages.append(text)
        print(text)

    # -- map and derived objects -------------------------------------------

    @property
    def dmap(self):
        if self._map is None:
            self._map = self._obtain_map()
        return self._map

    def _obtain_map(self):
        from .grid import DiscreteMap, boundary_from_fixture, load_map, save_map
        from .minimizer import SolveConfig, SolveFailure, solve

        if self.map_path:
            try:
                dmap = load_map(self.map_path)
            except (ValueError, KeyError, IndexError) as exc:
                raise OSError(f"cannot read map {self.map_path}: {exc}") from exc
            if dmap.grid != self.grid or dmap.target != self.target:
                raise ConfigError("map file does not match the configured grid and target")
            return dmap
        s = self.cfg["solve"]
        if s["source"] == "fixture":
            dmap = DiscreteMap.from_fixture(self.fixture, self.grid)
            history = []
        else:
            scfg = SolveConfig(s["tol"], s["max_sweeps"], s["sweep_order"], s["step_tol"],
                               1.0 if s["init_exponent"] is None else s["init_exponent"])
            boundary = boundary_from_fixture(self.fixture, self.grid)
            try:
                dmap = solve(boundary, self.target, self.grid, scfg)
            except SolveFailure as exc:
                save_map(self.path("map_unconverged.csv"), exc.map,
                         {"config_hash": self.hash})
                raise NumericalFailure(f"{exc}; last iterate in map_unconverged.csv") from exc
            history = dmap.meta["energy_history"]
        save_map(self.path("map.csv"), dmap, {"config_hash": self.hash,
                                              "fixture": self.fixture.name})
        self.write_csv("energy_history.csv", ["sweep", "energy"], enumerate(history))
        if history:
            svg.line_plot(self.path("energy_history.svg"),
                          [("energy", np.arange(len(history)), np.asarray(history))],
                          "Dirichlet energy", "sweep", "energy", comment=self.comment())
        self.say(f"map: {self.fixture.name} n={self.grid.n} sweeps={max(len(history) - 1, 0)}")
        return dmap

    @property
    def classification(self):
        from .singular import ClassifyConfig, classify

        if self._cls is None:
            self._cls = classify(self.dmap, ClassifyConfig(eps_gap=self.cfg["analysis"]["eps_gap"]))
        return self._cls

    def cloud(self, spec, k=None):
        """Resolve a cloud spec into a WeightedPointCloud."""
        from .gmt import WeightedPointCloud

        m = self.grid.m
        k = self.default_k() if k is None else k
        name, _, arg = spec.partition(":")
        if name == "s0":
            pts = self.classification.s0_points().reshape(-1, m)
            if pts.shape[0] == 0:
                raise NumericalFailure("S0 is empty; nothing to analyse")
            return WeightedPointCloud.ball_measure(pts, np.full(len(pts), 0.25 * self.grid.h), k)
        if name in ("quarter_circle", "segment", "patch", "random"):
            try:
                count = int(arg)
            except ValueError as exc:
                raise ConfigError(f"cloud {spec!r} needs an integer count") from exc
            if count < 2:
                raise ConfigError(f"cloud {spec!r} needs at least 2 atoms")
            pts, rad = synthetic_cloud(name, count, m, self.rng)
            return WeightedPointCloud.ball_measure(pts, np.full(len(pts), rad), k)
        return read_cloud(spec, m, k)

    def default_k(self):
        k = self.cfg["flatness"]["k"]
        return k if k is not None else max(self.grid.m - 2, 1)

    # -- subcommands ---------------------------------------------------------

    def cmd_solve(self):
        _ = self.dmap
        return EXIT_OK

    def cmd_frequency(self):
        from .functionals import frequency_profile

        prof = frequency_profile(self.dmap, analysis_config(self.cfg, self.grid))
        self.write_csv("frequency.csv", prof.header(), prof.rows())
        series = [(f"x={tuple(round(float(v), 4) for v in x)}", prof.radii, prof.I[i])
                  for i, x in enumerate(prof.points)]
        svg.line_plot(self.path("frequency.svg"), series, "smoothed frequency", "r", "I",
                      comment=self.comment())
        self.say(f"frequency: I range [{prof.I.min():.6f}, {prof.I.max():.6f}]")
        return EXIT_OK

    def cmd_verify(self):
        from .functionals import AnalysisConfig, verify_identities

        ac = analysis_config(self.cfg, self.grid)
        pts = self.cfg["analysis"]["identity_points"]
        if pts:
            ac = AnalysisConfig(ac.radii, tuple(pts), ac.Lambda, density=ac.density)
        rep = verify_identities(self.dmap, ac)
        rows = [(n, v, t, st, d.replace(",", ";")) for n, v, t, st, d in rep.rows()]
        self.write_csv("verify.csv", ["check", "value", "threshold", "status", "detail"], rows)
        for c in rep.checks:
            self.say(f"verify {c.name:18s} {c.status:6s} {c.value:.3e}")
        self.say("verify: PASS" if rep.passed else "verify: FAIL")
        return EXIT_OK if rep.passed else EXIT_FAIL

    def cmd_classify(self):
        pc = self.classification
        self.write_csv("classify.csv", pc.header(), pc.rows(),
                       [f"{k}={v}" for k, v in sorted(pc.gap_report().items())])
        pts = pc.s0_points().reshape(-1, self.grid.m)
        L = self.grid.L
        svg.scatter_plot(self.path("classify.svg"), pts, "S0 nodes", comment=self.comment(),
                         lim=(-L, L))
        self.say(f"classify: |S0| = {pts.shape[0]}")
        return EXIT_OK

    def cmd_flatness(self):
        from .gmt import mean_flatness, rectifiability_statistics

        f = self.cfg["flatness"]
        k = self.default_k()
        mu = self.cloud(f["cloud"], k)
        r = f["r"]
        s_min = self._s_min(mu)
        if s_min > r:
            raise ConfigError("[flatness] r is below the smallest resolved scale")
        stats = rectifiability_statistics(mu, k, s_min, r)
        rows = [(*mu.points[i], mu.weights[i], stats[i]) for i in range(len(mu))]
        notes = [f"k={k} s_min={s_min!r} s_max={r!r}"]
        for x0 in f["x0"] or (tuple(mu.points[0]),):
            res = mean_flatness(mu, x0, r, k)
            notes.append("D(" + ",".join(_fmt(v) for v in x0) + f";{r!r})={res.D!r}")
        header = [f"x{a + 1}" for a in range(self.grid.m)] + ["weight", "statistic"]
        self.write_csv("flatness.csv", header, rows, notes)
        svg.scatter_plot(self.path("flatness.svg"), mu.points, f"cloud {f['cloud']}",
                         comment=self.comment())
        self.say(f"flatness: max statistic {stats.max():.3e} over {len(mu)} atoms")
        return EXIT_OK

    def _s_min(self, mu):
        s = self.cfg["reifenberg"]["s_min"]
        if s is not None:
            return s
        return max(4.0 * float(mu.radii.min()), 4.0 * self.grid.h)

    def cmd_reifenberg(self):
        from .gmt import reifenberg_test

        rcfg = self.cfg["reifenberg"]
        mu = self.cloud(rcfg["cloud"])
        rep = reifenberg_test(mu, rcfg["delta0"], s_min=self._s_min(mu))
        self.write_csv("reifenberg.csv", ["atom", "r", "ratio"], rep.per_ball,
                       [f"max_ratio={rep.max_ratio!r}", f"delta0={rep.delta0!r}",
                        f"passed={int(rep.passed)}", f"mass_B1={rep.mass_B1!r}"])
        self.say(f"reifenberg: max ratio {rep.max_ratio:.3e} vs delta0^2 = {rep.delta0 ** 2:.1e}")
        return EXIT_OK

    def _oracle(self):
        from .covering import MapOracle, SyntheticOracle

        c = self.cfg["covering"]
        if c["oracle"] == "affine":
            return SyntheticOracle.affine()
        return MapOracle(self.dmap, min_radius=c["min_radius"])

    def cmd_cover(self):
        from .covering import OracleError, frequency_drop_decomposition, pinching_alternative

        c = self.cfg["covering"]
        m = self.grid.m
        mu = self.cloud(c["cloud"])
        r = c["r"]
        D = mu.points[np.linalg.norm(mu.points, axis=1) <= r]
        if D.shape[0] == 0:
            raise NumericalFailure(f"no cloud atoms inside B_{r:g}(0)")
        freq = self._oracle()
        s = c["s"] if c["s"] is not None else 4.0 * self.grid.h
        try:
            U = c["U"] if c["U"] is not None else float(np.max(freq(D, r)))
            dec = frequency_drop_decomposition(D, freq, s, r, U, c["delta"], c["rho"])
        except OracleError as exc:
            raise NumericalFailure(f"frequency oracle failed at {exc.point}, t={exc.radius}: "
                                   f"{exc}") from exc
        first = dec.covers[0] if dec.covers else None
        balls = first.balls if first else []
        rows = [(*b.center, b.radius, b.kind, b.generation, b.npts) for b in balls]
        packing = first.packing_sum() if first else 0.0
        bound = cover_bound(balls, m, r)
        alt, margin = pinching_alternative(first, freq) if first else ("none", float("nan"))
        header = [f"x{a + 1}" for a in range(m)] + ["radius", "kind", "generation", "npts"]
        self.write_csv("cover.csv", header, rows,
                       [f"U={U!r} delta={c['delta']!r} rho={c['rho']!r} s={s!r} r={r!r}",
                        f"packing_sum={packing!r}", f"packing_bound={bound!r}",
                        f"tube_violations={first.tube_violations if first else 0}",
                        f"alternative={alt} margin={margin!r}"])
        self.write_csv("decomposition.csv", ["generation", "bad_sum", "passed_on"],
                       [(g, a, b) for g, (a, b) in enumerate(dec.packing)],
                       [f"pieces={len(dec.pieces)}", f"unassigned={dec.meta['unassigned']}"])
        svg.scatter_plot(self.path("cover.svg"), D, "frequency-drop cover",
                         comment=self.comment(),
                         circles=[(b.center, b.radius, b.kind) for b in balls])
        self.say(f"cover: {len(balls)} balls, packing sum {packing:.4f} (bound {bound:.4g}), "
                 f"{len(dec.pieces)} pieces")
        if dec.meta["unassigned"]:
            raise NumericalFailure(f"{dec.meta['unassigned']} points left unassigned")
        return EXIT_OK

    def cmd_minkowski(self):
        from .covering import minkowski_estimate

        mk = self.cfg["minkowski"]
        mu = self.cloud(mk["cloud"])
        radii = mk["radii"] or tuple(np.geomspace(0.3, 4 * self.grid.h, 6))
        tab = minkowski_estimate(mu.points, radii, mk["cells"])
        self.write_csv("minkowski.csv", ["rho", "N", "N_rho_m2", "volume", "volume_over_rho2"],
                       tab.rows(), [f"bound={tab.bound!r}"])
        svg.line_plot(self.path("minkowski.svg"),
                      [("N rho^(m-2)", tab.radii, tab.packing),
                       ("|B_rho(D)| / rho^2", tab.radii, tab.ratio)],
                      "Minkowski diagnostics", "rho", "", logx=True, logy=True,
                      comment=self.comment())
        self.say(f"minkowski: N rho^(m-2) max {tab.bound:.4g}")
        return EXIT_OK

    def cmd_all(self):
        status = EXIT_OK
        for name in SUBCOMMANDS[:-1]:
            code = getattr(self, f"cmd_{name}")()
            status = max(status, code)
        return status


def synthetic_cloud(name, count, m, rng):
    """Points and a common ball radius of a quarter of the atom spacing."""
    if name == "quarter_circle":
        th = np.linspace(0.0, 0.5 * np.pi, count)
        pts = np.zeros((count, m))
        pts[:, 0], pts[:, 1] = np.cos(th), np.sin(th)
        spacing = 2.0 * math.sin(0.25 * np.pi / (count - 1))
    elif name == "segment":
        pts = np.zeros((count, m))
        pts[:, 0] = np.linspace(-0.5, 0.5, count)
        spacing = 1.0 / (count - 1)
    elif name == "patch":
        t = np.linspace(-0.5, 0.5, count)
        grid = np.array(np.meshgrid(t, t, indexing="ij")).reshape(2, -1).T
        pts = np.zeros((grid.shape[0], m))
        pts[:, :2] = grid
        spacing = 1.0 / (count - 1)
    else:
        pts = rng.uniform(-0.5, 0.5, size=(count, m))
        d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        d[np.diag_indices(count)] = np.inf
        spacing = float(d.min())
    return pts, 0.25 * spacing


def read_cloud(path, m, k):
    """CSV with columns x1..xm, optionally weight and radius; '#' lines skipped."""
    from .gmt import WeightedPointCloud

    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] not in (m, m + 2):
        raise ConfigError(f"{path}: expected {m} or {m + 2} columns")
    if data.shape[1] == m:
        return WeightedPointCloud.unit(data)
    return WeightedPointCloud(data[:, :m], data[:, m], "ball_measure", data[:, m + 1], k)


def cover_bound(balls, m, tau):
    """Volume bound on sum r^(m-2) when the one-fifth cores are disjoint.

    Cores of radius r/5 inside B_{tau + r_max/5}(0) give sum (r/5)^m <= (tau + r_max/5)^m,
    hence sum r^(m-2) <= 5^m (tau + r_max/5)^m / r_min^2. Infinite when cores overlap.
    """
    if not balls:
        return 0.0
    C = np.array([b.center for b in balls])
    R = np.array([b.radius for b in balls])
    d = np.linalg.norm(C[:, None] - C[None], axis=2)
    core = R / 5.0
    np.fill_diagonal(d, np.inf)
    if np.any(d < (core[:, None] + core[None]) * (1 - 1e-12)):
        return float("inf")
    return float(5.0 ** m * (tau + R.max() / 5.0) ** m / R.min() ** 2)


def build_parser():
    p = argparse.ArgumentParser(prog="npcmaps", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("config", help="INI experiment file")
    p.add_argument("--output", help="output directory (overrides [output] dir)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized clouds")
    p.add_argument("--threads", type=int, default=0, help="numba worker threads")
    p.add_argument("--map", help="reuse a saved map instead of solving")
    return p


def _diagnostics(outdir, exc):
    try:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "diagnostics.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n\n")
            fh.write("".join(traceback.format_exception(type(exc), exc, exc.__traceback__)))
    except OSError:
        pass


def main(argv=None):
    from .covering import OracleError
    from .functionals import DegenerateMapError, DomainError

    args = build_parser().parse_args(argv)
    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    outdir = args.output or cfg["output"]["dir"]
    _accel.set_threads(args.threads)
    try:
        os.makedirs(outdir, exist_ok=True)
        run = Run(cfg, outdir, args.map)
        return getattr(run, f"cmd_{args.command}")()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, DegenerateMapError, DomainError, OracleError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        _diagnostics(outdir, exc)
        print(f"numerical failure: {exc} (see {os.path.join(outdir, 'diagnostics.txt')})",
              file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Experiment configuration: INI sections parsed into typed, validated settings.

Example::

    [target]
    kind = spider
    k = 3

    [grid]
    m = 2
    n = 128

    [boundary]
    fixture = spider_homogeneous

    [analysis]
    radii = 0.1:0.4:21
    points = 0,0; 0.1,0.05

Lists of numbers are comma separated; lists of points are separated by
semicolons; ``a:b:n`` expands to n evenly spaced values.
"""
import configparser
import hashlib
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    pass


SCHEMA = {
    "target": {"kind": str, "k": int},
    "grid": {"m": int, "n": int, "L": float},
    "boundary": {"fixture": str, "epsilon": float, "slope": float, "axis": int,
                 "face": int, "coords": "floats"},
    "solve": {"source": str, "tol": float, "max_sweeps": int, "sweep_order": str,
              "step_tol": float, "init_exponent": float},
    "analysis": {"radii": "floats", "points": "points", "Lambda": float, "density": float,
                 "eps_gap": float, "identity_points": "points"},
    "covering": {"rho": float, "delta": float, "s": float, "r": float, "U": float,
                 "oracle": str, "min_radius": str, "cloud": str},
    "flatness": {"cloud": str, "k": int, "x0": "points", "r": float},
    "reifenberg": {"cloud": str, "delta0": float, "s_min": float},
    "minkowski": {"cloud": str, "radii": "floats", "cells": int},
    "output": {"dir": str},
}

DEFAULTS = {
    "target": {"kind": "spider", "k": 3},
    "grid": {"m": 2, "n": 128, "L": 1.0},
    "boundary": {"fixture": "spider_homogeneous", "epsilon": 0.25, "slope": 1.0, "axis": 0,
                 "face": 0, "coords": None},
    "solve": {"source": "solve", "tol": 1e-10, "max_sweeps": None,
              "sweep_order": "lexicographic", "step_tol": None, "init_exponent": None},
    "analysis": {"radii": None, "points": None, "Lambda": 10.0, "density": None,
                 "eps_gap": 0.1, "identity_points": None},
    "covering": {"rho": 1.0 / 16.0, "delta": 0.2, "s": None, "r": 0.4, "U": None,
                 "oracle": "map", "min_radius": "clamp", "cloud": "s0"},
    "flatness": {"cloud": "s0", "k": None, "x0": None, "r": 0.25},
    "reifenberg": {"cloud": "quarter_circle:41", "delta0": 0.01, "s_min": None},
    "minkowski": {"cloud": "s0", "radii": None, "cells": None},
    "output": {"dir": "out"},
}


def _floats(text):
    text = text.strip()
    if ":" in text and "," not in text:
        a, b, n = text.split(":")
        return tuple(float(v) for v in np.linspace(float(a), float(b), int(n)))
    return tuple(float(v) for v in text.split(",") if v.strip())


def _points(text):
    return tuple(_floats(chunk) for chunk in text.split(";") if chunk.strip())


_PARSERS = {"floats": _floats, "points": _points}


@dataclass
class ExperimentConfig:
    sections: dict
    seed: int = 0
    source: str = None
    raw: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    def canonical(self):
        lines = [f"seed={self.seed}"]
        for sec in sorted(self.raw):
            for key in sorted(self.raw[sec]):
                lines.append(f"{sec}.{key}={self.raw[sec][key]}")
        return "\n".join(lines)

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def parse_config(text, seed=0, source=None):
    """Parse INI text; unknown sections or keys raise :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    sections = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    raw = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        raw[sec] = {}
        for key, val in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            kind = SCHEMA[sec][key]
            try:
                parsed = _PARSERS[kind](val) if isinstance(kind, str) else kind(val)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key} = {val!r}: {exc}") from exc
            sections[sec][key] = parsed
            raw[sec][key] = val.strip()
    cfg = ExperimentConfig(sections, seed, source, raw)
    validate(cfg)
    return cfg


def load_config(path, seed=0):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, seed, str(path))


def validate(cfg):
    """Check module preconditions before any work is done."""
    from .covering import CoverParams
    from .functionals import AnalysisConfig
    from .grid import Grid
    from .minimizer import SolveConfig
    from .target import TargetComplex

    try:
        target = TargetComplex(cfg["target"]["kind"], cfg["target"]["k"])
        grid = Grid(cfg["grid"]["m"], cfg["grid"]["n"], cfg["grid"]["L"])
        s = cfg["solve"]
        SolveConfig(s["tol"], s["max_sweeps"], s["sweep_order"], s["step_tol"])
        if s["source"] not in ("solve", "fixture"):
            raise ValueError("[solve] source must be 'solve' or 'fixture'")
        build_fixture(cfg, target, grid)
        analysis_config(cfg, grid).validate(grid)
        c = cfg["covering"]
        CoverParams(rho=c["rho"], delta=c["delta"], sigma=0.5 * c["r"], tau=c["r"], U=1.0)
        if c["oracle"] not in ("map", "affine"):
            raise ValueError("[covering] oracle must be 'map' or 'affine'")
        if c["min_radius"] not in ("raise", "clamp"):
            raise ValueError("[covering] min_radius must be 'raise' or 'clamp'")
        if not cfg["analysis"]["eps_gap"] > 0:
            raise ValueError("[analysis] eps_gap must be positive")
        k = cfg["flatness"]["k"]
        if k is not None and not 0 <= k < grid.m:
            raise ValueError("[flatness] k out of range")
    except (ValueError, IndexError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def build_fixture(cfg, target, grid):
    from . import grid as gridmod

    b = cfg["boundary"]
    name = b["fixture"]
    if name == "spider_homogeneous":
        if target.kind != "spider" or grid.m != 2:
            raise ValueError("spider_homogeneous needs a spider target and m = 2")
        return gridmod.spider_homogeneous_fixture(target.k)
    if name == "perturbed_tripod":
        if target.kind != "spider" or target.k != 3 or grid.m != 2:
            raise ValueError("perturbed_tripod needs Spider(3) and m = 2")
        return gridmod.perturbed_tripod_fixture(b["epsilon"])
    if name == "product_tripod":
        if target.kind != "book" or target.k != 3 or grid.m != 3:
            raise ValueError("product_tripod needs Book(3) and m = 3")
        return gridmod.product_tripod_fixture()
    if name == "linear":
        if not 0 <= b["axis"] < grid.m:
            raise ValueError("[boundary] axis out of range")
        return gridmod.linear_fixture(target, grid.m, b["slope"], b["axis"])
    if name == "constant":
        coords = b["coords"] or (0.0,) * target.coord_dim
        return gridmod.constant_fixture(target, target.point(b["face"], *coords), grid.m)
    raise ValueError(f"unknown fixture {name!r}")


def analysis_config(cfg, grid):
    from .functionals import AnalysisConfig

    a = cfg["analysis"]
    radii = a["radii"] or tuple(np.linspace(max(0.1 * grid.L, 4 * grid.h), 0.4 * grid.L, 21))
    points = a["points"] or ((0.0,) * grid.m,)
    return AnalysisConfig(radii=tuple(radii), points=tuple(points), Lambda=a["Lambda"],
                          density=a["density"])

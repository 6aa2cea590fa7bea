"""INI-style experiment configuration: parsing, canonical serialization, hashing.

See docs/config.md for the schema.  Coordinates may be given as "x, y, z",
as ``vmin`` (the global minimizer of V), as ``well:k`` (the center of the
k-th well of V, counted from 1) or as ``wellmin:k`` (the local minimizer of V
reached from that center).
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .discretization import Grid3, RadialGrid
from .errors import ConfigError
from .model import (Ball, Box, NonlinearitySpec, PenalizationSpec, PotentialSpec, ProblemConfig,
                    SolverSettings, Well, WholeSpace, global_minimizer, local_minimizer)

BUNDLED = ("single_well", "two_well")


@dataclass(frozen=True)
class Experiment:
    problem: ProblemConfig
    regions: tuple = ()
    epsilons: tuple = (1.0, 0.5, 0.25, 0.125)
    name: str = ""

    @property
    def multiwell(self) -> bool:
        return len(self.regions) > 1


def region_problems(exp: Experiment) -> list[ProblemConfig]:
    """One problem per region Lambda_j (a single entry for one-region files)."""
    pc = exp.problem
    regions = exp.regions or (pc.penalization.region,)
    return [pc.with_(penalization=PenalizationSpec(pc.penalization.kappa, r)) for r in regions]


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("splab") / "data" / f"{name}.ini"))


def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} numbers, got {text!r}")
    return vals


def _num(sec, key, default=None, kind=float):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {key!r} in [{sec.name}]")
        return default
    try:
        return kind(sec[key])
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} = {sec[key]!r} is not a valid number") from exc


def _wells(cp, prefix: str, resolve) -> tuple[Well, ...]:
    names = sorted((s for s in cp.sections() if s.startswith(prefix + ".well.")),
                   key=lambda s: int(s.rsplit(".", 1)[1]) if s.rsplit(".", 1)[1].isdigit() else 0)
    wells = []
    for s in names:
        sec = cp[s]
        wells.append(Well(resolve(sec.get("center", "0, 0, 0")), _num(sec, "depth"), _num(sec, "width")))
    return tuple(wells)


def _potential(cp, name: str, kind: str, resolve) -> PotentialSpec:
    if name not in cp:
        raise ConfigError(f"missing section [{name}]")
    return PotentialSpec(_num(cp[name], "base"), _wells(cp, name, resolve), kind)


def _region(sec, resolve):
    shape = sec.get("shape", "ball").strip().lower()
    if shape == "ball":
        return Ball(resolve(sec.get("center", "vmin")), _num(sec, "radius"))
    if shape == "box":
        return Box(_floats(sec["lo"], 3), _floats(sec["hi"], 3))
    if shape in ("whole", "wholespace", "none"):
        return WholeSpace()
    raise ConfigError(f"unknown region shape {shape!r}")


def parse_text(text: str, source: str = "<string>") -> Experiment:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from exc
    try:
        return _build(cp)
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid configuration in {source}: {exc}") from exc


def _build(cp) -> Experiment:
    prob = cp["problem"] if "problem" in cp else {}
    name = prob.get("name", "") if prob else ""

    nsec = cp["nonlinearity"] if "nonlinearity" in cp else None
    p = _num(nsec, "p", 5.0) if nsec else 5.0
    amp = _num(nsec, "amplitude", 1.0) if nsec else 1.0
    nonlin = NonlinearitySpec(p, amp)

    V = _potential(cp, "V", "V", lambda t: _coords(t, None))
    xmin = global_minimizer(V)

    def resolve(text):
        return _coords(text, (V, xmin))

    V = _potential(cp, "V", "V", resolve)
    K = _potential(cp, "K", "K", resolve)

    region_secs = [s for s in cp.sections() if s == "lambda" or s.startswith("lambda.")]
    region_secs.sort(key=lambda s: (s != "lambda", s))
    regions = tuple(_region(cp[s], resolve) for s in region_secs) or (WholeSpace(),)

    psec = cp["penalization"] if "penalization" in cp else None
    kappa = _num(psec, "kappa", 2.0) if psec else 2.0

    gsec = cp["grid"] if "grid" in cp else None
    kind = gsec.get("kind", "box").strip().lower() if gsec else "box"
    if kind == "box":
        grid = Grid3(_num(gsec, "L", 6.0) if gsec else 6.0, _num(gsec, "N", 128, int) if gsec else 128)
    elif kind == "radial":
        grid = RadialGrid(_num(gsec, "R_max", 32.0), _num(gsec, "N_r", 32768, int))
    else:
        raise ConfigError(f"unknown grid kind {kind!r}")

    ssec = cp["solver"] if "solver" in cp else None
    d = SolverSettings()
    solver = SolverSettings(
        tol=_num(ssec, "tol", d.tol) if ssec else d.tol,
        max_iter=_num(ssec, "max_iter", d.max_iter, int) if ssec else d.max_iter,
        armijo=_num(ssec, "armijo", d.armijo) if ssec else d.armijo,
        backtrack=_num(ssec, "backtrack", d.backtrack) if ssec else d.backtrack,
        memory=_num(ssec, "memory", d.memory, int) if ssec else d.memory,
        boundary_tol=_num(ssec, "boundary_tol", d.boundary_tol) if ssec else d.boundary_tol,
        boundary_fail=_num(ssec, "boundary_fail", d.boundary_fail) if ssec else d.boundary_fail,
        stall_iter=_num(ssec, "stall_iter", d.stall_iter, int) if ssec else d.stall_iter,
        lattice_hops=_num(ssec, "lattice_hops", d.lattice_hops, int) if ssec else d.lattice_hops,
    )

    eps = _num(prob, "epsilon", 1.0) if prob else 1.0
    wsec = cp["sweep"] if "sweep" in cp else None
    epsilons = _floats(wsec["epsilons"]) if wsec and "epsilons" in wsec else (1.0, 0.5, 0.25, 0.125)

    problem = ProblemConfig(eps, nonlin, V, K, PenalizationSpec(kappa, regions[0]), grid, solver, name)
    return Experiment(problem, regions, tuple(epsilons), name)


def _coords(text: str, ctx) -> tuple[float, float, float]:
    t = text.strip().lower()
    if t == "vmin":
        if ctx is None:
            return (0.0, 0.0, 0.0)
        return tuple(float(c) for c in ctx[1])
    if t.startswith(("well:", "wellmin:")):
        if ctx is None:
            return (0.0, 0.0, 0.0)
        kind, _, num = t.partition(":")
        try:
            k = int(num)
            if k < 1:
                raise IndexError(k)
            center = ctx[0].wells[k - 1].center
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"bad well reference {text!r}") from exc
        if kind == "wellmin":
            return tuple(float(c) for c in local_minimizer(ctx[0], center))
        return center
    return _floats(text, 3)


def load(path) -> Experiment:
    path = Path(path)
    if not path.exists() and str(path) in BUNDLED:
        path = bundled_path(str(path))
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_text(text, str(path))


# serialization ---------------------------------------------------------------

def _f(x: float) -> str:
    return repr(float(x))


def _pt(c) -> str:
    return ", ".join(_f(v) for v in c)


def serialize(exp: Experiment) -> str:
    """Canonical text form: resolved coordinates, fixed key order, repr floats."""
    pc = exp.problem
    out = ["[problem]", f"name = {exp.name}", f"epsilon = {_f(pc.epsilon)}", "",
           "[nonlinearity]", f"p = {_f(pc.nonlinearity.p)}",
           f"amplitude = {_f(pc.nonlinearity.amplitude)}", ""]
    for label, pot in (("V", pc.V), ("K", pc.K)):
        out += [f"[{label}]", f"base = {_f(pot.base)}", ""]
        for i, w in enumerate(pot.wells, 1):
            out += [f"[{label}.well.{i}]", f"center = {_pt(w.center)}", f"depth = {_f(w.depth)}",
                    f"width = {_f(w.width)}", ""]
    regions = exp.regions or (pc.penalization.region,)
    for i, reg in enumerate(regions, 1):
        sec = "lambda" if len(regions) == 1 else f"lambda.{i}"
        if isinstance(reg, Ball):
            out += [f"[{sec}]", "shape = ball", f"center = {_pt(reg.center)}", f"radius = {_f(reg.radius)}", ""]
        elif isinstance(reg, Box):
            out += [f"[{sec}]", "shape = box", f"lo = {_pt(reg.lo)}", f"hi = {_pt(reg.hi)}", ""]
        else:
            out += [f"[{sec}]", "shape = whole", ""]
    out += ["[penalization]", f"kappa = {_f(pc.penalization.kappa)}", ""]
    g = pc.grid
    if isinstance(g, Grid3):
        out += ["[grid]", "kind = box", f"L = {_f(g.L)}", f"N = {g.N}", ""]
    else:
        out += ["[grid]", "kind = radial", f"R_max = {_f(g.R_max)}", f"N_r = {g.N_r}", ""]
    s = pc.solver
    out += ["[solver]", f"tol = {_f(s.tol)}", f"max_iter = {s.max_iter}", f"armijo = {_f(s.armijo)}",
            f"backtrack = {_f(s.backtrack)}", f"memory = {s.memory}",
            f"boundary_tol = {_f(s.boundary_tol)}", f"boundary_fail = {_f(s.boundary_fail)}",
            f"stall_iter = {s.stall_iter}", f"lattice_hops = {s.lattice_hops}", ""]
    out += ["[sweep]", f"epsilons = {', '.join(_f(e) for e in exp.epsilons)}", ""]
    return "\n".join(out)


def config_hash(exp: Experiment) -> str:
    return hashlib.sha256(serialize(exp).encode()).hexdigest()


def with_overrides(exp: Experiment, epsilon=None, grid_n=None, grid_l=None, tol=None) -> Experiment:
    pc = exp.problem
    if epsilon is not None:
        pc = pc.with_(epsilon=float(epsilon))
    if grid_n is not None or grid_l is not None:
        g = pc.grid
        if isinstance(g, Grid3):
            pc = pc.with_(grid=Grid3(float(grid_l) if grid_l is not None else g.L,
                                     int(grid_n) if grid_n is not None else g.N))
        else:
            pc = pc.with_(grid=RadialGrid(float(grid_l) if grid_l is not None else g.R_max,
                                          int(grid_n) if grid_n is not None else g.N_r))
    if tol is not None:
        pc = pc.with_(solver=replace(pc.solver, tol=float(tol)))
    return Experiment(pc, exp.regions, exp.epsilons, exp.name)


def point_str(x) -> str:
    return _pt(np.asarray(x, dtype=float))

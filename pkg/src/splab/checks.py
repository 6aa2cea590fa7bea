"""Oracle suites behind `splab check`.

Each suite returns a list of CheckResult rows; a suite passes when every row
does.  The suites are small enough to run in seconds to a minute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .discretization import Field, Grid3, RadialGrid, inner
from .functional import energy, gradient, nehari_scale, norm_eps
from .model import (Ball, NonlinearitySpec, PenalizationSpec, PotentialSpec, ProblemConfig, Well,
                    WholeSpace, constant_potential)
from .poisson import hls_check, solve_poisson

SUITES = ("poisson", "nehari", "comparison", "hls", "gradient")


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name:<34s} value={self.value:.3e}  tol={self.tolerance:.1e}  {self.detail}"


def format_table(rows) -> str:
    return "\n".join(r.line() for r in rows)


def gaussian_potential(r):
    """Potential of rho = exp(-r^2) for -lap phi = rho in R^3."""
    r = np.asarray(r, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sqrt(np.pi) * erf(r) / (4.0 * r)
    return np.where(r > 1e-12, out, 0.5)


def poisson_suite(L: float = 16.0, N: int = 64, box_tol: float = 1e-3, radial_tol: float = 1e-8):
    rows = []
    grid = Grid3(L, N)
    r = grid.radius()
    sol = solve_poisson(Field(grid, np.exp(-r ** 2)))
    exact = gaussian_potential(r)
    mask = r <= L / 2
    err = float(np.max(np.abs(sol.phi.values[mask] - exact[mask]) / exact[mask]))
    rows.append(CheckResult(f"box Gaussian L={L:g} N={N}", err < box_tol, err, box_tol))

    rg = RadialGrid(32.0, 4096)
    sol = solve_poisson(Field(rg, np.exp(-rg.r ** 2)))
    exact = gaussian_potential(rg.r)
    err = float(np.max(np.abs(sol.phi.values - exact) / exact))
    rows.append(CheckResult("radial Gaussian N_r=4096", err < radial_tol, err, radial_tol))
    return rows


def _bumps(grid: Grid3, rng, n: int, signed: bool = False) -> np.ndarray:
    x, y, z = grid.coords()
    out = np.zeros(grid.shape)
    for _ in range(n):
        c = rng.uniform(-1.0, 1.0, 3)
        w = rng.uniform(0.6, 1.4)
        a = rng.uniform(0.3, 1.5) * (rng.choice([-1.0, 1.0]) if signed else 1.0)
        out += a * np.exp(-((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2) / w ** 2)
    return out


def _test_config(grid, coupled: bool = True, penalized: bool = True) -> ProblemConfig:
    V = PotentialSpec(1.5, (Well((0.0, 0.0, 0.0), 0.5, 0.6),), "V")
    K = PotentialSpec(0.5, (Well((0.0, 0.0, 0.0), 0.5, 0.3),), "K") if coupled else constant_potential(0.0, "K")
    region = Ball((0.0, 0.0, 0.0), 0.4) if penalized else WholeSpace()
    return ProblemConfig(0.25, NonlinearitySpec(5.0, 1.0), V, K, PenalizationSpec(2.0, region), grid)


def gradient_suite(pairs: int = 100, tol: float = 1e-6, seed: int = 0, grid: Grid3 | None = None):
    """Central differences of the energy against Phi'(u) v for random smooth pairs."""
    grid = grid or Grid3(8.0, 32)
    config = _test_config(grid)
    rng = np.random.default_rng(seed)
    worst = 0.0
    fails = 0
    for _ in range(pairs):
        u = Field(grid, _bumps(grid, rng, int(rng.integers(1, 4))))
        v = Field(grid, _bumps(grid, rng, int(rng.integers(1, 4)), signed=True))
        dv = inner(gradient(u, config), v)
        s = 1e-5 * np.sqrt(inner(u, u) / inner(v, v))
        fd = (energy(u + v * s, config).total - energy(u - v * s, config).total) / (2.0 * s)
        err = abs(fd - dv) / max(abs(dv), 1e-12)
        worst = max(worst, err)
        fails += err >= tol
    return [CheckResult(f"gradient vs central difference x{pairs}", fails == 0, worst, tol,
                        f"{fails} failing pairs")]


def nehari_suite(cases: int = 10, tol: float = 1e-10, seed: int = 1, grid: Grid3 | None = None):
    grid = grid or Grid3(8.0, 32)
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0.0
    for k in range(cases):
        p = float(rng.uniform(4.2, 5.8))
        pure = ProblemConfig(1.0, NonlinearitySpec(p, 1.0), constant_potential(1.0, "V"),
                             constant_potential(0.0, "K"), PenalizationSpec(2.0, WholeSpace()), grid)
        u = Field(grid, _bumps(grid, rng, 2))
        t = nehari_scale(u, pure, penalized=False).t
        up = np.maximum(u.values, 0.0)
        closed = (norm_eps(u, pure) ** 2 / float(np.sum(up ** p) * grid.cell_volume)) ** (1.0 / (p - 2.0))
        worst = max(worst, abs(t - closed) / closed)
    rows.append(CheckResult(f"pure power closed form x{cases}", worst < tol, worst, tol))

    config = _test_config(grid)
    worst = 0.0
    for _ in range(cases):
        u = Field(grid, _bumps(grid, rng, 2))
        worst = max(worst, nehari_scale(u, config).residual)
    rows.append(CheckResult(f"coupled Nehari residual x{cases}", worst < tol, worst, tol))
    return rows


def comparison_suite(mu=(1.0, 2.0, 4.0), nu=(0.0, 0.5, 1.0), tol: float = 1e-10, jobs: int = 1,
                     grid: RadialGrid | None = None):
    from .analysis import comparison_table

    table = comparison_table(mu, nu, NonlinearitySpec(5.0, 1.0), grid or RadialGrid(32.0, 8192),
                             tol=tol, jobs=jobs)
    rows = [CheckResult("comparison matrix monotone", table.monotone, float(len(table.violations)),
                        2 * tol, "; ".join(table.violations) or "no violations"),
            CheckResult("strict increase in nu", table.strict_in_nu,
                        float(np.min(np.diff(table.levels, axis=1))), 0.0)]
    return rows, table


def hls_suite(pairs: int = 20, seed: int = 2, grid: Grid3 | None = None):
    grid = grid or Grid3(16.0, 64)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        f = Field(grid, _mixture(grid, rng))
        h = Field(grid, _mixture(grid, rng))
        lhs, bound = hls_check(f, h, 1.2, 1.2)
        worst = max(worst, lhs / bound)
    return [CheckResult(f"HLS ratio x{pairs}", worst <= 1.0, worst, 1.0)]


def _mixture(grid: Grid3, rng) -> np.ndarray:
    x, y, z = grid.coords()
    out = np.zeros(grid.shape)
    for _ in range(int(rng.integers(1, 4))):
        c = rng.uniform(-2.0, 2.0, 3)
        w = rng.uniform(0.7, 1.5)
        out += rng.uniform(0.2, 2.0) * np.exp(-((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2) / w ** 2)
    return out


def run_suite(name: str, jobs: int = 1):
    if name == "poisson":
        return poisson_suite()
    if name == "gradient":
        return gradient_suite()
    if name == "nehari":
        return nehari_suite()
    if name == "hls":
        return hls_suite()
    if name == "comparison":
        rows, table = comparison_suite(jobs=jobs)
        return rows
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")

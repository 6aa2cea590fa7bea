"""Post-processing of computed ground states: maxima, decay, profiles, comparisons."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretization import (Field, Grid3, RadialGrid, dirichlet_values, integrate_values,
                             radial_interp)
from .errors import FlatField, GridMismatch, InsufficientWindow, InvalidOrder

WINDOW = (1e-10, 1e-2)
MIN_SHELLS = 10
R2_TRUST = 0.99
# exponent of the algebraic prefactor r^-beta accepted as a plausible tail
BETA_RANGE = (-0.5, 3.0)


# maxima ----------------------------------------------------------------------

@dataclass
class MaxPoint:
    point: np.ndarray
    value: float
    index: tuple
    multi: bool = False

    def __iter__(self):
        return iter(self.point)


def _quad_design(offsets: np.ndarray) -> np.ndarray:
    x, y, z = offsets.T
    return np.stack([np.ones_like(x), x, y, z, x * x, y * y, z * z, x * y, x * z, y * z], -1)


_OFFS = np.array([(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)], float)
_DESIGN_PINV = np.linalg.pinv(_quad_design(_OFFS))


def _refine(vals: np.ndarray, idx: tuple, N: int) -> np.ndarray:
    """Sub-cell offset (in cells) of the maximum from a quadratic fit of log u."""
    ii = [(np.array(idx) + o.astype(int)) % N for o in _OFFS]
    nb = np.array([vals[tuple(i)] for i in ii])
    data = np.log(nb) if np.all(nb > 0) else nb
    c = _DESIGN_PINV @ data
    g = c[1:4]
    H = np.array([[2 * c[4], c[7], c[8]], [c[7], 2 * c[5], c[9]], [c[8], c[9], 2 * c[6]]])
    try:
        if np.any(np.linalg.eigvalsh(H) >= 0):
            return np.zeros(3)
        d = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return np.zeros(3)
    if np.max(np.abs(d)) > 1.0:
        return np.zeros(3)
    return d


def locate_max(u: Field, epsilon: float = 1.0) -> MaxPoint:
    """Global maximum, refined below the grid spacing.

    Ties between equal grid maxima are broken toward the lexicographically
    smallest index and reported through ``multi``.  Coordinates are scaled by
    ``epsilon`` so that a rescaled-frame field yields physical positions.
    """
    vals = u.values
    vmax = float(vals.max())
    if not vmax > 0:
        raise FlatField("field has no positive maximum")
    flat = int(np.argmax(vals))
    idx = np.unravel_index(flat, vals.shape)
    ties = np.flatnonzero(vals.ravel() >= vmax * (1 - 1e-12))
    multi = ties.size > 1 and not _adjacent(ties, vals.shape)
    g = u.grid
    if isinstance(g, Grid3):
        d = _refine(vals, idx, g.N)
        pt = g.nodes[list(idx)] + d * g.h
        return MaxPoint(epsilon * pt, vmax, tuple(int(i) for i in idx), bool(multi))
    if isinstance(g, RadialGrid):
        u0 = (4.0 * vals[0] - vals[1]) / 3.0
        r = 0.0 if u0 >= vmax else g.r[idx[0]]
        return MaxPoint(np.array([epsilon * r, 0.0, 0.0]), max(vmax, u0), (int(idx[0]),), bool(multi))
    raise GridMismatch(f"unsupported grid {g!r}")


def _adjacent(flat_idx: np.ndarray, shape) -> bool:
    """True when all tied nodes are neighbors of the first (one plateau, not two maxima)."""
    pts = np.array(np.unravel_index(flat_idx, shape)).T
    return bool(np.all(np.abs(pts - pts[0]).max(axis=1) <= 1))


# decay -----------------------------------------------------------------------

@dataclass
class DecayFit:
    rate: float
    prefactor: float
    fit_window: tuple[float, float]
    r2: float
    beta: float = 0.0
    n_shells: int = 0
    trusted: bool = False


def _shells(u: Field, center, epsilon: float):
    g = u.grid
    vals = u.values
    vmax = float(vals.max())
    if isinstance(g, Grid3):
        c = np.asarray(center, dtype=float) / epsilon
        # periodic minimum-image distance
        parts = []
        for ax, x in enumerate(g.coords()):
            d = x - c[ax]
            d = d - 2 * g.L * np.round(d / (2 * g.L))
            parts.append(d * d)
        r = np.sqrt(parts[0] + parts[1] + parts[2])
        lo, hi = WINDOW[0] * vmax, WINDOW[1] * vmax
        mask = (vals >= lo) & (vals <= hi) & (r <= g.L - 2 * g.h)
        if not np.any(mask):
            return np.empty(0), np.empty(0)
        rs, ls = r[mask], np.log(vals[mask])
        bins = np.floor(rs / g.h).astype(int)
        counts = np.bincount(bins)
        keep = counts > 0
        rmean = np.bincount(bins, rs)[keep] / counts[keep]
        lmean = np.bincount(bins, ls)[keep] / counts[keep]
        return rmean, lmean
    if isinstance(g, RadialGrid):
        lo, hi = WINDOW[0] * vmax, WINDOW[1] * vmax
        mask = (vals >= lo) & (vals <= hi)
        r0 = float(np.linalg.norm(center)) / epsilon if center is not None else 0.0
        return g.r[mask] - r0, np.log(vals[mask])
    raise GridMismatch(f"unsupported grid {g!r}")


def decay_fit(u: Field, center=(0.0, 0.0, 0.0), epsilon: float = 1.0,
              algebraic: bool = True) -> DecayFit:
    """Fit log u = const - c r - beta ln r over the tail window.

    The window keeps samples with u in [1e-10, 1e-2] * max u (shell-averaged
    on a box).  The returned rate is c / epsilon, i.e. per unit of physical
    length when u lives in the rescaled frame.  ``algebraic=False`` drops the
    ln r term and fits a straight line.
    """
    r, lg = _shells(u, center, epsilon)
    if r.size < MIN_SHELLS:
        raise InsufficientWindow(f"only {r.size} shells inside the fit window")
    cols = [np.ones_like(r), -r]
    if algebraic:
        cols.append(-np.log(r))
    A = np.stack(cols, -1)
    coef, *_ = np.linalg.lstsq(A, lg, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((lg - pred) ** 2))
    ss_tot = float(np.sum((lg - lg.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    rate = float(coef[1])
    beta = float(coef[2]) if algebraic else 0.0
    trusted = bool(r2 >= R2_TRUST and rate > 0 and BETA_RANGE[0] <= beta <= BETA_RANGE[1])
    return DecayFit(rate=rate / epsilon, prefactor=float(np.exp(coef[0])),
                    fit_window=(float(r.min() * epsilon), float(r.max() * epsilon)),
                    r2=float(r2), beta=beta, n_shells=int(r.size), trusted=trusted)


# profiles --------------------------------------------------------------------

def _reference_on(reference, grid, center) -> np.ndarray:
    if isinstance(reference, Field):
        if not isinstance(reference.grid, RadialGrid):
            raise GridMismatch("reference profile must live on a radial grid")
        prof = lambda r: radial_interp(reference.values, reference.grid, r)  # noqa: E731
    else:
        prof = reference
    if isinstance(grid, Grid3):
        return prof(grid.radius(center))
    return prof(grid.r)


def profile_distance(omega: Field, epsilon: float, x_eps, reference, h1: bool = False) -> float:
    """Relative L2 distance between v(x) = omega_eps(eps x + x_eps) and the reference.

    ``omega`` is the rescaled-frame field (its node y stands for the physical
    point eps y), so v is omega translated by x_eps / eps.  The distance is
    evaluated by translating the smooth radial reference instead of
    interpolating omega, which keeps interpolation error out of the result.
    With ``h1`` the relative H1-seminorm distance is returned instead.
    """
    g = omega.grid
    c = np.zeros(3) if x_eps is None else np.asarray(x_eps, dtype=float) / epsilon
    if isinstance(g, RadialGrid) and np.any(c != 0):
        raise GridMismatch("off-center profiles need a box field")
    ref = _reference_on(reference, g, c)
    diff = omega.values - ref
    if h1:
        num = dirichlet_values(diff, diff, g)
        den = dirichlet_values(ref, ref, g)
    else:
        num = integrate_values(diff * diff, g)
        den = integrate_values(ref * ref, g)
    return float(np.sqrt(num / den))


# comparison table ------------------------------------------------------------

@dataclass
class ComparisonTable:
    mu: list[float]
    nu: list[float]
    levels: np.ndarray
    monotone: bool
    strict_in_nu: bool
    violations: list[str] = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    def format(self) -> str:
        head = "mu\\nu  " + "  ".join(f"{n:>14g}" for n in self.nu)
        rows = [head]
        for i, m in enumerate(self.mu):
            rows.append(f"{m:<6g} " + "  ".join(f"{self.levels[i, j]:14.9f}" for j in range(len(self.nu))))
        return "\n".join(rows)


def _ascending(xs) -> bool:
    return all(b > a for a, b in zip(xs, xs[1:]))


def comparison_table(mu_list, nu_list, nonlinearity, grid: RadialGrid | None = None,
                     tol: float = 1e-8, jobs: int = 1) -> ComparisonTable:
    """Levels c_{mu nu} on a product grid, checked for monotonicity in both indices."""
    from .solver import autonomous_levels

    mu_list, nu_list = [float(m) for m in mu_list], [float(n) for n in nu_list]
    if not (_ascending(mu_list) and _ascending(nu_list)):
        raise InvalidOrder("mu and nu lists must be strictly ascending")
    grid = grid or RadialGrid(32.0, 32768)
    cells = [(m, n) for m in mu_list for n in nu_list]
    results = autonomous_levels(cells, nonlinearity, grid, tol=tol, jobs=jobs)
    levels = np.full((len(mu_list), len(nu_list)), np.nan)
    failures = {}
    for k, (cell, res) in enumerate(zip(cells, results)):
        i, j = divmod(k, len(nu_list))
        if isinstance(res, Exception):
            failures[cell] = str(res)
        else:
            levels[i, j] = res
    violations = []
    slack = 2.0 * tol
    for i in range(len(mu_list)):
        for j in range(len(nu_list)):
            c = levels[i, j]
            if i + 1 < len(mu_list) and not levels[i + 1, j] >= c - slack * abs(c):
                violations.append(f"c({mu_list[i + 1]},{nu_list[j]}) < c({mu_list[i]},{nu_list[j]})")
            if j + 1 < len(nu_list) and not levels[i, j + 1] >= c - slack * abs(c):
                violations.append(f"c({mu_list[i]},{nu_list[j + 1]}) < c({mu_list[i]},{nu_list[j]})")
    strict = bool(np.all(np.diff(levels, axis=1) > 0)) if len(nu_list) > 1 else True
    monotone = not violations and not failures
    return ComparisonTable(mu_list, nu_list, levels, monotone, strict, violations, failures)


# penalization ----------------------------------------------------------------

def penalization_consistency(sol, config) -> tuple[float, bool]:
    """Largest value of u off the rescaled region, and whether it stays <= a.

    When it does, g(eps y, u) = f(u) everywhere and the penalized ground state
    solves the original system.
    """
    from .functional import landscape

    land = landscape(config)
    u = sol.u.values if hasattr(sol, "u") else sol.values
    outside = ~land.chi
    if not np.any(outside):
        return 0.0, True
    m = float(u[outside].max())
    return m, bool(m <= config.a)


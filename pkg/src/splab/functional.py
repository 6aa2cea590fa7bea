"""Energy functionals, gradients and the Nehari projection.

All quantities live in the rescaled frame: for a box grid the node y carries
coefficients V(eps y), K(eps y) and the region indicator chi(eps y).

    Phi(u)  = 1/2 int |grad u|^2 + 1/2 int V u^2 + 1/4 D(u) - int G(eps y, u)
    Phi'(u) = -lap u + V u + K phi_u u - g(eps y, u)

with D(u) = int phi_u K u^2 and -lap phi_u = K u^2.  The unpenalized
functional uses F, f in place of G, g.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .discretization import (Field, Grid3, RadialGrid, dirichlet_values, integrate_values,
                             laplacian_values)
from .errors import GridMismatch, NoRoot
from .model import ProblemConfig
from .poisson import solve_values

T_LO = 1e-8
T_CAP = 2.0 ** 60


@dataclass
class EnergyBreakdown:
    """The four energy terms; ``nonlocal_`` carries a trailing underscore since
    ``nonlocal`` is a Python keyword."""

    dirichlet: float
    potential: float
    nonlocal_: float
    nonlinear: float
    total: float


@dataclass
class NehariScale:
    t: float
    iterations: int
    bracket: tuple[float, float]
    residual: float = 0.0


@dataclass(frozen=True)
class Landscape:
    """Coefficient arrays sampled on the grid nodes (read-only)."""

    V: np.ndarray
    K: np.ndarray
    chi: np.ndarray
    weights: np.ndarray | float
    has_outside: bool
    has_coupling: bool


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@lru_cache(maxsize=16)
def _landscape(V, K, region, epsilon: float, grid) -> Landscape:
    if isinstance(grid, Grid3):
        x, y, z = (epsilon * c for c in grid.coords())
        Vv = np.broadcast_to(V.on_grid(x, y, z), grid.shape)
        Kv = np.broadcast_to(K.on_grid(x, y, z), grid.shape)
        chi = np.broadcast_to(region.contains_grid(x, y, z), grid.shape)
        w = grid.cell_volume
    elif isinstance(grid, RadialGrid):
        if not (V.is_radial and K.is_radial):
            raise GridMismatch("radial grids need radially symmetric V and K")
        r = epsilon * grid.r
        zero = np.zeros_like(r)
        Vv = V.on_grid(r, zero, zero)
        Kv = K.on_grid(r, zero, zero)
        chi = region.contains_grid(r, zero, zero)
        w = grid.weights
    else:
        raise GridMismatch(f"unsupported grid {grid!r}")
    Vv = _readonly(np.array(Vv, dtype=float))
    Kv = _readonly(np.array(Kv, dtype=float))
    chi = _readonly(np.array(chi, dtype=bool))
    if isinstance(w, np.ndarray):
        w = _readonly(w)
    return Landscape(Vv, Kv, chi, w, bool(not chi.all()), bool(np.any(Kv != 0)))


def landscape(config: ProblemConfig, penalized: bool = True) -> Landscape:
    region = config.penalization.region
    if not penalized:
        from .model import WholeSpace
        region = WholeSpace()
    return _landscape(config.V, config.K, region, float(config.epsilon), config.grid)


def _check(u: Field, config: ProblemConfig):
    if u.grid != config.grid:
        raise GridMismatch("field grid differs from the configured grid")


# pointwise nonlinear terms ----------------------------------------------------

def g_values(u: np.ndarray, config: ProblemConfig, land: Landscape) -> np.ndarray:
    nl = config.nonlinearity
    out = nl.f(u)
    if land.has_outside:
        a = config.a
        slope = config.V0 / config.penalization.kappa
        lin = (~land.chi) & (u > a)
        out = np.where(lin, slope * u, out)
    return out


def G_values(u: np.ndarray, config: ProblemConfig, land: Landscape) -> np.ndarray:
    nl = config.nonlinearity
    out = nl.F(u)
    if land.has_outside:
        a = config.a
        slope = config.V0 / config.penalization.kappa
        lin = (~land.chi) & (u > a)
        out = np.where(lin, nl.F(a) + 0.5 * slope * (u * u - a * a), out)
    return out


# energy and gradient ---------------------------------------------------------

def energy(u: Field, config: ProblemConfig, penalized: bool = True) -> EnergyBreakdown:
    _check(u, config)
    land = landscape(config, penalized)
    grid = u.grid
    v = u.values
    dirichlet = 0.5 * dirichlet_values(v, v, grid)
    potential = 0.5 * integrate_values(land.V * v * v, grid)
    rho = land.K * v * v
    if np.any(rho):
        nonlocal_ = 0.25 * integrate_values(solve_values(rho, grid) * rho, grid)
    else:
        nonlocal_ = 0.0
    nonlinear = integrate_values(G_values(v, config, land), grid)
    total = dirichlet + potential + nonlocal_ - nonlinear
    return EnergyBreakdown(dirichlet, potential, nonlocal_, nonlinear, total)


def gradient_values(v: np.ndarray, config: ProblemConfig, land: Landscape,
                    lap: np.ndarray | None = None, phi: np.ndarray | None = None) -> np.ndarray:
    grid = config.grid
    if lap is None:
        lap = laplacian_values(v, grid)
    out = -lap + land.V * v - g_values(v, config, land)
    if land.has_coupling:
        if phi is None:
            phi = solve_values(land.K * v * v, grid)
        out += phi * land.K * v
    return out


def gradient(u: Field, config: ProblemConfig, penalized: bool = True) -> Field:
    """L^2 representative of Phi'(u): -lap u + V u + K phi_u u - g(eps y, u)."""
    _check(u, config)
    land = landscape(config, penalized)
    return Field(u.grid, gradient_values(u.values, config, land))


def residual_norm(u: Field, config: ProblemConfig, penalized: bool = True) -> float:
    g = gradient(u, config, penalized).values
    return float(np.sqrt(integrate_values(g * g, u.grid)))


def norm_eps(u: Field, config: ProblemConfig) -> float:
    """The H^1-type norm ||u||_eps = (int |grad u|^2 + V u^2)^(1/2)."""
    _check(u, config)
    land = landscape(config)
    v = u.values
    return float(np.sqrt(dirichlet_values(v, v, u.grid) + integrate_values(land.V * v * v, u.grid)))


# rays ------------------------------------------------------------------------

class Ray:
    """The map t -> Phi(t v) for a fixed direction v, with O(log n) evaluation.

    Inside the region (or everywhere when unpenalized) the pure power gives
    int f(t v) v = amp t^(p-1) P.  Outside, points switch from the power to the
    linear branch once t v > a; sorting the outside values lets each t be
    evaluated with one binary search.
    """

    def __init__(self, v: np.ndarray, config: ProblemConfig, land: Landscape,
                 lap: np.ndarray | None = None, phi: np.ndarray | None = None):
        grid = config.grid
        self.v = v
        self.config = config
        self.land = land
        nl = config.nonlinearity
        self.p = nl.p
        self.amp = nl.amplitude
        self.lap = laplacian_values(v, grid) if lap is None else lap
        if isinstance(grid, Grid3):
            dirichlet = -integrate_values(v * self.lap, grid)
        else:
            dirichlet = dirichlet_values(v, v, grid)
        self.A = dirichlet + integrate_values(land.V * v * v, grid)
        if land.has_coupling:
            self.phi = solve_values(land.K * v * v, grid) if phi is None else phi
            self.D = integrate_values(self.phi * land.K * v * v, grid)
        else:
            self.phi = None
            self.D = 0.0
        vp = np.maximum(v, 0.0)
        self._vp = vp
        self._sorted = None
        if land.has_outside:
            self.a = config.a
            self.slope = config.V0 / config.penalization.kappa
            w = np.broadcast_to(land.weights, v.shape)
            inside = land.chi
            self.P_in = float(np.dot(w[inside], vp[inside] ** self.p))
            vo = vp[~inside]
            self.vmax_out = float(vo.max()) if vo.size else 0.0
            self.P_out = float(np.dot(w[~inside], vo ** self.p))
        else:
            self.a = np.inf
            self.slope = 0.0
            self.P_in = integrate_values(vp ** self.p, grid)
            self.vmax_out = 0.0
            self.P_out = 0.0
        self.t = None

    def _sort_outside(self):
        w = np.broadcast_to(self.land.weights, self.v.shape)
        outside = ~self.land.chi
        vo, wo = self._vp[outside], w[outside]
        keep = vo > 0
        order = np.argsort(vo[keep])
        vo = vo[keep][order]
        wo = wo[keep][order]
        # prefix sums of w v^p (power branch), suffix sums of w v^2 and w (linear branch)
        cum_p = np.concatenate([[0.0], np.cumsum(wo * vo ** self.p)])
        suf_q = np.concatenate([np.cumsum((wo * vo ** 2)[::-1])[::-1], [0.0]])
        suf_w = np.concatenate([np.cumsum(wo[::-1])[::-1], [0.0]])
        self._sorted = (vo, cum_p, suf_q, suf_w)

    # pieces at scale t: P the power-branch mass, Q and W the linear-branch mass
    def _split(self, t: float):
        if self.vmax_out * t <= self.a:
            return self.P_in + self.P_out, 0.0, 0.0
        if self._sorted is None:
            self._sort_outside()
        vo, cum_p, suf_q, suf_w = self._sorted
        k = int(np.searchsorted(vo, self.a / t, side="right"))
        return self.P_in + cum_p[k], suf_q[k], suf_w[k]

    def psi(self, t: float) -> float:
        """Phi'(t v)(t v) / t^4."""
        P, Q, _ = self._split(t)
        return (self.A - self.slope * Q) / t ** 2 + self.D - self.amp * t ** (self.p - 4.0) * P

    def dpsi(self, t: float) -> float:
        P, Q, _ = self._split(t)
        return -2.0 * (self.A - self.slope * Q) / t ** 3 - self.amp * (self.p - 4.0) * t ** (self.p - 5.0) * P

    def energy(self, t: float) -> float:
        P, Q, W = self._split(t)
        Gint = self.amp * t ** self.p / self.p * P
        if W:
            Fa = self.amp * self.a ** self.p / self.p
            Gint += (Fa - 0.5 * self.slope * self.a ** 2) * W + 0.5 * self.slope * t * t * Q
        return 0.5 * t * t * self.A + 0.25 * t ** 4 * self.D - Gint

    def relative_residual(self, t: float) -> float:
        return abs(self.psi(t)) * t * t / self.A

    def nehari(self, rtol: float = 1e-13) -> NehariScale:
        if self.A <= 0:
            raise NoRoot("direction has zero norm")
        if self.P_in <= 0 and self.P_out <= 0:
            raise NoRoot("direction has no positive part")
        lo = T_LO
        if self.psi(lo) <= 0:
            raise NoRoot("Nehari function is not positive near t = 0")
        hi = 1.0
        while self.psi(hi) > 0:
            lo = hi
            hi *= 2.0
            if hi > T_CAP:
                raise NoRoot("all mass sits on the linear branch; no Nehari point")
        bracket = (lo, hi)
        it = 0
        # bisection in log t until the bracket is tight, then safeguarded Newton
        while hi / lo > 1.0 + 1e-3 and it < 200:
            mid = np.sqrt(lo * hi)
            if self.psi(mid) > 0:
                lo = mid
            else:
                hi = mid
            it += 1
        t = 0.5 * (lo + hi)
        for _ in range(100):
            it += 1
            f = self.psi(t)
            if f > 0:
                lo = t
            else:
                hi = t
            if self.relative_residual(t) < rtol or hi - lo <= 4e-16 * t:
                break
            d = self.dpsi(t)
            tn = t - f / d if d < 0 else 0.5 * (lo + hi)
            if not lo < tn < hi:
                tn = 0.5 * (lo + hi)
            t = tn
        # pick the best endpoint if the kink of the penalized branch stalls Newton
        cands = [t, lo, hi]
        t = min(cands, key=self.relative_residual)
        self.t = t
        return NehariScale(t=float(t), iterations=it, bracket=bracket,
                           residual=float(self.relative_residual(t)))

    def level(self) -> float:
        if self.t is None:
            self.nehari()
        return self.energy(self.t)

    def gradient_at(self, t: float) -> np.ndarray:
        """Phi'(t v) using the cached Laplacian and potential of v."""
        v = self.v
        land = self.land
        out = t * (land.V * v - self.lap) - g_values(t * v, self.config, land)
        if self.phi is not None:
            out += t ** 3 * self.phi * land.K * v
        return out


def nehari_scale(u: Field, config: ProblemConfig, penalized: bool = True) -> NehariScale:
    """Unique t > 0 with Phi'(t u)(t u) = 0."""
    _check(u, config)
    return Ray(u.values, config, landscape(config, penalized)).nehari()


def level_from_nehari(u: Field, config: ProblemConfig, penalized: bool = True) -> float:
    """max over t >= 0 of Phi(t u), attained at the Nehari scale."""
    _check(u, config)
    ray = Ray(u.values, config, landscape(config, penalized))
    ray.nehari()
    return float(ray.level())

"""Ground-state solvers.

The ground state minimizes the Nehari-ray level L(v) = max_t Phi(t v).  At a
Nehari point w = t v the envelope theorem gives grad L(w) = Phi'(w), so the
descent runs on iterates that always sit on the Nehari manifold:

    1. w_k on the manifold, G_k = Phi'(w_k)
    2. d_k = -H_k G_k  (limited-memory BFGS with H_0 = gamma (-lap + V_1)^-1)
    3. trial v = w_k + alpha d_k, projected back by the Nehari scale
    4. backtracking on L until Armijo holds (approximate Wolfe near roundoff)

Iterates are not clipped at zero.  f vanishes for t <= 0, so the functional
is smooth there and the continuum critical point is positive; the discrete
one undershoots by spectral ringing of order 1e-4 of its maximum.  Clipping
instead turns the far field into an active-set problem that L-BFGS cannot
settle when the core is under-resolved.

An independent radial shooting method provides the oracle for the constant
coefficient problem without coupling.
"""

from __future__ import annotations

import logging
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import analysis
from .discretization import (Field, Grid3, RadialGrid, integrate_values, precondition_values,
                             spectral_shift)
from .errors import (BisectionExhausted, BoxTooSmall, DegenerateIterate, InvalidOrder,
                     NoConvergence, NoRoot, OutOfDomain, SplabError, WellCollision)
from .functional import Ray, landscape
from .model import (NonlinearitySpec, PenalizationSpec, ProblemConfig, SolverSettings,
                    WholeSpace, constant_potential)

log = logging.getLogger(__name__)

MAX_BACKTRACKS = 60
# relative slack on the level accepted by the approximate Wolfe test
LEVEL_SLACK = 1e-12


@dataclass
class Solution:
    u: Field
    phi: Field
    level: float
    residual: float
    iterations: int
    boundary_mass: float
    norm: float = 0.0
    converged: bool = True
    flagged: bool = False
    levels: list = field(default_factory=list, repr=False)
    residuals: list = field(default_factory=list, repr=False)
    nehari_t: list = field(default_factory=list, repr=False)
    config: ProblemConfig | None = field(default=None, repr=False)

    @property
    def relative_residual(self) -> float:
        return self.residual / self.norm if self.norm else np.inf


@dataclass
class SweepRecord:
    epsilon: float
    level: float = np.nan
    max_point: tuple = (np.nan, np.nan, np.nan)
    V_at_max: float = np.nan
    decay_rate: float = np.nan
    rate_r2: float = np.nan
    rate_trusted: bool = False
    profile_distance: float = np.nan
    profile_h1: float = np.nan
    max_outside: float = np.nan
    holds_penalization: bool = False
    residual: float = np.nan
    iterations: int = 0
    boundary_mass: float = np.nan
    grid_L: float = np.nan
    grid_N: int = 0
    failed: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed is None


# descent ---------------------------------------------------------------------

def _dot(a, b, grid) -> float:
    return integrate_values(a * b, grid)


def _outer_shell(vals: np.ndarray, grid) -> float:
    if isinstance(grid, Grid3):
        return float(max(np.abs(vals[[0, -1], :, :]).max(), np.abs(vals[:, [0, -1], :]).max(),
                         np.abs(vals[:, :, [0, -1]]).max()))
    n = max(grid.N_r // 100, 2)
    return float(np.abs(vals[-n:]).max())


def _ray(v, config, land):
    ray = Ray(v, config, land)
    ray.nehari()
    return ray


def solve_ground_state(config: ProblemConfig, init: Field | None = None, penalized: bool = True,
                       callback=None) -> Solution:
    """Minimize the Nehari-ray level of the (penalized) functional."""
    config.check_box()
    grid = config.grid
    s: SolverSettings = config.solver
    land = landscape(config, penalized)
    if init is None:
        init = gaussian_init(config)
    if init.grid != grid:
        raise ValueError("initial field lives on a different grid")
    sol = _descend(config, land, np.maximum(init.values, 0.0), callback)
    if isinstance(grid, Grid3):
        for _ in range(s.lattice_hops):
            v = _hop(sol, config, land)
            if v is None:
                break
            nxt = _descend(config, land, v, callback)
            nxt.iterations += sol.iterations
            nxt.levels[:0] = sol.levels
            nxt.residuals[:0] = sol.residuals
            nxt.nehari_t[:0] = sol.nehari_t
            sol = nxt
    return sol


def _hop(sol: Solution, config: ProblemConfig, land):
    """Best one-cell translate of a converged box solution, if it lowers the level.

    The peak of an under-resolved core is pinned to the lattice: every node
    carries a nearby critical point.  Rolling by a whole cell permutes the
    values, so the kinetic part is unchanged and only the coefficient terms
    decide whether the neighbouring node is better.
    """
    u = sol.u.values
    best, best_level = None, sol.level - LEVEL_SLACK * abs(sol.level)
    for axis in range(3):
        for step in (-1, 1):
            v = np.roll(u, step, axis)
            try:
                lv = _ray(v, config, land).level()
            except NoRoot:
                continue
            if lv < best_level:
                best, best_level = v, lv
    return best


def _descend(config: ProblemConfig, land, v0: np.ndarray, callback) -> Solution:
    grid = config.grid
    s: SolverSettings = config.solver
    try:
        ray = _ray(v0, config, land)
    except NoRoot as exc:
        raise DegenerateIterate(f"initial guess is degenerate: {exc}") from exc

    shift = config.shift
    t = ray.t
    w = t * v0
    level = ray.energy(t)
    G = ray.gradient_at(t)
    norm = t * np.sqrt(ray.A)
    res = np.sqrt(_dot(G, G, grid))
    levels, residuals, ts = [level], [res], [t]
    mem: deque = deque(maxlen=s.memory)
    best = (level, w, ray, t, res, norm)
    it = best_it = 0
    converged = stalled = False

    while True:
        if res <= s.tol * norm:
            converged = True
            break
        if it >= s.max_iter:
            break
        it += 1
        d = _two_loop(G, mem, grid, shift)
        slope = _dot(G, d, grid)
        if not slope < 0:
            mem.clear()
            d = -precondition_values(G, grid, shift)
            slope = _dot(G, d, grid)
        step = _line_search(w, d, slope, level, config, land, s)
        if step is None and mem:
            mem.clear()
            d = -precondition_values(G, grid, shift)
            slope = _dot(G, d, grid)
            step = _line_search(w, d, slope, level, config, land, s)
        if step is None:
            break
        nray, nt, nlevel, nG = step
        wn = nt * nray.v
        sk = wn - w
        yk = nG - G
        sy = _dot(sk, yk, grid)
        if sy > 1e-14 * np.sqrt(_dot(sk, sk, grid) * _dot(yk, yk, grid)):
            mem.append((sk, yk, 1.0 / sy))
        w, ray, t, level, G = wn, nray, nt, nlevel, nG
        norm = t * np.sqrt(ray.A)
        res = np.sqrt(_dot(G, G, grid))
        levels.append(level)
        residuals.append(res)
        ts.append(t)
        if res / norm < best[4] / best[5]:
            best = (level, w, ray, t, res, norm)
            best_it = it
        elif it - best_it >= s.stall_iter:
            stalled = True
            break
        if callback is not None:
            callback(it, level, res / norm)

    if not converged:
        level, w, ray, t, res, norm = best
    sol = _package(w, ray, t, level, res, norm, it, converged, config, levels, residuals, ts)
    if not converged:
        why = ("iteration cap reached" if it >= s.max_iter
               else "no progress" if stalled else "line search stalled")
        raise NoConvergence(f"{why}: relative residual {res / norm:.3e} after {it} iterations",
                            best=sol)
    return sol


def _package(w, ray, t, level, res, norm, it, converged, config, levels, residuals, ts) -> Solution:
    grid = config.grid
    phi = t * t * ray.phi if ray.phi is not None else np.zeros(grid.shape)
    umax = float(w.max())
    bmass = _outer_shell(w, grid)
    s = config.solver
    if isinstance(grid, Grid3) and bmass > s.boundary_fail * umax:
        raise BoxTooSmall(f"solution reaches the box boundary: {bmass / umax:.2e} of its maximum")
    flagged = bmass > s.boundary_tol * umax
    return Solution(Field(grid, w), Field(grid, phi), float(level), float(res), it, bmass,
                    norm=float(norm), converged=converged, flagged=bool(flagged),
                    levels=levels, residuals=residuals, nehari_t=ts, config=config)


def _two_loop(G, mem, grid, shift):
    q = G.copy()
    alphas = []
    for sk, yk, rho in reversed(mem):
        a = rho * _dot(sk, q, grid)
        q -= a * yk
        alphas.append(a)
    r = precondition_values(q, grid, shift)
    if mem:
        sk, yk, rho = mem[-1]
        Py = precondition_values(yk, grid, shift)
        r *= (1.0 / rho) / _dot(yk, Py, grid)
    for (sk, yk, rho), a in zip(mem, reversed(alphas)):
        b = rho * _dot(yk, r, grid)
        r += (a - b) * sk
    return -r


def _line_search(w, d, slope, level, config, land, s: SolverSettings):
    grid = config.grid
    alpha = 1.0
    for _ in range(MAX_BACKTRACKS):
        v = w + alpha * d
        try:
            ray = _ray(v, config, land)
        except NoRoot:
            alpha *= s.backtrack
            continue
        t = ray.t
        lv = ray.energy(t)
        if lv <= level + s.armijo * alpha * slope:
            return ray, t, lv, ray.gradient_at(t)
        if lv <= level + LEVEL_SLACK * abs(level):
            # approximate Wolfe: trustworthy once level differences reach roundoff
            G = ray.gradient_at(t)
            dphi = t * _dot(G, d, grid)
            if dphi <= (2.0 * s.armijo - 1.0) * slope:
                return ray, t, lv, G
        alpha *= s.backtrack
    return None


def gaussian_init(config: ProblemConfig, center=None, width: float = 1.0) -> Field:
    """Gaussian bump at the rescaled minimizer of V (or at ``center``, physical)."""
    grid = config.grid
    c = np.asarray(config.vmin if center is None else center, dtype=float) / config.epsilon
    if isinstance(grid, Grid3):
        return Field(grid, np.exp(-(grid.radius(c) / width) ** 2))
    return Field(grid, np.exp(-(grid.r / width) ** 2))


# autonomous problem ----------------------------------------------------------

def autonomous_config(mu: float, nu: float, nonlinearity: NonlinearitySpec, grid,
                      tol: float = 1e-8, max_iter: int = 5000) -> ProblemConfig:
    if not mu > 0:
        raise ValueError("mu must be positive")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    return ProblemConfig(
        epsilon=1.0, nonlinearity=nonlinearity,
        V=constant_potential(mu, "V"), K=constant_potential(nu, "K"),
        penalization=PenalizationSpec(region=WholeSpace()), grid=grid,
        solver=SolverSettings(tol=tol, max_iter=max_iter))


def solve_autonomous(mu: float, nu: float, nonlinearity: NonlinearitySpec,
                     grid: RadialGrid | Grid3 | None = None, tol: float = 1e-8,
                     init: Field | None = None) -> Solution:
    """Ground state of -lap u + mu u + nu phi u = f(u), -lap phi = nu u^2."""
    grid = grid or RadialGrid(32.0, 32768)
    config = autonomous_config(mu, nu, nonlinearity, grid, tol)
    if init is None:
        init = gaussian_init(config, center=(0.0, 0.0, 0.0), width=1.0 / np.sqrt(mu))
    return solve_ground_state(config, init)


def _autonomous_level(args):
    mu, nu, nl, grid, tol = args
    try:
        return solve_autonomous(mu, nu, nl, grid, tol).level
    except SplabError as exc:
        return exc


def autonomous_levels(cells, nonlinearity, grid, tol=1e-8, jobs=1) -> list:
    """Levels c_{mu nu} for a list of (mu, nu) cells; failures come back as exceptions."""
    args = [(m, n, nonlinearity, grid, tol) for m, n in cells]
    return _map(_autonomous_level, args, jobs)


def _map(fn, args, jobs):
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
        return list(pool.map(fn, args))


def default_jobs() -> int:
    return os.cpu_count() or 1


# shooting oracle -------------------------------------------------------------

@dataclass
class ShootingResult:
    u0: float
    level: float
    r: np.ndarray
    u: np.ndarray
    r_trust: float
    bracket_width: float
    mu: float

    def profile(self, r) -> np.ndarray:
        """Separatrix profile; beyond r_trust the linear tail C e^{-sqrt(mu) r}/r."""
        r = np.asarray(r, dtype=float)
        inner = np.interp(r, self.r, self.u)
        k = np.sqrt(self.mu)
        ut = np.interp(self.r_trust, self.r, self.u)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = ut * self.r_trust / np.where(r > 0, r, 1.0) * np.exp(-k * (r - self.r_trust))
        return np.where(r <= self.r_trust, inner, tail)


def _shoot(u0, mu, nl, r_max, dense=False):
    fa = float(nl.f(u0))
    c = (mu * u0 - fa) / 6.0
    r0 = 1e-4
    y0 = [u0 + c * r0 ** 2, 2 * c * r0, 0.0, 0.0, 0.0]
    four_pi = 4.0 * np.pi

    def rhs(r, y):
        u, du = y[0], y[1]
        return [du, mu * u - nl.f(u) - 2.0 * du / r,
                four_pi * r * r * du * du, four_pi * r * r * u * u, four_pi * r * r * nl.F(u)]

    def cross(r, y):
        return y[0]
    cross.terminal = True
    cross.direction = -1

    def turn(r, y):
        return y[1]
    turn.terminal = True
    turn.direction = 1

    sol = solve_ivp(rhs, (r0, r_max), y0, method="DOP853", rtol=1e-12, atol=1e-300, first_step=1e-5,
                    events=(cross, turn), dense_output=dense)
    if sol.t_events[0].size:
        kind = "over"
    elif sol.t_events[1].size or c > 0:
        kind = "under"
    else:
        kind = "none"
    return kind, sol


def shooting_oracle(mu: float, nonlinearity: NonlinearitySpec, r_max: float = 60.0,
                    rel_tol: float = 1e-14) -> ShootingResult:
    """Radial ground state of -lap u + mu u = f(u) by bisection on u(0)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    nl = nonlinearity
    lo = (mu / nl.amplitude) ** (1.0 / (nl.p - 2.0))
    hi = 2.0 * lo
    for _ in range(60):
        kind, _ = _shoot(hi, mu, nl, r_max)
        if kind == "over":
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BisectionExhausted("no overshooting initial value found")
    for _ in range(200):
        if (hi - lo) <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        kind, _ = _shoot(mid, mu, nl, r_max)
        if kind == "over":
            hi = mid
        elif kind == "under":
            lo = mid
        else:
            raise BisectionExhausted(f"trajectory from u0={mid} neither crossed nor turned")
    width = (hi - lo) / hi
    if width > 1e-8:
        raise BisectionExhausted(f"bisection stalled at relative width {width:.2e}")

    _, sl = _shoot(lo, mu, nl, r_max, dense=True)
    _, sh = _shoot(hi, mu, nl, r_max, dense=True)
    r_end = min(sl.t[-1], sh.t[-1])
    rr = np.linspace(1e-4, r_end, 20001)
    ul = sl.sol(rr)
    uh = sh.sol(rr)
    # trust the separatrix until the bracketing trajectories separate
    gap = np.abs(ul[0] - uh[0]) > 1e-6 * np.abs(ul[0])
    j = int(np.argmax(gap)) if gap.any() else rr.size - 1
    j = max(j - 1, 1)
    r_trust = float(rr[j])
    A, B, C = ul[2, j], ul[3, j], ul[4, j]
    level = 0.5 * A + 0.5 * mu * B - C
    r = np.concatenate([[0.0], rr[: j + 1]])
    u = np.concatenate([[0.5 * (lo + hi)], ul[0, : j + 1]])
    return ShootingResult(u0=0.5 * (lo + hi), level=float(level), r=r, u=u, r_trust=r_trust,
                          bracket_width=float(width), mu=float(mu))


# epsilon continuation --------------------------------------------------------

def _check_descending(epsilons):
    eps = [float(e) for e in epsilons]
    if not eps or any(e <= 0 for e in eps):
        raise InvalidOrder("epsilons must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise InvalidOrder("epsilons must be strictly descending")
    return eps


def limit_reference(config: ProblemConfig, grid: RadialGrid | None = None, tol: float = 1e-10):
    """Ground state of the limit problem -lap u + V0 u = f(u) on a radial grid."""
    return solve_autonomous(config.V0, 0.0, config.nonlinearity, grid or RadialGrid(32.0, 32768), tol)


def warm_start(prev: Field, x_prev, eps_prev: float, config: ProblemConfig) -> Field:
    """Translate the previous rescaled profile so its maximum sits at x_prev / eps."""
    grid = config.grid
    shift = np.asarray(x_prev) * (1.0 / config.epsilon - 1.0 / eps_prev)
    vals = prev.values
    if prev.grid != grid:
        vals = embed(prev, grid).values
    return Field(grid, np.maximum(spectral_shift(vals, grid, shift), 0.0))


def embed(u: Field, grid: Grid3) -> Field:
    """Place a box field into a larger box with the same spacing (zero padded)."""
    g = u.grid
    if not isinstance(g, Grid3) or abs(g.h - grid.h) > 1e-12 * g.h or grid.N < g.N:
        raise OutOfDomain("embedding needs a larger box with the same spacing")
    off = (grid.N - g.N) // 2
    out = np.zeros(grid.shape)
    out[off:off + g.N, off:off + g.N, off:off + g.N] = u.values
    return Field(grid, out)


def refined(config: ProblemConfig) -> ProblemConfig:
    """Double the box (N and L together, so the spacing is kept)."""
    g = config.grid
    return config.with_(grid=Grid3(2.0 * g.L, 2 * g.N))


def record_for(sol: Solution, config: ProblemConfig, reference: Field | None) -> SweepRecord:
    eps = config.epsilon
    rec = SweepRecord(epsilon=eps, level=sol.level, residual=sol.residual / sol.norm,
                      iterations=sol.iterations, boundary_mass=sol.boundary_mass)
    if isinstance(config.grid, Grid3):
        rec.grid_L, rec.grid_N = config.grid.L, config.grid.N
    mp = analysis.locate_max(sol.u, eps)
    rec.max_point = tuple(float(c) for c in mp.point)
    rec.V_at_max = float(config.V.at(mp.point))
    try:
        fit = analysis.decay_fit(sol.u, mp.point, eps)
        rec.decay_rate, rec.rate_r2, rec.rate_trusted = fit.rate, fit.r2, fit.trusted
    except SplabError as exc:
        log.warning("decay fit failed at eps=%g: %s", eps, exc)
    if reference is not None:
        rec.profile_distance = analysis.profile_distance(sol.u, eps, mp.point, reference)
        rec.profile_h1 = analysis.profile_distance(sol.u, eps, mp.point, reference, h1=True)
    rec.max_outside, rec.holds_penalization = analysis.penalization_consistency(sol, config)
    return rec


def continuation_sweep(config: ProblemConfig, epsilons, reference: Field | None = None,
                       init: Field | None = None, max_refine: int = 1, callback=None) -> list:
    """Solve along a descending epsilon list, warm-starting each step.

    Returns a list of (Solution or None, SweepRecord).  Failures are recorded
    in the record and the sweep continues from the last good solution.
    """
    eps = _check_descending(epsilons)
    if reference is None:
        reference = limit_reference(config).u
    out = []
    prev = None  # (u, max point, eps)
    for e in eps:
        cfg = config.with_(epsilon=e)
        rec = SweepRecord(epsilon=e)
        sol = None
        for attempt in range(max_refine + 1):
            try:
                if prev is None:
                    start = init if (init is not None and init.grid == cfg.grid) else gaussian_init(cfg)
                else:
                    start = warm_start(prev[0], prev[1], prev[2], cfg)
                sol = solve_ground_state(cfg, start)
                break
            except BoxTooSmall as exc:
                if attempt < max_refine and isinstance(cfg.grid, Grid3):
                    log.info("eps=%g: %s; refining box", e, exc)
                    cfg = refined(cfg)
                    continue
                rec.failed = f"BoxTooSmall: {exc}"
            except NoConvergence as exc:
                rec.failed = f"NoConvergence: {exc}"
            except SplabError as exc:
                rec.failed = f"{type(exc).__name__}: {exc}"
            break
        if sol is not None:
            rec = record_for(sol, cfg, reference)
            prev = (sol.u, np.asarray(rec.max_point), e)
            config = config.with_(grid=cfg.grid)
        if callback is not None:
            callback(rec)
        out.append((sol, rec))
    return out


@dataclass
class MultiwellResult:
    runs: list
    separated: bool
    collision: str | None = None

    def records(self, j: int) -> list:
        return [rec for _, rec in self.runs[j]]


def _well_sweep(args):
    config, epsilons = args
    return continuation_sweep(config, epsilons)


def multiwell_sweep(config: ProblemConfig, regions, epsilons, jobs: int = 1,
                    strict: bool = False) -> MultiwellResult:
    """One penalized continuation sweep per region Lambda_j.

    At the smallest epsilon the maxima must sit in distinct regions; otherwise
    the collision is recorded (or raised as WellCollision with ``strict``).
    """
    eps = _check_descending(epsilons)
    cfgs = [config.with_(penalization=PenalizationSpec(config.penalization.kappa, reg))
            for reg in regions]
    runs = _map(_well_sweep, [(c, eps) for c in cfgs], jobs)
    owners = []
    for reg, run in zip(regions, runs):
        rec = run[-1][1]
        if not rec.ok:
            owners.append(None)
            continue
        hit = [k for k, r2 in enumerate(regions) if r2.contains(np.asarray(rec.max_point))]
        owners.append(hit[0] if hit else None)
    collision = None
    if any(o is None for o in owners):
        collision = "a run failed or its maximum left every region"
    elif len(set(owners)) < len(owners):
        collision = f"runs converged into the same region: owners {owners}"
    elif owners != list(range(len(regions))):
        collision = f"runs converged into other regions: owners {owners}"
    if collision and strict:
        raise WellCollision(collision)
    return MultiwellResult(runs=runs, separated=collision is None, collision=collision)

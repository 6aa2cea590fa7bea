"""Problem definition: nonlinearity, potentials, penalization and hypothesis checks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import optimize

from .discretization import Grid3, RadialGrid
from .errors import BoxTooSmall, NonBracketable


# nonlinearity ----------------------------------------------------------------

@dataclass(frozen=True)
class NonlinearitySpec:
    """Pure power f(t) = amplitude * t^(p-1) for t > 0, zero otherwise.

    Only p > 2 and amplitude > 0 are enforced here so that inadmissible
    exponents can still be loaded and reported by ``validate_hypotheses``.
    """

    p: float = 5.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.p > 2.0:
            raise ValueError("exponent p must exceed 2")
        if not self.amplitude > 0.0:
            raise ValueError("amplitude must be positive")

    def f(self, t):
        t = np.asarray(t, dtype=float)
        tp = np.maximum(t, 0.0)
        return self.amplitude * tp ** (self.p - 1.0)

    def F(self, t):
        t = np.asarray(t, dtype=float)
        tp = np.maximum(t, 0.0)
        return self.amplitude * tp ** self.p / self.p

    def f_prime(self, t):
        t = np.asarray(t, dtype=float)
        tp = np.maximum(t, 0.0)
        return self.amplitude * (self.p - 1.0) * tp ** (self.p - 2.0)


def eval_f(spec: NonlinearitySpec, t):
    out = spec.f(t)
    return float(out) if np.ndim(out) == 0 else out


def eval_F(spec: NonlinearitySpec, t):
    out = spec.F(t)
    return float(out) if np.ndim(out) == 0 else out


def eval_f_prime(spec: NonlinearitySpec, t):
    out = spec.f_prime(t)
    return float(out) if np.ndim(out) == 0 else out


def penalization_threshold(f, V0: float, kappa: float, t_max: float = 1e12) -> float:
    """Unique a > 0 with f(a)/a = V0/kappa.

    ``f`` is a NonlinearitySpec (closed form) or any callable with f(t)/t
    strictly increasing, solved by a bracketed root search.
    """
    if not V0 > 0:
        raise ValueError("V0 must be positive")
    if not kappa > 1:
        raise ValueError("kappa must exceed 1")
    target = V0 / kappa
    if isinstance(f, NonlinearitySpec):
        return (target / f.amplitude) ** (1.0 / (f.p - 2.0))

    def resid(t):
        return float(f(t)) / t - target

    lo, hi = 1e-12, 1.0
    if resid(lo) >= 0:
        raise NonBracketable("f(t)/t already exceeds V0/kappa near zero")
    while resid(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > t_max:
            raise NonBracketable("f(t)/t never reaches V0/kappa on the search interval")
    return optimize.brentq(resid, lo, hi, xtol=1e-300, rtol=1e-12, maxiter=500)


# potentials ------------------------------------------------------------------

@dataclass(frozen=True)
class Well:
    center: tuple[float, float, float]
    depth: float
    width: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValueError("well center must be a point in R^3")
        if not self.width > 0:
            raise ValueError("well width must be positive")


@dataclass(frozen=True)
class PotentialSpec:
    """Smooth potential built from a constant base and Gaussian bumps.

    kind "V":  base - sum_j depth_j exp(-|x - c_j|^2 / w_j^2)
    kind "K":  base * prod_j (1 - (depth_j/base) exp(-|x - c_j|^2 / w_j^2))

    The product form keeps K >= 0 whenever every depth is at most base, and
    K vanishes exactly at a center whose depth equals base.  Negative depths
    give bumps instead of wells.
    """

    base: float
    wells: tuple[Well, ...] = ()
    kind: str = "V"

    def __post_init__(self):
        if self.kind not in ("V", "K"):
            raise ValueError("kind must be 'V' or 'K'")
        object.__setattr__(self, "wells", tuple(self.wells))
        if self.kind == "K" and self.base == 0 and self.wells:
            raise ValueError("a K potential with wells needs a nonzero base")

    def _bumps(self, pts):
        out = []
        for w in self.wells:
            d = pts - np.asarray(w.center)
            out.append(np.exp(-np.sum(d * d, axis=-1) / w.width ** 2))
        return out

    def at(self, pts) -> np.ndarray:
        """Values at points given as an array of shape (..., 3)."""
        pts = np.asarray(pts, dtype=float)
        bumps = self._bumps(pts)
        if self.kind == "V":
            val = np.full(pts.shape[:-1], float(self.base))
            for w, e in zip(self.wells, bumps):
                val = val - w.depth * e
            return val
        val = np.full(pts.shape[:-1], float(self.base))
        for w, e in zip(self.wells, bumps):
            val = val * (1.0 - (w.depth / self.base) * e)
        return val

    def on_grid(self, x, y, z) -> np.ndarray:
        """Values on broadcastable coordinate arrays."""
        shape = np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(z))
        val = np.full(shape, float(self.base))
        for w in self.wells:
            c = w.center
            e = np.exp(-((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2) / w.width ** 2)
            if self.kind == "V":
                val = val - w.depth * e
            else:
                val = val * (1.0 - (w.depth / self.base) * e)
        return val

    def gradient(self, x) -> np.ndarray:
        """Analytic gradient at a single point (kind V only)."""
        if self.kind != "V":
            raise ValueError("gradient is only provided for V potentials")
        x = np.asarray(x, dtype=float)
        g = np.zeros(3)
        for w in self.wells:
            d = x - np.asarray(w.center)
            e = np.exp(-d @ d / w.width ** 2)
            g += w.depth * e * 2.0 * d / w.width ** 2
        return g

    def hessian(self, x) -> np.ndarray:
        if self.kind != "V":
            raise ValueError("hessian is only provided for V potentials")
        x = np.asarray(x, dtype=float)
        H = np.zeros((3, 3))
        for w in self.wells:
            d = x - np.asarray(w.center)
            s = w.width ** 2
            e = np.exp(-d @ d / s)
            H += w.depth * e * (2.0 * np.eye(3) / s - 4.0 * np.outer(d, d) / s ** 2)
        return H

    def radius_of_influence(self) -> float:
        """Distance beyond which all bumps are below 1e-16 of their depth."""
        if not self.wells:
            return 0.0
        return max(np.linalg.norm(w.center) + w.width * np.sqrt(np.log(1e16)) for w in self.wells)

    @property
    def is_radial(self) -> bool:
        return all(np.allclose(w.center, 0.0) for w in self.wells)


def constant_potential(value: float, kind: str = "V") -> PotentialSpec:
    return PotentialSpec(base=float(value), wells=(), kind=kind)


def local_minimizer(V: PotentialSpec, start) -> np.ndarray:
    """Local minimizer of V reached by a trust-region Newton search from ``start``."""
    res = optimize.minimize(lambda x: float(V.at(x)), np.asarray(start, dtype=float), jac=V.gradient,
                            hess=V.hessian, method="trust-exact", options={"gtol": 1e-13})
    x = np.asarray(res.x)
    # trust-exact stops when its radius collapses; finish with plain Newton steps
    for _ in range(5):
        H = V.hessian(x)
        if np.any(np.linalg.eigvalsh(H) <= 0):
            break
        x = x - np.linalg.solve(H, V.gradient(x))
    return x


def global_minimizer(V: PotentialSpec) -> np.ndarray:
    """Global minimizer of a V potential, from local searches at each well."""
    if not V.wells:
        return np.zeros(3)
    cands = [local_minimizer(V, w.center) for w in V.wells]
    return min(cands, key=lambda x: float(V.at(x)))


# regions ---------------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def contains(self, pts) -> np.ndarray:
        d = np.asarray(pts, dtype=float) - np.asarray(self.center)
        return np.sum(d * d, axis=-1) < self.radius ** 2

    def contains_grid(self, x, y, z) -> np.ndarray:
        c = self.center
        return (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2 < self.radius ** 2

    def boundary_samples(self, n: int = 4000) -> np.ndarray:
        # Fibonacci sphere
        k = np.arange(n) + 0.5
        phi = np.arccos(1.0 - 2.0 * k / n)
        theta = np.pi * (1.0 + 5 ** 0.5) * k
        u = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], -1)
        return np.asarray(self.center) + self.radius * u

    def interior_samples(self, n: int = 25) -> np.ndarray:
        t = np.linspace(-self.radius, self.radius, n)
        P = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3) + np.asarray(self.center)
        return P[self.contains(P)]

    def extent(self) -> float:
        """Max |x|_inf over the closure."""
        return float(np.max(np.abs(self.center)) + self.radius)

    def project(self, x) -> np.ndarray:
        d = np.asarray(x) - np.asarray(self.center)
        n = np.linalg.norm(d)
        if n <= self.radius:
            return np.asarray(x, dtype=float)
        return np.asarray(self.center) + d * (self.radius * (1 - 1e-12) / n)


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(c) for c in self.lo))
        object.__setattr__(self, "hi", tuple(float(c) for c in self.hi))
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("box needs lo < hi on every axis")

    def contains(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=float)
        return np.all((p > np.asarray(self.lo)) & (p < np.asarray(self.hi)), axis=-1)

    def contains_grid(self, x, y, z) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return ((x > lo[0]) & (x < hi[0])) & ((y > lo[1]) & (y < hi[1])) & ((z > lo[2]) & (z < hi[2]))

    def boundary_samples(self, n: int = 4000) -> np.ndarray:
        m = max(int(np.sqrt(n / 6)), 4)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        out = []
        for ax in range(3):
            o = [a for a in range(3) if a != ax]
            s = np.linspace(0, 1, m)
            A, B = np.meshgrid(s, s, indexing="ij")
            for side in (lo[ax], hi[ax]):
                P = np.empty((m * m, 3))
                P[:, ax] = side
                P[:, o[0]] = lo[o[0]] + A.ravel() * (hi[o[0]] - lo[o[0]])
                P[:, o[1]] = lo[o[1]] + B.ravel() * (hi[o[1]] - lo[o[1]])
                out.append(P)
        return np.concatenate(out)

    def interior_samples(self, n: int = 25) -> np.ndarray:
        axes = [np.linspace(a, b, n + 2)[1:-1] for a, b in zip(self.lo, self.hi)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)

    def extent(self) -> float:
        return float(max(np.max(np.abs(self.lo)), np.max(np.abs(self.hi))))

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)


@dataclass(frozen=True)
class WholeSpace:
    """Lambda = R^3: disables penalization."""

    def contains(self, pts) -> np.ndarray:
        return np.ones(np.asarray(pts).shape[:-1], dtype=bool)

    def contains_grid(self, x, y, z) -> np.ndarray:
        return np.ones(np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(z)), dtype=bool)

    def boundary_samples(self, n: int = 0) -> np.ndarray:
        return np.empty((0, 3))

    def extent(self) -> float:
        return 0.0


Region = Ball | Box | WholeSpace


@dataclass(frozen=True)
class PenalizationSpec:
    kappa: float = 2.0
    region: Region = field(default_factory=WholeSpace)

    def __post_init__(self):
        if not self.kappa > 1:
            raise ValueError("kappa must exceed 1")

    @property
    def active(self) -> bool:
        return not isinstance(self.region, WholeSpace)


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-8
    max_iter: int = 5000
    armijo: float = 1e-4
    backtrack: float = 0.5
    memory: int = 8
    boundary_tol: float = 1e-8
    boundary_fail: float = 1e-3
    stall_iter: int = 100  # stop when the best residual has not improved for this many steps
    lattice_hops: int = 50  # one-cell translations tried after convergence on a box


# configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class ProblemConfig:
    """Everything needed to pose the rescaled problem at one epsilon.

    The solver works in the rescaled frame y = x / epsilon, so the box grid
    coordinates are y and the coefficients are sampled at epsilon * y.
    """

    epsilon: float
    nonlinearity: NonlinearitySpec
    V: PotentialSpec
    K: PotentialSpec
    penalization: PenalizationSpec = field(default_factory=PenalizationSpec)
    grid: Grid3 | RadialGrid = field(default_factory=lambda: Grid3(6.0, 128))
    solver: SolverSettings = field(default_factory=SolverSettings)
    name: str = ""

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.V.kind != "V" or self.K.kind != "K":
            raise ValueError("V and K potentials have the wrong kind")

    def with_(self, **kw) -> ProblemConfig:
        return replace(self, **kw)

    @cached_property
    def V1(self) -> float:
        """Global infimum of V."""
        return float(self.V.at(global_minimizer(self.V)))

    @cached_property
    def vmin(self) -> np.ndarray:
        """Minimizer of V over the closure of Lambda."""
        region = self.penalization.region
        if isinstance(region, WholeSpace):
            return global_minimizer(self.V)
        return region_minimizer(self.V, region)

    @cached_property
    def V0(self) -> float:
        return float(self.V.at(self.vmin))

    @cached_property
    def a(self) -> float:
        return penalization_threshold(self.nonlinearity, self.V0, self.penalization.kappa)

    @property
    def shift(self) -> float:
        """Preconditioner shift, the positive floor of V."""
        return self.V1

    def check_box(self, margin: float = 2.0) -> None:
        """Raise BoxTooSmall unless Lambda/epsilon fits inside the box with margin."""
        if not isinstance(self.grid, Grid3):
            return
        region = self.penalization.region
        if isinstance(region, WholeSpace):
            return
        need = region.extent() / self.epsilon + margin
        if need > self.grid.L:
            raise BoxTooSmall(
                f"rescaled region needs half-width {need:.4g} but the box has L={self.grid.L:.4g}")


def region_minimizer(V: PotentialSpec, region) -> np.ndarray:
    centers = np.array([w.center for w in V.wells]).reshape(-1, 3)
    centers = centers[region.contains(centers)]
    pts = np.concatenate([region.interior_samples(25), region.boundary_samples(2000), centers])
    vals = V.at(pts)
    x0 = pts[np.argmin(vals)]
    res = optimize.minimize(lambda x: float(V.at(region.project(x))), x0,
                            jac=lambda x: V.gradient(region.project(x)),
                            method="BFGS", options={"gtol": 1e-13})
    x = region.project(res.x)
    return x if V.at(x) <= V.at(x0) else x0


# penalized nonlinearity ------------------------------------------------------

def _fstar(nl: NonlinearitySpec, a: float, slope: float, t):
    t = np.asarray(t, dtype=float)
    return np.where(t <= a, nl.f(t), slope * t)


def _Fstar(nl: NonlinearitySpec, a: float, slope: float, t):
    t = np.asarray(t, dtype=float)
    return np.where(t <= a, nl.F(t), nl.F(a) + 0.5 * slope * (t * t - a * a))


def eval_g(config: ProblemConfig, x, t):
    """g(x, t) = chi(x) f(t) + (1 - chi(x)) f_*(t) in physical coordinates."""
    chi = config.penalization.region.contains(np.asarray(x, dtype=float))
    slope = config.V0 / config.penalization.kappa
    nl = config.nonlinearity
    out = np.where(chi, nl.f(t), _fstar(nl, config.a, slope, t))
    return float(out) if np.ndim(out) == 0 else out


def eval_G(config: ProblemConfig, x, t):
    chi = config.penalization.region.contains(np.asarray(x, dtype=float))
    slope = config.V0 / config.penalization.kappa
    nl = config.nonlinearity
    out = np.where(chi, nl.F(t), _Fstar(nl, config.a, slope, t))
    return float(out) if np.ndim(out) == 0 else out


# hypothesis validation -------------------------------------------------------

@dataclass
class HypothesisResult:
    name: str
    passed: bool
    detail: str = ""
    witness: object = None


@dataclass
class ValidationReport:
    results: list[HypothesisResult]

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list[HypothesisResult]:
        return [r for r in self.results if not r.passed]

    def __getitem__(self, name: str) -> HypothesisResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def format(self) -> str:
        lines = []
        for r in self.results:
            mark = "pass" if r.passed else "FAIL"
            line = f"{r.name:6s} {mark}  {r.detail}"
            if not r.passed and r.witness is not None:
                line += f"  witness={r.witness}"
            lines.append(line)
        return "\n".join(lines)


def _sample_box(config: ProblemConfig, n: int = 33) -> np.ndarray:
    if isinstance(config.grid, Grid3):
        half = config.epsilon * config.grid.L
    else:
        half = config.epsilon * config.grid.R_max
    half = max(half, config.V.radius_of_influence(), config.K.radius_of_influence(), 1.0)
    t = np.linspace(-half, half, n)
    return np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)


def validate_hypotheses(config: ProblemConfig) -> ValidationReport:
    res: list[HypothesisResult] = []
    V, K, nl = config.V, config.K, config.nonlinearity
    region = config.penalization.region
    pts = _sample_box(config)

    # (V1)
    xg = global_minimizer(V)
    vals = V.at(pts)
    i = int(np.argmin(vals))
    V1 = min(float(vals[i]), float(V.at(xg)))
    wit = tuple(np.round(pts[i] if vals[i] <= V.at(xg) else xg, 6))
    res.append(HypothesisResult("(V1)", V1 > 0, f"inf V = {V1:.6g}", None if V1 > 0 else wit))

    # (V2)
    V0 = float(V.at(config.vmin))
    if isinstance(region, WholeSpace):
        res.append(HypothesisResult("(V2)", V0 > 0, "Lambda is all of R^3; only V0 > 0 checked"))
    else:
        bpts = region.boundary_samples(4000)
        bvals = V.at(bpts)
        j = int(np.argmin(bvals))
        ok = 0 < V0 < bvals[j] * (1 - 1e-12)
        res.append(HypothesisResult(
            "(V2)", bool(ok), f"V0 = {V0:.6g}, min on boundary = {bvals[j]:.6g}",
            None if ok else tuple(np.round(bpts[j], 6))))

    # (K)
    kv = K.at(pts)
    k = int(np.argmin(kv))
    kmin_ok = kv[k] >= -1e-14 * max(abs(K.base), 1.0)
    nonzero = float(np.max(np.abs(kv))) > 0
    KM = float(K.at(config.vmin))
    vanish = abs(KM) <= 1e-10 * max(abs(K.base), 1.0)
    ok = bool(kmin_ok and nonzero and vanish)
    detail = f"min K = {kv[k]:.3g}, K on minimizer set = {KM:.3g}"
    if not nonzero:
        detail += ", K vanishes identically"
    wit = None
    if not kmin_ok:
        wit = tuple(np.round(pts[k], 6))
    elif not vanish:
        wit = tuple(np.round(config.vmin, 6))
    res.append(HypothesisResult("(K)", ok, detail, wit))

    # (f1)-(f4) for the pure power
    p = nl.p
    res.append(HypothesisResult("(f1)", p > 4, "f(t) = o(t^3) at 0 needs p > 4",
                                None if p > 4 else ("p", p)))
    res.append(HypothesisResult("(f2)", 4 < p < 6, "growth exponent must satisfy 4 < p < 6",
                                None if 4 < p < 6 else ("p", p)))
    t = np.geomspace(1e-3, 1e3, 200)
    ar = p * nl.F(t) <= nl.f(t) * t * (1 + 1e-12)
    ok3 = bool(p > 4 and np.all(ar))
    res.append(HypothesisResult("(f3)", ok3, f"Ambrosetti-Rabinowitz constant mu = p = {p:g} must exceed 4",
                                None if ok3 else ("p", p)))
    q = nl.f(t) / t ** 3
    ok4 = bool(np.all(np.diff(q) > 0))
    res.append(HypothesisResult("(f4)", ok4, "f(t)/t^3 strictly increasing",
                                None if ok4 else ("t", float(t[int(np.argmin(np.diff(q)))]))))

    # (g3) on a sample of (x, t)
    if V0 > 0:
        xs = np.concatenate([pts[:: max(len(pts) // 400, 1)], region.boundary_samples(200)])
        ts = np.concatenate([-np.geomspace(1e-3, 1e2, 8), np.geomspace(1e-3, 1e2, 60), [config.a]])
        X = np.repeat(xs, len(ts), axis=0)
        T = np.tile(ts, len(xs))
        kappa = config.penalization.kappa
        lhs = V.at(X) * T ** 2 / (4 * kappa) + 0.25 * eval_g(config, X, T) * T - eval_G(config, X, T)
        scale = V.at(X) * T ** 2 + np.abs(eval_G(config, X, T))
        m = int(np.argmin(lhs / scale))
        ok = bool(lhs[m] >= -1e-12 * scale[m])
        res.append(HypothesisResult("(g3)", ok, "V t^2/(4 kappa) + g t/4 - G >= 0 on samples",
                                    None if ok else (tuple(np.round(X[m], 6)), float(T[m]))))
    else:
        res.append(HypothesisResult("(g3)", False, "threshold undefined since V0 <= 0"))
    return ValidationReport(res)

"""Grids, sampled fields, differential operators and quadrature.

Two discretizations are supported:

* ``Grid3``: a periodic cube [-L, L)^3 with N nodes per axis; derivatives
  are spectral and integrals use the (spectrally exact) rectangle rule.
* ``RadialGrid``: nodes r_j = j h, j = 1..N_r, for radially symmetric
  functions on R^3.  The Laplacian is the second-order difference of the
  r-weighted form W = r u with W(0) = W(R_max + h) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy import ndimage
from scipy.linalg import solve_banded

from .errors import GridMismatch, OutOfDomain


@dataclass(frozen=True)
class Grid3:
    L: float
    N: int

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("box half-width must be positive")
        if self.N < 4 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two >= 4")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N)

    @property
    def nodes(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays (N,1,1), (1,N,1), (1,1,N)."""
        x = self.nodes
        return x[:, None, None], x[None, :, None], x[None, None, :]

    def points(self) -> np.ndarray:
        """All node coordinates as an array of shape (N, N, N, 3)."""
        x, y, z = np.broadcast_arrays(*self.coords())
        return np.stack([x, y, z], axis=-1)

    def radius(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        x, y, z = self.coords()
        c = np.asarray(center, dtype=float)
        return np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2)

    def ksquared(self) -> np.ndarray:
        return _ksquared(self.L, self.N)


@dataclass(frozen=True)
class RadialGrid:
    R_max: float
    N_r: int

    def __post_init__(self):
        if self.R_max <= 0 or self.N_r < 8:
            raise ValueError("radial grid needs R_max > 0 and N_r >= 8")

    @property
    def h(self) -> float:
        return self.R_max / self.N_r

    @property
    def shape(self) -> tuple[int]:
        return (self.N_r,)

    @property
    def r(self) -> np.ndarray:
        return self.h * np.arange(1, self.N_r + 1)

    @property
    def weights(self) -> np.ndarray:
        r = self.r
        return 4.0 * np.pi * r * r * self.h


AnyGrid = Grid3 | RadialGrid


class Field:
    """Real samples of a function on a grid.  Values are stored as float64."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: AnyGrid, values):
        v = np.asarray(values, dtype=float)
        if v.shape != grid.shape:
            v = np.broadcast_to(v, grid.shape).copy()
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = v

    def __repr__(self):
        return f"Field({self.grid!r}, max={self.values.max():.6g})"

    def _wrap(self, other):
        if isinstance(other, Field):
            same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._wrap(other))

    def __sub__(self, other):
        return Field(self.grid, self.values - self._wrap(other))

    def __mul__(self, other):
        return Field(self.grid, self.values * self._wrap(other))

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def copy(self) -> Field:
        return Field(self.grid, self.values.copy())


def same_grid(*fields: Field) -> AnyGrid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch(f"grid mismatch: {g} vs {f.grid}")
    return g


def sample(grid: AnyGrid, func) -> Field:
    """Evaluate func at the nodes; func gets (x, y, z) or r."""
    if isinstance(grid, Grid3):
        vals = func(*grid.coords())
    elif isinstance(grid, RadialGrid):
        vals = func(grid.r)
    else:
        raise GridMismatch(f"unsupported grid {grid!r}")
    return Field(grid, vals)


@lru_cache(maxsize=8)
def _ksquared(L: float, N: int) -> np.ndarray:
    h = 2.0 * L / N
    k = 2.0 * np.pi * sfft.fftfreq(N, h)
    kz = 2.0 * np.pi * sfft.rfftfreq(N, h)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + kz[None, None, :] ** 2
    k2.flags.writeable = False
    return k2


# radial W = r u helpers -------------------------------------------------------

def _radial_lap(vals: np.ndarray, grid: RadialGrid) -> np.ndarray:
    r, h = grid.r, grid.h
    W = r * vals
    lap = -2.0 * W
    lap[1:] += W[:-1]
    lap[:-1] += W[1:]
    return lap / (h * h * r)


def _radial_dirichlet(a: np.ndarray, b: np.ndarray, grid: RadialGrid) -> float:
    r = grid.r
    dA = np.diff(r * a, prepend=0.0, append=0.0)
    dB = np.diff(r * b, prepend=0.0, append=0.0)
    return float(4.0 * np.pi / grid.h * np.dot(dA, dB))


# public operators ------------------------------------------------------------

def laplacian_values(vals: np.ndarray, grid: AnyGrid) -> np.ndarray:
    if isinstance(grid, Grid3):
        return sfft.irfftn(-grid.ksquared() * sfft.rfftn(vals), s=grid.shape)
    if isinstance(grid, RadialGrid):
        return _radial_lap(vals, grid)
    raise GridMismatch(f"unsupported grid {grid!r}")


def laplacian(u: Field) -> Field:
    """Discrete Laplacian: spectral on the box, W = r u differences on radial grids."""
    return Field(u.grid, laplacian_values(u.values, u.grid))


def integrate_values(vals: np.ndarray, grid: AnyGrid) -> float:
    if isinstance(grid, Grid3):
        return float(vals.sum() * grid.cell_volume)
    if isinstance(grid, RadialGrid):
        return float(np.dot(grid.weights, vals))
    raise GridMismatch(f"unsupported grid {grid!r}")


def integrate(u: Field) -> float:
    return integrate_values(u.values, u.grid)


def inner(u: Field, v: Field) -> float:
    grid = same_grid(u, v)
    return integrate_values(u.values * v.values, grid)


def dirichlet_values(a: np.ndarray, b: np.ndarray, grid: AnyGrid) -> float:
    """The discrete form int grad a . grad b, symmetric and equal to -int a lap b."""
    if isinstance(grid, Grid3):
        return -integrate_values(a * laplacian_values(b, grid), grid)
    if isinstance(grid, RadialGrid):
        return _radial_dirichlet(a, b, grid)
    raise GridMismatch(f"unsupported grid {grid!r}")


def h1_products(u: Field, v: Field, Vfield: Field) -> tuple[float, float]:
    """Return (int grad u . grad v, int V u v).  Their sum at v = u is ||u||^2."""
    grid = same_grid(u, v, Vfield)
    d = dirichlet_values(u.values, v.values, grid)
    w = integrate_values(Vfield.values * u.values * v.values, grid)
    return d, w


def precondition_values(g: np.ndarray, grid: AnyGrid, shift: float) -> np.ndarray:
    """Solve (-lap + shift) z = g with the same discrete Laplacian."""
    if shift <= 0:
        raise ValueError("preconditioner shift must be positive")
    if isinstance(grid, Grid3):
        return sfft.irfftn(sfft.rfftn(g) / (grid.ksquared() + shift), s=grid.shape)
    if isinstance(grid, RadialGrid):
        ab = _radial_band(grid.R_max, grid.N_r, float(shift))
        r = grid.r
        return solve_banded((1, 1), ab, r * g, check_finite=False) / r
    raise GridMismatch(f"unsupported grid {grid!r}")


def precondition(g: Field, shift: float) -> Field:
    return Field(g.grid, precondition_values(g.values, g.grid, shift))


@lru_cache(maxsize=8)
def _radial_band(R_max: float, N_r: int, shift: float) -> np.ndarray:
    # in W = r z: -(W+ - 2W + W-)/h^2 + shift W = r g
    h = R_max / N_r
    ab = np.empty((3, N_r))
    ab[0] = -1.0 / h ** 2
    ab[1] = 2.0 / h ** 2 + shift
    ab[2] = -1.0 / h ** 2
    ab.flags.writeable = False
    return ab


# rescaled sampling -----------------------------------------------------------

def sample_rescaled(omega: Field, epsilon: float, center, target: AnyGrid,
                    method: str = "linear") -> Field:
    """Sample v(x) = omega(epsilon x + center) on the nodes of ``target``.

    ``linear`` interpolates trilinearly (box) or linearly in r (radial).
    ``spectral`` is exact for band-limited periodic data and is available for
    pure translations (epsilon = 1, same box).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    c = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    src = omega.grid

    if isinstance(src, RadialGrid):
        if np.any(c != 0.0):
            if not isinstance(target, Grid3):
                raise GridMismatch("an off-center radial sample needs a box target")
        return _sample_radial(omega, epsilon, c, target)

    if not isinstance(src, Grid3):
        raise GridMismatch(f"unsupported grid {src!r}")

    if method == "spectral":
        if epsilon != 1.0 or target != src:
            raise GridMismatch("spectral sampling only supports translations on one box")
        return Field(src, spectral_shift(omega.values, src, -c))
    if method != "linear":
        raise ValueError(f"unknown interpolation method {method!r}")

    if isinstance(target, Grid3):
        pts = [epsilon * x + ci for x, ci in zip(np.broadcast_arrays(*target.coords()), c)]
    elif isinstance(target, RadialGrid):
        r = epsilon * target.r
        pts = [r + c[0], np.full_like(r, c[1]), np.full_like(r, c[2])]
    else:
        raise GridMismatch(f"unsupported grid {target!r}")

    lo, hi = -src.L, src.L - src.h
    tol = 1e-12 * src.L
    for p in pts:
        if p.min() < lo - tol or p.max() > hi + tol:
            raise OutOfDomain("rescaled sample points leave the source box")
    idx = [(p - lo) / src.h for p in pts]
    vals = ndimage.map_coordinates(omega.values, idx, order=1, mode="grid-wrap")
    return Field(target, vals.reshape(target.shape))


def _sample_radial(omega: Field, epsilon: float, c: np.ndarray, target: AnyGrid) -> Field:
    src = omega.grid
    if isinstance(target, Grid3):
        rq = epsilon * np.sqrt(sum((x + ci / epsilon) ** 2 for x, ci in zip(target.coords(), c)))
    elif isinstance(target, RadialGrid):
        rq = epsilon * target.r
    else:
        raise GridMismatch(f"unsupported grid {target!r}")
    if rq.max() > src.R_max * (1 + 1e-12):
        raise OutOfDomain("rescaled sample radius exceeds R_max")
    return Field(target, radial_interp(omega.values, src, rq))


def radial_interp(vals: np.ndarray, grid: RadialGrid, rq) -> np.ndarray:
    """Linear interpolation in r, with u(0) extrapolated as (4 u_1 - u_2)/3."""
    u0 = (4.0 * vals[0] - vals[1]) / 3.0
    rr = np.concatenate([[0.0], grid.r])
    uu = np.concatenate([[u0], vals])
    return np.interp(rq, rr, uu, right=0.0)


def spectral_shift(vals: np.ndarray, grid: Grid3, shift) -> np.ndarray:
    """Periodic translation: returns w(x) = u(x - shift) via Fourier phases."""
    k = 2.0 * np.pi * sfft.fftfreq(grid.N, grid.h)
    kz = 2.0 * np.pi * sfft.rfftfreq(grid.N, grid.h)
    s = np.asarray(shift, dtype=float)
    phase = (np.exp(-1j * k * s[0])[:, None, None]
             * np.exp(-1j * k * s[1])[None, :, None]
             * np.exp(-1j * kz * s[2])[None, None, :])
    spec = sfft.rfftn(vals) * phase
    # the Nyquist planes are ambiguous under a phase shift; keep them real-symmetric
    n2 = grid.N // 2
    spec[n2, :, :] = spec[n2, :, :].real
    spec[:, n2, :] = spec[:, n2, :].real
    spec[:, :, n2] = spec[:, :, n2].real
    return sfft.irfftn(spec, s=grid.shape)

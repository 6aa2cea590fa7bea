"""Free-space Poisson solves for -lap phi = rho in R^3, i.e. phi = rho * 1/(4 pi |x|).

Box grids use a zero-padded convolution on the doubled domain.  The kernel
is split as erf(r/s)/(4 pi r) + erfc(r/s)/(4 pi r): the smooth long-range
part is sampled in real space, the short-range part is added through its
exact transform (1 - exp(-k^2 s^2/4))/k^2.  This avoids the singular node
and is spectrally accurate for smooth sources.

Radial grids use Newton's shell formula
    phi(r) = (1/r) int_0^r s^2 rho ds + int_r^inf s rho ds
with a three-point Numerov filter on S = r rho, which makes the discrete
operator fourth-order accurate and symmetric in the grid's inner product.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.special import erf, gamma

from .discretization import Field, Grid3, RadialGrid, integrate_values, same_grid
from .errors import ExponentMismatch, GridMismatch

SPLIT_CELLS = 3.0


@dataclass
class PoissonSolution:
    phi: Field
    source_l1: float
    method: str


@lru_cache(maxsize=4)
def _box_kernel_hat(L: float, N: int) -> np.ndarray:
    h = 2.0 * L / N
    M = 2 * N
    s = SPLIT_CELLS * h
    m = np.arange(M)
    m = np.where(m < N, m, m - M) * h
    rr = np.sqrt(m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        G = np.where(rr > 0, erf(rr / s) / (4.0 * np.pi * rr), 0.0)
    G[0, 0, 0] = 2.0 / (s * np.sqrt(np.pi)) / (4.0 * np.pi)
    Gh = sfft.rfftn(G) * h ** 3
    k = 2.0 * np.pi * sfft.fftfreq(M, h)
    kz = 2.0 * np.pi * sfft.rfftfreq(M, h)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + kz[None, None, :] ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        short = np.where(k2 > 0, -np.expm1(-k2 * s * s / 4.0) / k2, s * s / 4.0)
    Gh = Gh.real + short
    Gh.flags.writeable = False
    return Gh


def _box_solve(rho: np.ndarray, grid: Grid3) -> np.ndarray:
    N = grid.N
    M = 2 * N
    Gh = _box_kernel_hat(grid.L, N)
    a = sfft.rfft(rho, n=M, axis=2)
    a = sfft.fft(a, n=M, axis=1)
    a = sfft.fft(a, n=M, axis=0)
    a *= Gh
    a = sfft.ifft(a, axis=0)[:N]
    a = sfft.ifft(a, axis=1)[:, :N]
    return sfft.irfft(a, n=M, axis=2)[:, :, :N]


def _radial_solve(rho: np.ndarray, grid: RadialGrid) -> np.ndarray:
    r, h = grid.r, grid.h
    S = r * rho
    St = S.copy()
    St[1:] += S[:-1] / 12.0
    St[:-1] += S[1:] / 12.0
    St -= S / 6.0
    inner = np.cumsum(h * r * St) / r
    tail = np.cumsum((h * St)[::-1])[::-1]
    outer = np.empty_like(tail)
    outer[:-1] = tail[1:]
    outer[-1] = 0.0
    return inner + outer


def solve_values(rho: np.ndarray, grid) -> np.ndarray:
    if isinstance(grid, Grid3):
        return _box_solve(rho, grid)
    if isinstance(grid, RadialGrid):
        return _radial_solve(rho, grid)
    raise GridMismatch(f"unsupported grid {grid!r}")


def solve_poisson(source: Field) -> PoissonSolution:
    """Free-space potential phi with -lap phi = source."""
    grid = source.grid
    rho = source.values
    mx = float(np.max(np.abs(rho))) if rho.size else 0.0
    if mx > 0 and rho.min() < -1e-12 * mx:
        warnings.warn("Poisson source has negative values", RuntimeWarning, stacklevel=2)
    if mx == 0.0:
        phi = np.zeros(grid.shape)
    else:
        phi = solve_values(rho, grid)
    method = "box-convolution" if isinstance(grid, Grid3) else "radial-newton"
    return PoissonSolution(Field(grid, phi), integrate_values(rho, grid), method)


def nonlocal_energy(u: Field, Kfield: Field) -> float:
    """D(u) = int phi K u^2 with -lap phi = K u^2."""
    grid = same_grid(u, Kfield)
    rho = Kfield.values * u.values ** 2
    if not np.any(rho):
        return 0.0
    phi = solve_values(rho, grid)
    return integrate_values(phi * rho, grid)


# Hardy-Littlewood-Sobolev ----------------------------------------------------

def hls_sharp_constant() -> float:
    """Sharp constant for int int f(x) h(y)/|x-y| <= C |f|_{6/5} |h|_{6/5} in R^3."""
    lam, n = 1.0, 3.0
    return (np.pi ** (lam / 2) * gamma(n / 2 - lam / 2) / gamma(n - lam / 2)
            * (gamma(n / 2) / gamma(n)) ** (-1 + lam / n))


def lp_norm(f: Field, q: float) -> float:
    return integrate_values(np.abs(f.values) ** q, f.grid) ** (1.0 / q)


def hls_check(f: Field, h: Field, t: float, r: float) -> tuple[float, float]:
    """Return (lhs, bound) for the Riesz-kernel (exponent 1) inequality.

    lhs = int int f(x) h(y) / |x - y| dx dy, computed as 4 pi int phi_f h.
    Only the diagonal case t = r = 6/5, where the sharp constant is known, is
    supported.
    """
    grid = same_grid(f, h)
    if abs(1.0 / t + 1.0 / 3.0 + 1.0 / r - 2.0) > 1e-12:
        raise ExponentMismatch(f"1/t + 1/3 + 1/r must equal 2, got t={t}, r={r}")
    if abs(t - 1.2) > 1e-12 or abs(r - 1.2) > 1e-12:
        raise ValueError("the sharp constant is only available for t = r = 6/5")
    if not np.any(f.values) or not np.any(h.values):
        return 0.0, hls_sharp_constant() * lp_norm(f, t) * lp_norm(h, r)
    phi = solve_values(f.values, grid)
    lhs = 4.0 * np.pi * integrate_values(phi * h.values, grid)
    bound = hls_sharp_constant() * lp_norm(f, t) * lp_norm(h, r)
    return lhs, bound

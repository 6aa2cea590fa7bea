from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splab.discretization import Field, Grid3, RadialGrid, inner, integrate
from splab.errors import NoRoot
from splab.functional import (Ray, energy, gradient, landscape, level_from_nehari, nehari_scale,
                              norm_eps, residual_norm)
from splab.model import (Ball, NonlinearitySpec, PenalizationSpec, PotentialSpec, ProblemConfig, Well,
                         WholeSpace, constant_potential)

PI32 = np.pi ** 1.5
GRID = Grid3(8.0, 32)


def coupled(grid=GRID, eps=0.25):
    V = PotentialSpec(1.5, (Well((0.0, 0.0, 0.0), 0.5, 0.6),), "V")
    K = PotentialSpec(0.5, (Well((0.0, 0.0, 0.0), 0.5, 0.3),), "K")
    return ProblemConfig(eps, NonlinearitySpec(5), V, K, PenalizationSpec(2.0, Ball((0, 0, 0), 0.4)), grid)


def autonomous(grid=GRID, mu=1.0, p=5.0):
    return ProblemConfig(1.0, NonlinearitySpec(p), constant_potential(mu, "V"), constant_potential(0.0, "K"),
                         PenalizationSpec(2.0, WholeSpace()), grid)


def bumps(grid, rng, n=2, signed=False, spread=1.0):
    out = np.zeros(grid.shape)
    for _ in range(n):
        c = rng.uniform(-spread, spread, 3)
        a = rng.uniform(0.3, 1.5) * (rng.choice([-1, 1]) if signed else 1)
        out += a * np.exp(-grid.radius(c) ** 2 / rng.uniform(0.6, 1.4) ** 2)
    return Field(grid, out)


# energy

def test_energy_of_zero():
    e = energy(Field(GRID, np.zeros(GRID.shape)), coupled())
    assert (e.dirichlet, e.potential, e.nonlocal_, e.nonlinear, e.total) == (0, 0, 0, 0, 0)


def test_energy_gaussian_closed_form():
    # V = 1, K = 0, p = 5, u = e^{-r^2}
    grid = Grid3(8.0, 64)
    u = Field(grid, np.exp(-grid.radius() ** 2))
    e = energy(u, autonomous(grid), penalized=False)
    exact = 0.5 * 3 * np.sqrt(2) * PI32 / 4 + 0.5 * (np.pi / 2) ** 1.5 - PI32 / 5 ** 2.5
    assert e.total == pytest.approx(exact, rel=1e-6)
    rg = RadialGrid(16.0, 16384)
    er = energy(Field(rg, np.exp(-rg.r ** 2)), autonomous(rg), penalized=False)
    assert er.total == pytest.approx(exact, rel=1e-6)


def test_energy_breakdown_sums():
    e = energy(bumps(GRID, np.random.default_rng(3)), coupled())
    assert e.total == pytest.approx(e.dirichlet + e.potential + e.nonlocal_ - e.nonlinear, rel=1e-12)


def test_penalization_invisible_inside_region():
    cfg = coupled()
    R = 0.9 * 0.4 / cfg.epsilon
    r = GRID.radius()
    u = Field(GRID, np.where(r < R, 3.0 * (1 - (r / R) ** 2) ** 4, 0.0))
    a = energy(u, cfg, penalized=True).total
    b = energy(u, cfg, penalized=False).total
    assert abs(a - b) <= 1e-14 * abs(b)
    assert level_from_nehari(u, cfg, True) == pytest.approx(level_from_nehari(u, cfg, False), rel=1e-14)


# gradient

def test_gradient_of_zero():
    assert np.all(gradient(Field(GRID, np.zeros(GRID.shape)), coupled()).values == 0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), penalized=st.booleans())
def test_gradient_matches_central_difference(seed, penalized):
    cfg = coupled()
    rng = np.random.default_rng(seed)
    u = bumps(GRID, rng, 3)
    v = bumps(GRID, rng, 2, signed=True)
    d = 1e-5 * np.sqrt(inner(u, u) / inner(v, v))
    fd = (energy(u + v * d, cfg, penalized).total - energy(u - v * d, cfg, penalized).total) / (2 * d)
    dv = inner(gradient(u, cfg, penalized), v)
    assert fd == pytest.approx(dv, rel=1e-6)


def test_residual_norm_is_gradient_l2():
    cfg = coupled()
    u = bumps(GRID, np.random.default_rng(4))
    g = gradient(u, cfg)
    assert residual_norm(u, cfg) == pytest.approx(np.sqrt(inner(g, g)), rel=1e-12)


# Nehari scale

def test_nehari_unit_when_norm_equals_power_mass():
    cfg = autonomous()
    u = bumps(GRID, np.random.default_rng(5))
    # rescale so that |u|^2 = int u^5: lam^2 A = lam^5 P
    A = norm_eps(u, cfg) ** 2
    P = integrate(Field(GRID, np.maximum(u.values, 0) ** 5))
    lam = (A / P) ** (1 / 3)
    assert nehari_scale(u * lam, cfg, penalized=False).t == pytest.approx(1.0, rel=1e-12)


def test_nehari_closed_form_value_two():
    # |u|^2 = 8 and int u^5 = 1 give t = 8^(1/3) = 2
    w = np.exp(-GRID.radius() ** 2)
    alpha = integrate(Field(GRID, w ** 5)) ** (-1 / 5)
    u = Field(GRID, alpha * w)
    base = autonomous(mu=1.0)
    A1 = norm_eps(u, base) ** 2
    M = integrate(Field(GRID, u.values ** 2))
    mu = 1.0 + (8.0 - A1) / M
    assert mu > 0
    cfg = autonomous(mu=mu)
    assert norm_eps(u, cfg) ** 2 == pytest.approx(8.0, rel=1e-12)
    assert nehari_scale(u, cfg, penalized=False).t == pytest.approx(2.0, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), p=st.floats(4.1, 5.9))
def test_nehari_pure_power_closed_form(seed, p):
    cfg = autonomous(p=p)
    u = bumps(GRID, np.random.default_rng(seed), signed=False)
    A = norm_eps(u, cfg) ** 2
    P = integrate(Field(GRID, np.maximum(u.values, 0) ** p))
    assert nehari_scale(u, cfg, penalized=False).t == pytest.approx((A / P) ** (1 / (p - 2)), rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), amp=st.floats(1e-3, 1e3))
def test_nehari_residual_with_coupling(seed, amp):
    cfg = coupled()
    u = bumps(GRID, np.random.default_rng(seed)) * amp
    ns = nehari_scale(u, cfg)
    tu = u * ns.t
    resid = inner(gradient(tu, cfg), tu)
    assert abs(resid) < 1e-10 * norm_eps(tu, cfg) ** 2
    assert ns.residual < 1e-10
    assert ns.bracket[0] <= ns.t <= ns.bracket[1]


def test_nehari_no_root_for_nonpositive_field():
    u = Field(GRID, -np.exp(-GRID.radius() ** 2))
    with pytest.raises(NoRoot):
        nehari_scale(u, coupled())


def test_nehari_no_root_when_all_mass_is_linear():
    # positive only far outside the region: the linear branch alone cannot balance the norm
    cfg = coupled()
    u = Field(GRID, np.exp(-GRID.radius((6.0, 6.0, 6.0)) ** 2 / 0.5))
    u.values[GRID.radius() < 5] = 0.0
    with pytest.raises(NoRoot):
        nehari_scale(u, cfg)


# levels along rays

@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), lam=st.floats(1e-2, 1e2))
def test_level_scale_invariant_and_positive(seed, lam):
    cfg = coupled()
    u = bumps(GRID, np.random.default_rng(seed))
    a = level_from_nehari(u, cfg)
    assert a > 0
    assert level_from_nehari(u * lam, cfg) == pytest.approx(a, rel=1e-9)


def test_ray_has_single_interior_maximum():
    cfg = coupled()
    u = bumps(GRID, np.random.default_rng(7))
    ray = Ray(u.values, cfg, landscape(cfg, True))
    ts = np.geomspace(1e-3, 1e3, 400)
    vals = np.array([ray.energy(t) for t in ts])
    inc = np.diff(vals) > 0
    k = int(np.argmin(inc))
    assert inc[:k].all() and not inc[k:].any()
    assert vals[-1] < 0
    t = ray.nehari().t
    assert ray.energy(t) >= vals.max() - 1e-12 * abs(vals.max())
    assert ray.energy(t) == pytest.approx(energy(u * t, cfg).total, rel=1e-12)

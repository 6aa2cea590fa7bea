from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splab.analysis import (comparison_table, decay_fit, locate_max, penalization_consistency,
                            profile_distance)
from splab.discretization import Field, Grid3, RadialGrid
from splab.errors import FlatField, InsufficientWindow, InvalidOrder
from splab.model import (Ball, NonlinearitySpec, PenalizationSpec, PotentialSpec, ProblemConfig, Well,
                         WholeSpace, constant_potential)
from splab.solver import Solution, shooting_oracle, solve_autonomous

P5 = NonlinearitySpec(5.0)
BOX = Grid3(4.0, 32)
RADIAL = RadialGrid(32.0, 8192)


# locate_max

def test_max_at_node():
    c = BOX.nodes[[20, 13, 16]]
    mp = locate_max(Field(BOX, np.exp(-BOX.radius(c) ** 2)))
    np.testing.assert_allclose(mp.point, c, atol=1e-12)
    assert mp.index == (20, 13, 16) and not mp.multi


@settings(max_examples=30, deadline=None)
@given(off=st.tuples(*[st.floats(-0.5, 0.5)] * 3))
def test_max_between_nodes(off):
    h = BOX.h
    c = BOX.nodes[[16, 16, 16]] + np.array(off) * h
    mp = locate_max(Field(BOX, np.exp(-BOX.radius(c) ** 2)))
    assert np.linalg.norm(mp.point - c) < h ** 2


def test_max_scaled_by_epsilon():
    c = BOX.nodes[[18, 16, 16]]
    mp = locate_max(Field(BOX, np.exp(-BOX.radius(c) ** 2)), epsilon=0.25)
    np.testing.assert_allclose(mp.point, 0.25 * c, atol=1e-12)


def test_two_equal_maxima():
    a, b = BOX.nodes[[10, 16, 16]], BOX.nodes[[22, 16, 16]]
    u = np.exp(-BOX.radius(a) ** 2) + np.exp(-BOX.radius(b) ** 2)
    mp = locate_max(Field(BOX, u))
    assert mp.multi
    assert mp.index == (10, 16, 16)


@settings(max_examples=20, deadline=None)
@given(shift=st.tuples(*[st.integers(-6, 6)] * 3), seed=st.integers(0, 1000))
def test_max_equivariant_under_cell_shifts(shift, seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1, 1, 3)
    u = np.exp(-BOX.radius(c) ** 2 / rng.uniform(0.5, 1.5))
    base = locate_max(Field(BOX, u))
    moved = locate_max(Field(BOX, np.roll(u, shift, axis=(0, 1, 2))))
    np.testing.assert_allclose(moved.point - base.point, np.array(shift) * BOX.h, atol=1e-9)


def test_max_of_flat_field():
    with pytest.raises(FlatField):
        locate_max(Field(BOX, np.zeros(BOX.shape)))
    with pytest.raises(FlatField):
        locate_max(Field(BOX, -np.ones(BOX.shape)))


def test_max_on_radial_grid():
    mp = locate_max(Field(RADIAL, np.exp(-RADIAL.r ** 2)))
    assert mp.point[0] == 0.0 and mp.value == pytest.approx(1.0, rel=1e-6)


# decay_fit

@pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 3.0, 4.0])
def test_exponential_rate(c):
    fit = decay_fit(Field(RADIAL, np.exp(-c * RADIAL.r)))
    assert fit.rate == pytest.approx(c, rel=1e-2)
    assert fit.r2 >= 0.99 and fit.trusted


def test_rate_is_physical():
    fit = decay_fit(Field(RADIAL, np.exp(-2.0 * RADIAL.r)), epsilon=0.25)
    assert fit.rate == pytest.approx(8.0, rel=1e-2)


def test_window_bounds():
    u = np.exp(-RADIAL.r)
    fit = decay_fit(Field(RADIAL, u))
    lo, hi = fit.fit_window
    top = u.max()
    assert np.exp(-hi) >= 1e-10 * top and np.exp(-lo) <= 1e-2 * top


def test_gaussian_is_untrusted():
    fit = decay_fit(Field(RADIAL, np.exp(-RADIAL.r ** 2)))
    assert not fit.trusted


def test_box_exponential_with_algebraic_tail():
    g = Grid3(16.0, 64)
    r = g.radius()
    fit = decay_fit(Field(g, np.exp(-r) / np.maximum(r, g.h)))
    assert fit.rate == pytest.approx(1.0, rel=0.05)
    assert fit.beta == pytest.approx(1.0, abs=0.2)
    assert fit.trusted


def test_limit_ground_state_rate():
    sol = solve_autonomous(1.0, 0.0, P5, RadialGrid(32.0, 32768))
    fit = decay_fit(sol.u)
    assert fit.rate == pytest.approx(1.0, rel=0.05)
    # the shooting tail decays at the same rate
    tail = shooting_oracle(1.0, P5).profile(RadialGrid(32.0, 32768).r)
    assert decay_fit(Field(RadialGrid(32.0, 32768), tail)).rate == pytest.approx(fit.rate, rel=0.05)


def test_insufficient_window():
    g = RadialGrid(4.0, 16)
    with pytest.raises(InsufficientWindow):
        decay_fit(Field(g, np.exp(-g.r)))


# profile_distance

@pytest.fixture(scope="module")
def reference():
    return solve_autonomous(1.0, 0.0, P5, RadialGrid(32.0, 32768)).u


def test_profile_identity(reference):
    assert profile_distance(reference, 1.0, (0.0, 0.0, 0.0), reference) < 1e-8


def test_profile_scaled_reference(reference):
    assert profile_distance(reference * 2.0, 1.0, (0.0, 0.0, 0.0), reference) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(x=st.tuples(*[st.floats(-0.3, 0.3)] * 3), eps=st.sampled_from([1.0, 0.5, 0.25]))
def test_profile_translated_gaussian(x, eps):
    # a field equal to the reference translated to x / eps is at distance ~0
    g = Grid3(6.0, 64)
    ref = lambda r: np.exp(-r ** 2)  # noqa: E731
    u = Field(g, ref(g.radius(np.array(x) / eps)))
    assert profile_distance(u, eps, x, ref) < 1e-12
    assert profile_distance(u, eps, (0.0, 0.0, 0.0), ref) > 0 or np.allclose(x, 0)


def test_profile_h1_variant(reference):
    assert profile_distance(reference * 1.5, 1.0, None, reference, h1=True) == pytest.approx(0.5, rel=1e-12)


# comparison_table

def test_comparison_two_by_two():
    tab = comparison_table([1.0, 2.0], [0.0, 1.0], P5)
    assert tab.monotone and tab.strict_in_nu and not tab.violations
    assert np.all(np.diff(tab.levels, axis=0) > 0)
    assert tab.levels[0, 0] == pytest.approx(shooting_oracle(1.0, P5).level, rel=1e-4)
    assert "mu" in tab.format()


@pytest.mark.parametrize("mu,nu", [([2.0, 1.0], [0.0]), ([1.0], [1.0, 0.0]), ([1.0, 1.0], [0.0])])
def test_comparison_order(mu, nu):
    with pytest.raises(InvalidOrder):
        comparison_table(mu, nu, P5, RADIAL)


# penalization_consistency

def _sol(grid, vals):
    return Solution(Field(grid, vals), Field(grid, np.zeros(grid.shape)), 0.0, 0.0, 0, 0.0)


def test_penalization_whole_space():
    g = Grid3(4.0, 16)
    cfg = ProblemConfig(1.0, P5, constant_potential(1.0), constant_potential(0.0, "K"),
                        PenalizationSpec(2.0, WholeSpace()), g)
    assert penalization_consistency(_sol(g, np.ones(g.shape)), cfg) == (0.0, True)


def test_penalization_threshold_decides():
    g = Grid3(4.0, 32)
    V = PotentialSpec(1.5, (Well((0, 0, 0), 0.5, 0.6),), "V")
    cfg = ProblemConfig(0.5, P5, V, constant_potential(0.0, "K"), PenalizationSpec(2.0, Ball((0, 0, 0), 0.4)), g)
    a = cfg.a
    r = g.radius()
    low = np.where(r < 0.8, 5.0, 0.5 * a)
    m, ok = penalization_consistency(_sol(g, low), cfg)
    assert ok and m == pytest.approx(0.5 * a)
    high = np.where(r < 0.8, 5.0, 0.0)
    high[0, 0, 0] = 2 * a
    m, ok = penalization_consistency(_sol(g, high), cfg)
    assert not ok and m == pytest.approx(2 * a)

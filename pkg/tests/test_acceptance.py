"""Acceptance criteria 1-12, one test each, with a PASS/FAIL line per criterion.

The sweeps run once per session on the bundled configs at their default grids
(box half-width 6, 128 points per axis).  Expect a few minutes per sweep.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import report
from splab import checks, configfile
from splab.analysis import comparison_table
from splab.discretization import Grid3, RadialGrid
from splab.model import NonlinearitySpec
from splab.solver import (continuation_sweep, limit_reference, multiwell_sweep, shooting_oracle,
                          solve_autonomous)

P5 = NonlinearitySpec(5.0)
RADIAL = RadialGrid(32.0, 32768)


# oracle criteria

def test_criterion_01_poisson_oracle():
    t0 = time.perf_counter()
    box, radial = checks.poisson_suite(L=16.0, N=64, box_tol=1e-3, radial_tol=1e-8)
    elapsed = time.perf_counter() - t0
    ok = box.passed and radial.passed and elapsed < 5.0
    report(1, ok, f"Poisson box err {box.value:.2e} (<1e-3), radial err {radial.value:.2e} (<1e-8), "
                  f"{elapsed:.2f} s (<5 s)")
    assert box.value < 1e-3 and radial.value < 1e-8 and elapsed < 5.0


def test_criterion_02_gradient_consistency():
    (row,) = checks.gradient_suite(pairs=100, tol=1e-6)
    report(2, row.passed, f"gradient vs central difference, 100 pairs, worst rel err {row.value:.2e} (<1e-6)")
    assert row.passed


def test_criterion_03_nehari_closed_form():
    pure, coupled = checks.nehari_suite(cases=10, tol=1e-10)
    ok = pure.passed and coupled.passed
    report(3, ok, f"Nehari pure-power err {pure.value:.2e}, coupled residual {coupled.value:.2e} (<1e-10)")
    assert ok


def test_criterion_04_autonomous_oracles():
    shoot = shooting_oracle(1.0, P5).level
    radial = solve_autonomous(1.0, 0.0, P5, RADIAL).level
    box = solve_autonomous(1.0, 0.0, P5, Grid3(6.0, 128)).level
    pairs = [(shoot, radial), (shoot, box), (radial, box)]
    worst_pair = max(abs(a - b) / abs(a) for a, b in pairs)
    scaling = max(abs(solve_autonomous(mu, 0.0, P5, RADIAL).level / (mu ** (1 / 6) * radial) - 1)
                  for mu in (2.0, 4.0))
    ok = worst_pair < 1e-3 and scaling < 1e-3
    report(4, ok, f"c_10 shooting {shoot:.8f} radial {radial:.8f} box {box:.8f}, worst pair {worst_pair:.1e}; "
                  f"scaling err {scaling:.1e} (<1e-3)")
    assert ok


def test_criterion_05_comparison_monotone():
    tol = 1e-10
    tab = comparison_table([1.0, 2.0, 4.0], [0.0, 0.5, 1.0], P5, tol=tol)
    ok = tab.monotone and tab.strict_in_nu
    report(5, ok, f"3x3 c_(mu,nu) monotone within 2*tol: {tab.monotone}, strict in nu: {tab.strict_in_nu}, "
                  f"min nu step {np.min(np.diff(tab.levels, axis=1)):.4f}")
    assert ok, tab.format()


# single-well sweep

@pytest.fixture(scope="module")
def single():
    exp = configfile.load("single_well")
    config = exp.problem
    ref = limit_reference(config)
    run = continuation_sweep(config, exp.epsilons, reference=ref.u)
    records = [rec for _, rec in run]
    return exp, config, ref, records


def test_criterion_06_level_convergence(single):
    exp, config, ref, records = single
    last = records[-1]
    assert last.ok, last.failed
    err = abs(last.level - ref.level) / ref.level
    ok = all(r.ok for r in records) and err < 0.05
    report(6, ok, f"|c_eps(0.125) - c_V0| / c_V0 = {err:.2e} (<0.05); c_V0 = {ref.level:.8f}")
    assert ok


def test_criterion_07_concentration(single):
    exp, config, ref, records = single
    Vs = [r.V_at_max for r in records]
    # same slack as the comparison table: twice the solver tolerance
    slack = 2 * config.solver.tol
    rises = [b - a for a, b in zip(Vs, Vs[1:])]
    non_increasing = all(d <= slack for d in rises)
    depth = config.V.wells[0].depth
    last = records[-1]
    gap = abs(last.V_at_max - config.V0)
    dist = float(np.linalg.norm(np.asarray(last.max_point) - config.vmin))
    hphys = last.epsilon * config.grid.h
    ok = non_increasing and gap < 0.02 * depth and dist < 2 * hphys
    report(7, ok, f"V(x_eps) {', '.join(f'{v:.9f}' for v in Vs)} non-increasing: {non_increasing} (max rise {max(rises):.1e} <= {slack:g}); "
                  f"|V - V0| = {gap:.2e} (<{0.02 * depth:g}); |x - argmin V| = {dist:.2e} (<{2 * hphys:.3g})")
    assert ok


def test_criterion_08_profile_convergence(single):
    exp, config, ref, records = single
    d = [r.profile_distance for r in records]
    decreasing = all(b < a for a, b in zip(d, d[1:]))
    ok = decreasing and d[-1] < 0.05
    report(8, ok, f"profile L2 distances {', '.join(f'{x:.4f}' for x in d)}; final < 0.05")
    assert ok


def test_criterion_09_decay_scaling(single):
    exp, config, ref, records = single
    scaled = [r.decay_rate * r.epsilon for r in records]
    ratios = [b / a for a, b in zip(scaled, scaled[1:])]
    r2 = [r.rate_r2 for r in records]
    ok = all(abs(q - 1) <= 0.2 for q in ratios) and all(x >= 0.99 for x in r2)
    report(9, ok, f"rate*eps {', '.join(f'{x:.4f}' for x in scaled)}; min r2 {min(r2):.5f}")
    assert ok


def test_criterion_10_penalization_consistency(single):
    exp, config, ref, records = single
    last = records[-1]
    ok = last.max_outside <= config.a
    report(10, ok, f"eps=0.125: max u outside Lambda_eps = {last.max_outside:.4e} <= a = {config.a:.6f}")
    assert ok


# two-well sweep

def test_criterion_11_multiwell_separation():
    exp = configfile.load("two_well")
    result = multiwell_sweep(exp.problem, exp.regions, exp.epsilons, jobs=1)
    problems = configfile.region_problems(exp)
    parts = []
    ok = result.separated
    for j, (cfg, reg) in enumerate(zip(problems, exp.regions)):
        rec = result.records(j)[-1]
        if not rec.ok:
            ok = False
            parts.append(f"well {j + 1} failed: {rec.failed}")
            continue
        depth = cfg.V.wells[j].depth
        rel = abs(rec.V_at_max - cfg.V0) / depth
        inside = bool(reg.contains(np.asarray(rec.max_point)))
        ok = ok and rel < 0.02 and inside
        parts.append(f"well {j + 1}: |V(x) - c_{j + 1}|/depth = {rel:.2e}, in Lambda_{j + 1}: {inside}")
    report(11, ok, "; ".join(parts) + f"; distinct regions: {result.separated}")
    assert ok, result.collision


def test_criterion_12_hls():
    (row,) = checks.hls_suite(pairs=20)
    report(12, row.passed, f"HLS lhs/bound over 20 pairs, worst ratio {row.value:.4f} (<=1)")
    assert row.passed

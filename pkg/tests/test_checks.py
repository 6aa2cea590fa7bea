from __future__ import annotations

import numpy as np
import pytest

from splab import checks


@pytest.mark.parametrize("name", ["poisson", "nehari", "hls", "gradient"])
def test_suite_passes(name):
    rows = checks.run_suite(name)
    assert rows and all(r.passed for r in rows), checks.format_table(rows)


def test_comparison_suite_returns_table():
    rows, table = checks.comparison_suite()
    assert all(r.passed for r in rows)
    assert table.levels.shape == (3, 3)
    assert np.all(np.diff(table.levels, axis=0) > 0) and np.all(np.diff(table.levels, axis=1) > 0)


def test_failing_tolerance_is_reported():
    rows = checks.poisson_suite(box_tol=1e-12)
    assert not rows[0].passed
    assert rows[0].line().startswith("FAIL")


def test_unknown_suite():
    with pytest.raises(ValueError):
        checks.run_suite("nope")


def test_gaussian_potential_values():
    assert checks.gaussian_potential(0.0) == pytest.approx(0.5)
    r = 30.0
    assert checks.gaussian_potential(r) == pytest.approx(np.pi ** 1.5 / (4 * np.pi * r), rel=1e-12)

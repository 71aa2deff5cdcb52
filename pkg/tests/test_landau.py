import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from magbottle.landau import (FiberProblem, WellNotContained, _below, ac_threshold, fiber_eigenvalues,
                              ground_state_eval, ground_state_residual, landau_levels, ladder_residual)


@pytest.mark.parametrize("b,levels,thr", [(2, [2, 4], 4.25), (0.5, [], 0.5), (3, [3, 7, 9], 9.25)])
def test_levels(b, levels, thr):
    spec = landau_levels(b)
    assert list(spec.levels) == levels
    assert spec.ac_threshold == thr


@pytest.mark.parametrize("b,thr", [(0, 0.25), (1, 1.25), (3, 9.25)])
def test_threshold(b, thr):
    assert ac_threshold(b) == thr


@given(st.floats(0, 60))
def test_levels_below_threshold_and_increasing(b):
    spec = landau_levels(b)
    lv = np.array(spec.levels)
    assert np.all(lv < spec.ac_threshold)
    assert np.all(np.diff(lv) > 0)
    assert len(lv) == max(0, math.ceil(b - 0.5))


def test_level_count_boundary_excluded():
    # j = b - 1/2 exactly is not a level
    assert len(landau_levels(2.5).levels) == 2


def test_ground_state_at_origin_b1():
    assert ground_state_eval(1, 0.0) == pytest.approx(math.sqrt(2), rel=1e-15)


@pytest.mark.parametrize("b", [1, 2, 5])
def test_ground_state_normalised(b):
    val, _ = integrate.quad(lambda y: ground_state_eval(b, y) ** 2, 0, np.inf, epsabs=1e-13, epsrel=1e-13)
    assert val == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("b", [1, 2, 5])
def test_ground_state_residual_second_order(b):
    r1 = ground_state_residual(b, 1e-3)
    r2 = ground_state_residual(b, 5e-4)
    assert r1 < 1e-4
    assert 3.6 < r1 / r2 < 4.4


def _gauss_grid(h, centre=4.0):
    y = h * np.arange(int(round(20 / h)) + 1)
    return y, np.exp(-(y - centre) ** 2)


def test_ladder_identity_gaussian():
    y, f = _gauss_grid(1e-3)
    norm = math.sqrt(1e-3 * float(np.sum(f * f)))
    n1, n2 = ladder_residual(2.0, y, f)
    assert n1 < 1e-3 * norm and n2 < 1e-3 * norm
    m1, m2 = ladder_residual(2.0, *_gauss_grid(5e-4))
    assert 3.6 < n1 / m1 < 4.4 and 3.6 < n2 / m2 < 4.4


def test_ladder_identity_ground_state():
    y = 1e-3 * np.arange(40001)
    n1, _ = ladder_residual(3.0, y, ground_state_eval(3.0, y))
    assert n1 < 1e-3


def test_ladder_zero_input():
    y = np.linspace(0, 5, 101)
    assert ladder_residual(2.0, y, np.zeros_like(y)) == (0.0, 0.0)


def test_fiber_b3():
    np.testing.assert_allclose(fiber_eigenvalues(FiberProblem(3, 1)), [3, 7, 9], rtol=1e-3)


@pytest.mark.parametrize("b,xi", [(3, -1), (0.4, 1), (0.4, -1)])
def test_fiber_empty(b, xi):
    assert fiber_eigenvalues(FiberProblem(b, xi)).size == 0


def test_fiber_second_order():
    # left end far out so the level next to the threshold is not truncation-limited
    p = FiberProblem(3, 1, u_min=-40.0)
    exact = np.array([3.0, 7.0, 9.0])
    ratio = (_below(p, 4e-3, 9.25) - exact) / (_below(p, 2e-3, 9.25) - exact)
    assert np.all((ratio > 3.6) & (ratio < 4.4))


def test_well_outside_grid():
    with pytest.raises(WellNotContained):
        fiber_eigenvalues(FiberProblem(3, 1, u_min=2.0, u_max=6.0))
    with pytest.raises(WellNotContained):
        fiber_eigenvalues(FiberProblem(3, 1, u_max=1.2))

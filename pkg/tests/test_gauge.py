import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from magbottle.fields import FieldModel
from magbottle.gauge import MagneticPotential, gauge_shift, potential_halfplane, potential_logcoords
from magbottle.hyperbolic import LogGrid, LogRectangle, assemble_from_form, node_gauge, sample_link_potential

J1 = FieldModel.power_xy(1, (0, 1), (0, 1))
J1_EXPR = FieldModel.expression("(x/y)^2 + y + 1/y")


def test_closed_form_values():
    one = MagneticPotential(FieldModel.constant(1))
    assert potential_halfplane(one, 0.0, 1.0) == 0
    assert potential_halfplane(one, 0.0, 2.0) == pytest.approx(-0.5, abs=1e-14)
    sq = MagneticPotential(FieldModel.expression("y*y"))
    assert potential_halfplane(sq, 0.7, 3.0) == pytest.approx(-2.0, abs=1e-10)


def test_log_coordinates():
    one = MagneticPotential(FieldModel.constant(1))
    assert potential_logcoords(one, 3.0, 0.0) == 0
    assert potential_logcoords(one, 0.0, math.log(2)) == pytest.approx(-0.5, abs=1e-14)
    for t in (-1.3, 0.4, 2.0):
        assert potential_logcoords(one, 0.0, t) == pytest.approx(math.exp(-t) - 1, abs=1e-13)
    assert potential_logcoords(MagneticPotential(J1_EXPR), 5.0, 0.0) == 0


def test_power_xy_against_trapezoid():
    # -int_1^e b(1, s) / s^2 ds with a 1e6-point trapezoid rule
    s = np.linspace(1.0, math.e, 1_000_001)
    f = ((1 / s) ** 2 + s + 1 / s) / s ** 2
    oracle = -float(np.sum((f[1:] + f[:-1]) * np.diff(s)) / 2)
    for model in (J1, J1_EXPR):
        assert potential_logcoords(MagneticPotential(model), 1.0, 1.0) == pytest.approx(oracle, abs=1e-8)


def test_vectorised_matches_scalar_path():
    pot = MagneticPotential(J1_EXPR)
    x = np.array([-3.0, 0.0, 0.5, 2.0])
    y = np.array([0.05, 1.0, 4.0, 30.0])
    vec = pot.a1(x, y)
    for xi, yi, v in zip(x, y, vec):
        assert v == pytest.approx(potential_halfplane(pot, xi, yi), rel=1e-11, abs=1e-11)


@pytest.mark.parametrize("x,y", [(0.3, 0.5), (-1.0, 2.0), (2.0, 7.0)])
def test_reconstruction_of_field(x, y):
    pot = MagneticPotential(J1_EXPR)
    h = 1e-4 * y
    d = (pot.a1(x, y + h) - pot.a1(x, y - h)) / (2 * h)
    assert y * y * (-d) == pytest.approx(float(J1_EXPR.signed(x, y)), rel=1e-7)


def _small_form(model=J1, nx=12, nt=10):
    grid = LogGrid.uniform(LogRectangle(0.0, 0.0, 2.0, 1.5), nx, nt)
    return grid, sample_link_potential(grid, MagneticPotential(model))


def test_zero_gauge_is_identity():
    grid, form = _small_form()
    shifted = gauge_shift(form.links, np.zeros(grid.n))
    np.testing.assert_array_equal(shifted.phase, form.links.phase)


def test_linear_gauge_shifts_x_links():
    grid, form = _small_form()
    c = 0.37
    x, _ = grid.nodes()
    shifted = gauge_shift(form.links, c * x)
    horiz = (form.links.x_length > 0) & (form.links.nodes[:, 0] >= 0) & (form.links.nodes[:, 1] >= 0)
    np.testing.assert_allclose(shifted.link_values()[horiz] - form.links.link_values()[horiz], c, atol=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_gauge_shift_is_unitary_conjugation(seed):
    grid, form = _small_form(nx=7, nt=6)
    rng = np.random.default_rng(seed)
    phi = rng.uniform(-np.pi, np.pi, grid.n)
    a = assemble_from_form(form).matrix.toarray()
    form.links = gauge_shift(form.links, phi)
    b = assemble_from_form(form).matrix.toarray()
    d = np.exp(1j * phi)
    np.testing.assert_allclose(b, (d[:, None] * a) * d.conj()[None, :], atol=1e-12)


def test_smooth_gauge_spectrum():
    grid, form = _small_form()
    before = np.linalg.eigvalsh(assemble_from_form(form).matrix.toarray())
    form.links = gauge_shift(form.links, node_gauge(grid, lambda x, t: np.sin(2 * x) * np.cos(t) + x * t))
    after = np.linalg.eigvalsh(assemble_from_form(form).matrix.toarray())
    np.testing.assert_allclose(after, before, rtol=1e-10)

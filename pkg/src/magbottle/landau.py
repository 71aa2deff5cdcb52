"""Constant-field spectrum on the half-plane.

For a constant field of intensity ``b`` the partial Fourier transform in ``x``
splits the operator into fibers on ``L^2(R_+, dy)``

    P_b(xi) f = (y xi - b)^2 f - (y^2 f')',

whose point spectrum is ``(2j+1) b - j(j+1)`` for integers ``0 <= j < b - 1/2``
(fiber ``xi > 0`` only) and whose continuum starts at ``b^2 + 1/4``.  This
module gives the closed forms and the numerical checks: ground state, ladder
identities and a finite-difference fiber solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .kernels import sturm_count


@dataclass(frozen=True)
class LandauSpectrum:
    b: float
    levels: tuple
    ac_threshold: float


def ac_threshold(b: float) -> float:
    """Bottom of the absolutely continuous spectrum, ``b^2 + 1/4``."""
    if b < 0:
        raise ValueError("b must be nonnegative")
    return b * b + 0.25


def landau_levels(b: float) -> LandauSpectrum:
    if b < 0:
        raise ValueError("b must be nonnegative")
    levels = []
    j = 0
    while j < b - 0.5:
        levels.append((2 * j + 1) * b - j * (j + 1))
        j += 1
    return LandauSpectrum(float(b), tuple(levels), ac_threshold(b))


def ground_state_eval(b: float, y):
    """Normalised ground state ``2^(b-1/2) / sqrt(Gamma(2b-1)) y^(b-1) e^-y``.

    Accepts ``y = 0`` as the right limit.
    """
    if not b > 0.5:
        raise ValueError("ground state needs b > 1/2")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("y must be nonnegative")
    log_c = (b - 0.5) * math.log(2.0) - 0.5 * gammaln(2 * b - 1)
    with np.errstate(divide="ignore"):
        if b == 1.0:
            out = np.exp(log_c - y)
        else:
            out = np.exp(log_c + (b - 1) * np.log(y) - y)
    return out if out.ndim else float(out)


# -- finite-difference operators on a uniform y-grid ---------------------------
#
# All apply-functions return values at the interior points y[1:-1]; the end
# values of f are used as given (Dirichlet data).


def _step(y) -> float:
    y = np.asarray(y, dtype=float)
    h = np.diff(y)
    if y.size < 5 or not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ValueError("need a uniform grid with at least 5 points")
    return float(h[0])


def fiber_apply(b: float, xi: float, y, f):
    """``P_b(xi) f`` with the conservative stencil for ``-(y^2 f')'``."""
    h = _step(y)
    y = np.asarray(y, dtype=float)
    f = np.asarray(f)
    yp = (0.5 * (y[1:-1] + y[2:])) ** 2
    ym = (0.5 * (y[1:-1] + y[:-2])) ** 2
    lap = -(yp * (f[2:] - f[1:-1]) - ym * (f[1:-1] - f[:-2])) / (h * h)
    return (y[1:-1] * xi - b) ** 2 * f[1:-1] + lap


def _ddy(y, f):
    h = _step(y)
    return (f[2:] - f[:-2]) / (2 * h)


def ladder_apply(b: float, y, f):
    """``K_b f = (y - b - 1) f - y f'`` at interior points."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f)
    return (y[1:-1] - b - 1) * f[1:-1] - y[1:-1] * _ddy(y, f)


def ladder_adjoint_apply(b: float, y, f):
    """``K_b^* f = (y - b) f + y f'`` at interior points."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f)
    return (y[1:-1] - b) * f[1:-1] + y[1:-1] * _ddy(y, f)


def _pad(g):
    return np.concatenate(([0.0], g, [0.0]))


def ladder_residual(b: float, y, f) -> tuple[float, float]:
    """Discrete norms of ``(K*K - P_b(1) - b) f`` and ``(K K* - P_{b+1}(1) + b + 1) f``.

    Compositions are evaluated away from the two outermost points on each
    side, where the nested stencils would need data beyond the grid.
    """
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    h = _step(y)
    kf = _pad(ladder_apply(b, y, f))
    kskf = ladder_adjoint_apply(b, y, kf)
    r1 = kskf - fiber_apply(b, 1.0, y, f) - b * f[1:-1]
    ksf = _pad(ladder_adjoint_apply(b, y, f))
    kksf = ladder_apply(b, y, ksf)
    r2 = kksf - fiber_apply(b + 1, 1.0, y, f) + (b + 1) * f[1:-1]
    inner = slice(1, -1)
    n1 = math.sqrt(h * float(np.sum(np.abs(r1[inner]) ** 2)))
    n2 = math.sqrt(h * float(np.sum(np.abs(r2[inner]) ** 2)))
    return n1, n2


def ground_state_residual(b: float, h: float = 1e-3, y_max: float | None = None) -> float:
    """``||P_b(1) phi_b - b phi_b|| / ||phi_b||`` on a uniform grid from 0.

    Evaluated in extended precision: in double the ``y^2 / h^2`` stencil leaves
    a rounding floor near ``1e-7`` that hides the ``h^2`` rate for larger ``b``.
    """
    if not b > 0.5:
        raise ValueError("ground state needs b > 1/2")
    if y_max is None:
        y_max = 2 * b + 40.0
    n = int(round(y_max / h))
    ld = np.longdouble
    # phi_b blows up at 0 when b < 1; start one step in
    y = ld(h) * np.arange(n + 1, dtype=ld) + (ld(h) if b < 1 else ld(0))
    log_c = ld((b - 0.5) * math.log(2.0) - 0.5 * gammaln(2 * b - 1))
    with np.errstate(divide="ignore"):
        phi = np.exp(log_c + ld(b - 1) * np.log(y) - y) if b != 1.0 else np.exp(log_c - y)
    yp = ((y[1:-1] + y[2:]) / 2) ** 2
    ym = ((y[1:-1] + y[:-2]) / 2) ** 2
    hh = ld(h) * ld(h)
    lap = -(yp * (phi[2:] - phi[1:-1]) - ym * (phi[1:-1] - phi[:-2])) / hh
    r = (y[1:-1] - ld(b)) ** 2 * phi[1:-1] + lap - ld(b) * phi[1:-1]
    return float(np.sqrt(np.sum(r * r) / np.sum(phi[1:-1] ** 2)))


# -- fiber eigenvalues ---------------------------------------------------------


@dataclass(frozen=True)
class FiberProblem:
    """``P_b(xi)`` on the log grid ``u in [u_min, u_max]`` (``y = e^u``) with step ``h``."""

    b: float
    xi: int = 1
    u_min: float | None = None
    u_max: float | None = None
    h: float = 2e-3

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("b must be nonnegative")
        if self.xi not in (1, -1):
            raise ValueError("xi must be +1 or -1")
        c = math.log(max(self.b, 1.0))
        if self.u_min is None:
            object.__setattr__(self, "u_min", c - 12.0)
        if self.u_max is None:
            object.__setattr__(self, "u_max", c + 4.0)
        if not self.u_min < self.u_max:
            raise ValueError("empty grid")


class WellNotContained(ValueError):
    pass


def _check_well(prob: FiberProblem):
    thr = ac_threshold(prob.b)
    if prob.b > 0 and not prob.u_min < math.log(max(prob.b, 1.0)) < prob.u_max:
        raise WellNotContained(f"potential well at u=ln(max(b,1)) lies outside [{prob.u_min}, {prob.u_max}]")
    v_right = (prob.xi * math.exp(prob.u_max) - prob.b) ** 2 + 0.25
    if v_right < thr + 10:
        raise WellNotContained(f"potential at u_max is {v_right:.4g}, needs to exceed threshold + 10 = {thr + 10:.4g}")


def fiber_matrix(prob: FiberProblem, h: float | None = None):
    """Diagonal and off-diagonal of the Dirichlet matrix for
    ``-g'' + (xi e^u - b)^2 + 1/4`` (the fiber after ``y = e^u``, ``f = e^(-u/2) g``)."""
    h = prob.h if h is None else h
    n = int(round((prob.u_max - prob.u_min) / h)) - 1
    u = prob.u_min + h * np.arange(1, n + 1)
    v = (prob.xi * np.exp(u) - prob.b) ** 2 + 0.25
    d = 2.0 / (h * h) + v
    e = np.full(n - 1, -1.0 / (h * h))
    return d, e


def _below(prob: FiberProblem, h: float, cut: float) -> np.ndarray:
    d, e = fiber_matrix(prob, h)
    cnt = int(sturm_count(d, e, [cut])[0])
    if cnt == 0:
        return np.empty(0)
    w = eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, cnt - 1))
    return np.sort(w)


def fiber_eigenvalues(prob: FiberProblem, extrapolate: bool = True) -> np.ndarray:
    """Eigenvalues of ``P_b(xi)`` strictly below ``b^2 + 1/4``.

    Computed on steps ``h`` and ``h/2`` and Richardson-extrapolated; values
    within ``10 h^2`` of the threshold are treated as discretised continuum.
    """
    _check_well(prob)
    thr = ac_threshold(prob.b)
    cut = thr - 10 * prob.h ** 2
    coarse = _below(prob, prob.h, cut)
    if not extrapolate:
        return coarse
    fine = _below(prob, prob.h / 2, cut)
    k = min(coarse.size, fine.size)
    return (4 * fine[:k] - coarse[:k]) / 3

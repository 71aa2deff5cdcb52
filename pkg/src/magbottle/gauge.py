"""Vector potentials in the gauge ``A2 = 0`` and discrete gauge shifts.

With ``A2 = 0`` the field fixes ``A1`` up to a function of ``x``:

    A1(x, y) = -int_{base_y}^{y} b_tilde(x, s) / s^2 ds,

and in log coordinates ``y = e^t`` the same function is used, ``At1(x, t) =
A1(x, e^t)``.  Discretised operators carry the potential as phases on grid
links (:class:`LinkPhases`); a gauge change ``A -> A + grad(phi)`` acts on those
phases by adding ``phi(head) - phi(anchor)``, which is what makes the
assembled matrices exactly unitarily equivalent.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from .fields import FieldModel

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_PANEL = 0.25
_CHUNK = 1 << 21


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3g})")
        self.achieved = achieved


def _power_integral(m: int, y, base: float):
    """int_base^y s^m ds."""
    if m == -1:
        return np.log(y) - np.log(base)
    return (y ** (m + 1) - base ** (m + 1)) / (m + 1)


@dataclass(frozen=True)
class MagneticPotential:
    model: FieldModel
    base_y: float = 1.0
    abs_tol: float = 1e-10

    # -- vectorised evaluation ------------------------------------------------

    def a1(self, x, y):
        """``A1(x, y)``; closed forms for built-in families, Gauss-Legendre otherwise."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        m = self.model
        if m.kind == "constant":
            return np.broadcast_to(-m.b0 * _power_integral(-2, y, self.base_y), np.broadcast_shapes(x.shape, y.shape)).copy()
        if m.kind == "power_xy":
            out = x ** (2 * m.j) * _power_integral(-2 * m.j - 2, y, self.base_y)
            for k, c in enumerate(m.p1):
                if c:
                    out = out + c * _power_integral(k - 2, y, self.base_y)
            for k, c in enumerate(m.p2):
                if c:
                    out = out + c * _power_integral(-k - 2, y, self.base_y)
            return -out
        return self._a1_gauss(x, y)

    def _a1_gauss(self, x, y):
        # s = e^tau: A1 = -int_{ln base}^{ln y} b_tilde(x, e^tau) e^-tau dtau
        x, y = np.broadcast_arrays(x, y)
        shape = x.shape
        x = x.ravel()
        t = np.log(y.ravel())
        t0 = np.log(self.base_y)
        out = np.zeros(x.size)
        npan = np.maximum(1, np.ceil(np.abs(t - t0) / _PANEL)).astype(int)
        for p in np.unique(npan):
            # node positions for every panel, shape (len(sel), p * nodes)
            u = (np.arange(p)[:, None] + 0.5 * (_GL_NODES[None, :] + 1.0)).ravel()
            wts = np.tile(_GL_WEIGHTS, p)
            idx = np.flatnonzero(npan == p)
            step = max(1, _CHUNK // u.size)
            for c in range(0, idx.size, step):
                sel = idx[c:c + step]
                width = (t[sel] - t0) / p
                tau = t0 + width[:, None] * u[None, :]
                vals = self.model.signed(x[sel][:, None], np.exp(tau)) * np.exp(-tau)
                out[sel] = -0.5 * width * (vals @ wts)
        return out.reshape(shape)

    def a1_log(self, x, t):
        return self.a1(x, np.exp(t))


def potential_halfplane(pot: MagneticPotential, x: float, y: float) -> float:
    """``A1(x, y)`` for one point; adaptive Gauss-Kronrod for expression fields."""
    if not y > 0:
        raise ValueError("y must be positive")
    if pot.model.kind != "expression":
        return float(pot.a1(x, y))
    if y == pot.base_y:
        return 0.0

    def f(s):
        return float(pot.model.signed(x, s)) / (s * s)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, pot.base_y, y, epsabs=pot.abs_tol, epsrel=1e-13, limit=500)
        except integrate.IntegrationWarning as exc:
            _, err = integrate.quad(f, pot.base_y, y, epsabs=pot.abs_tol, epsrel=1e-13, limit=500, full_output=1)[:2]
            raise QuadratureError(f"potential quadrature did not converge at x={x}, y={y}: {exc}", err) from None
    return -val


def potential_logcoords(pot: MagneticPotential, x: float, t: float) -> float:
    """``At1(x, t) = A1(x, e^t)`` through the same quadrature path."""
    return potential_halfplane(pot, x, float(np.exp(t)))


@dataclass(frozen=True)
class LinkPhases:
    """Link-integrated potential on a grid.

    Each row is one term of the discrete quadratic form, touching up to three
    nodes.  Column 0 is the anchor; ``phase[:, k]`` is the integral of the
    potential from the anchor to node ``nodes[:, k]`` along the term's path
    (``phase[:, 0] == 0``).  Absent nodes (outside the Dirichlet domain) are
    ``-1``.  ``x_length`` is the x-extent of the path for column 1, so that
    ``phase[:, 1] / x_length`` is the sampled potential on horizontal links.
    """

    nodes: np.ndarray
    phase: np.ndarray
    x_length: np.ndarray

    def link_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.x_length != 0, self.phase[:, 1] / self.x_length, 0.0)


def gauge_shift(links: LinkPhases, phi: np.ndarray) -> LinkPhases:
    """Apply ``A -> A + grad(phi)`` with ``phi`` sampled on the grid nodes.

    The discrete gradient on a term is ``phi(node) - phi(anchor)``, the same
    difference the assembler integrates.  An absent anchor contributes zero;
    its term only changes by a global phase, which the quadratic form ignores.
    """
    phi = np.asarray(phi, dtype=float)
    nodes = links.nodes
    if nodes.size and nodes.max() >= phi.size:
        raise ValueError(f"phi has {phi.size} samples but the grid has node index {nodes.max()}")
    vals = np.where(nodes >= 0, phi[np.maximum(nodes, 0)], 0.0)
    anchor = vals[:, :1]
    shift = np.where(nodes >= 0, vals - anchor, 0.0)
    shift[:, 0] = 0.0
    return replace(links, phase=links.phase + shift)

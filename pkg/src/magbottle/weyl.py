"""Landau-level counting integrals over the half-plane.

    W(lam) = 1/(2 pi) int b(m) #{k >= 0 : (2k+1) b(m) < lam - 1/4} dv

and the sublevel volume ``omega(mu) = |{b < mu}|_dv``.  With ``s = x e^-t`` the
hyperbolic area element ``e^-t dx dt`` becomes ``ds dt``, so every integral
here is a plain Lebesgue integral over a box in ``(s, t)``.

Quadrature is a breadth-first quadtree.  Each cell is probed on the 5 x 5
Gauss-Legendre nodes; if the integer Landau count is the same at all probes
the tensor rule is accepted, otherwise the cell is split.  Cells whose area
falls below ``area_tol`` times the current support area are accepted as they
are and contribute half their integrand range to the error estimate.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fields import FieldModel
from .hyperbolic import TruncationError, sublevel_region

_GL5, _GW5 = np.polynomial.legendre.leggauss(5)
_U = 0.5 * (_GL5 + 1.0)
_W2 = np.outer(0.5 * _GW5, 0.5 * _GW5)


class QuadratureCapError(RuntimeError):
    pass


def heaviside(rho):
    """``[rho]_+^0``: 1 where ``rho > 0``, else 0."""
    return (np.asarray(rho) > 0).astype(float)


def landau_count_below(b, level):
    """``#{k >= 0 : (2k+1) b < level}`` elementwise; ``b`` must be positive.

    Products are compared after rounding, unlike the exact scalar
    ``rectangle.landau_count``; the two differ only on a null set of the
    quadrature.
    """
    b = np.asarray(b, dtype=float)
    level = np.asarray(level, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        n = np.ceil((level / b - 1.0) / 2.0)
    n = np.where(np.isfinite(n), np.maximum(n, 0), 0).astype(np.int64)
    n = np.where((n > 0) & ((2 * n - 1) * b >= level), n - 1, n)
    n = np.where((2 * n + 1) * b < level, n + 1, n)
    return n


def landau_counting_density(b, lam):
    """``b/(2 pi) #{k : lam - 1/4 - (2k+1) b > 0}``; zero where ``b == 0``."""
    b = np.asarray(b, dtype=float)
    safe = np.where(b > 0, b, 1.0)
    out = np.where(b > 0, b * landau_count_below(safe, lam - 0.25), 0.0) / (2 * math.pi)
    return out if out.ndim else float(out)


# -- quadtree -------------------------------------------------------------------


@dataclass
class QuadResult:
    value: float
    error: float
    cells: int
    forced: int


def quadtree_integrate(intensity, key, value, box, *, area_tol: float = 1e-6, initial: int = 64,
                       max_cells: int = 20_000_000, max_level: int = 40) -> QuadResult:
    """Integrate ``value(b)`` over ``box = (s0, s1, t0, t1)`` with ``b = intensity(s, t)``.

    ``key(b)`` is the integer-valued part of the integrand that drives refinement.
    """
    s0, s1, t0, t1 = box
    if not (s1 > s0 and t1 > t0):
        return QuadResult(0.0, 0.0, 0, 0)
    ds0, dt0 = (s1 - s0) / initial, (t1 - t0) / initial
    I, J = np.meshgrid(np.arange(initial), np.arange(initial), indexing="ij")
    cs = s0 + ds0 * I.ravel()
    ct = t0 + dt0 * J.ravel()
    ds = np.full(cs.size, ds0)
    dt = np.full(cs.size, dt0)
    parts, errs = [], []
    seen = forced = 0
    support = None
    for _ in range(max_level):
        if cs.size == 0:
            break
        seen += cs.size
        if seen > max_cells:
            raise QuadratureCapError(f"quadrature tolerance not met within {max_cells} cells")
        S = cs[:, None, None] + ds[:, None, None] * _U[None, :, None]
        T = ct[:, None, None] + dt[:, None, None] * _U[None, None, :]
        b = intensity(S, T)
        k = key(b)
        v = value(b)
        area = ds * dt
        est = area * np.einsum("cij,ij->c", v, _W2)
        kf = k.reshape(k.shape[0], -1)
        const = kf.min(axis=1) == kf.max(axis=1)
        live = kf.max(axis=1) > 0
        cur_support = float(np.sum(area[live]))
        support = cur_support if support is None else max(support, cur_support)
        small = area < area_tol * max(support, 1e-300)
        accept = const | small
        parts.append(est[accept])
        hard = accept & ~const
        if hard.any():
            vf = v.reshape(v.shape[0], -1)[hard]
            errs.append(0.5 * area[hard] * (vf.max(axis=1) - vf.min(axis=1)))
            forced += int(hard.sum())
        split = ~accept
        cs, ct, ds, dt = cs[split], ct[split], 0.5 * ds[split], 0.5 * dt[split]
        cs = np.concatenate([cs, cs + ds, cs, cs + ds])
        ct = np.concatenate([ct, ct, ct + dt, ct + dt])
        ds = np.tile(ds, 4)
        dt = np.tile(dt, 4)
    else:
        if cs.size:
            raise QuadratureCapError(f"quadrature did not resolve within {max_level} levels")
    value_sum = math.fsum(np.concatenate(parts)) if parts else 0.0
    err = math.fsum(np.concatenate(errs)) if errs else 0.0
    return QuadResult(value_sum, err, seen, forced)


def _st_intensity(model: FieldModel):
    def f(s, t):
        y = np.exp(t)
        return model.intensity(s * y, y)
    return f


def support_box(model: FieldModel, level: float):
    """``(s0, s1, t0, t1)`` enclosing ``{b <= level}``, or ``None`` if it is empty."""
    reg = sublevel_region(model, level, pad=0.0)
    if reg.empty:
        return None
    rows = np.isfinite(reg.xlo)
    e = np.exp(-reg.ts[rows])
    s_lo = float(np.min(reg.xlo[rows] * e))
    s_hi = float(np.max(reg.xhi[rows] * e))
    ta, tb = reg.t_extent
    ms = 0.02 * (s_hi - s_lo) + 1e-9
    return (s_lo - ms, s_hi + ms, ta - 4 * reg.dt, tb + 4 * reg.dt)


# -- main term and bracket -----------------------------------------------------------


class WeylError(RuntimeError):
    pass


@dataclass
class WeylResult:
    lam: float
    main_term: float
    bracket: tuple | None = None
    quad_error: float = 0.0
    cells: int = 0
    info: dict = field(default_factory=dict)


def _counting_integral(model: FieldModel, level: float, prefactor=None, area_tol: float = 1e-6) -> QuadResult:
    """``1/(2 pi) int pre(b) b #{k : (2k+1) b < level} dv``."""
    if level <= 0:
        return QuadResult(0.0, 0.0, 0, 0)
    try:
        box = support_box(model, level)
    except TruncationError as exc:
        raise WeylError(f"integrand support is unbounded: {exc}") from exc
    if box is None:
        return QuadResult(0.0, 0.0, 0, 0)

    def key(b):
        return landau_count_below(np.where(b > 0, b, 1.0), level) * (b > 0)

    def value(b):
        pre = 1.0 if prefactor is None else prefactor(b)
        return pre * b * key(b) / (2 * math.pi)

    try:
        return quadtree_integrate(_st_intensity(model), key, value, box, area_tol=area_tol)
    except QuadratureCapError as exc:
        raise WeylError(str(exc)) from exc


def weyl_main_term(model: FieldModel, lam: float, *, area_tol: float = 1e-6,
                   bracket: tuple | None = None) -> WeylResult:
    """Main term ``W(lam)``; with ``bracket=(C, delta)`` also the two-sided bracket."""
    if lam <= 0.25:
        res = WeylResult(lam, 0.0)
    else:
        q = _counting_integral(model, lam - 0.25, area_tol=area_tol)
        res = WeylResult(lam, q.value, None, q.error, q.cells, {"forced_cells": q.forced})
    if bracket is not None:
        res.bracket = weyl_bracket(model, lam, *bracket, area_tol=area_tol)
    return res


def weyl_bracket(model: FieldModel, lam: float, C: float, delta: float, *,
                 area_tol: float = 1e-6) -> tuple[float, float]:
    """Lower and upper integrals with shifted level ``lam (1 -+ C lam^(1-3 delta)) - 1/4``
    and density factor ``1 -+ C / (b+1)^((2-5 delta)/2)`` (the lower one clamped at 0)."""
    if C < 0:
        raise ValueError("C must be nonnegative")
    if not 1 / 3 < delta < 2 / 5:
        raise ValueError("delta must lie in (1/3, 2/5)")
    p = (2 - 5 * delta) / 2
    shift = C * lam ** (1 - 3 * delta)

    def lower_pre(b):
        return np.maximum(1.0 - C / (b + 1.0) ** p, 0.0)

    def upper_pre(b):
        return 1.0 + C / (b + 1.0) ** p

    lo = _counting_integral(model, lam * (1 - shift) - 0.25, lower_pre, area_tol).value
    hi = _counting_integral(model, lam * (1 + shift) - 0.25, upper_pre, area_tol).value
    return lo, hi


WEYL_CSV_HEADER = ["lambda", "main_term", "lower", "upper", "quad_error"]


def write_weyl_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEYL_CSV_HEADER)
        for r in results:
            lo, hi = r.bracket if r.bracket else ("", "")
            w.writerow([f"{r.lam:.12g}", f"{r.main_term:.12g}", lo if lo == "" else f"{lo:.12g}",
                        hi if hi == "" else f"{hi:.12g}", f"{r.quad_error:.12g}"])


# -- omega ------------------------------------------------------------------------


def omega(model: FieldModel, mu: float, *, area_tol: float = 1e-7) -> float:
    """Hyperbolic area of ``{b < mu}``."""
    return omega_with_error(model, mu, area_tol=area_tol).value


def omega_with_error(model: FieldModel, mu: float, *, area_tol: float = 1e-7) -> QuadResult:
    try:
        box = support_box(model, mu)
    except TruncationError as exc:
        raise WeylError(f"sublevel set is unbounded: {exc}") from exc
    if box is None:
        return QuadResult(0.0, 0.0, 0, 0)

    def key(b):
        return (b < mu).astype(np.int64)

    try:
        return quadtree_integrate(_st_intensity(model), key, lambda b: key(b).astype(float), box, area_tol=area_tol)
    except QuadratureCapError as exc:
        raise WeylError(str(exc)) from exc


@dataclass
class OmegaRegularity:
    C1: float
    values: np.ndarray
    mus: np.ndarray
    tau: float

    @property
    def spread(self) -> float:
        """``1 - min/max`` of the per-``mu`` ratios."""
        return float(1.0 - self.values.min() / self.values.max())


def omega_regularity(model: FieldModel, mu_grid, tau: float) -> OmegaRegularity:
    """Largest ``(omega((1+tau) mu) - omega(mu)) / (tau omega(mu))`` over the grid."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    mus = np.asarray(mu_grid, dtype=float)
    vals = []
    for mu in mus:
        w0 = omega(model, mu)
        if w0 <= 0:
            raise ValueError(f"omega({mu:g}) = 0; mu must exceed inf b")
        vals.append((omega(model, (1 + tau) * mu) - w0) / (tau * w0))
    vals = np.array(vals)
    return OmegaRegularity(float(vals.max()), vals, mus, tau)


@dataclass
class GrowthFit:
    alpha: float
    max_rel_dev: float
    rms_rel_dev: float
    mus: np.ndarray
    omegas: np.ndarray


def omega_growth_fit(model: FieldModel, mus, j: int = 1, omegas=None) -> GrowthFit:
    """Fit ``omega(mu) ~ alpha mu^(1/(2j)) ln mu`` by least squares on relative deviations."""
    mus = np.asarray(mus, dtype=float)
    if omegas is None:
        omegas = np.array([omega(model, m) for m in mus])
    f = mus ** (1.0 / (2 * j)) * np.log(mus)
    q = f / omegas
    alpha = float(q.sum() / (q @ q))
    r = alpha * q - 1.0
    return GrowthFit(alpha, float(np.abs(r).max()), float(np.sqrt(np.mean(r * r))), mus, omegas)

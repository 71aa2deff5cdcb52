"""Finite-difference discretisation of the magnetic Laplacian in log coordinates.

With ``y = e^t`` and the unitary ``u(x, y) = y^(1/2) w(x, ln y)`` the operator
becomes ``e^(2t) (D_x - At1)^2 + D_t^2 + 1/4`` on ``L^2(dx dt)`` with the
quadratic form

    q(w) = int e^(2t) |(D_x - At1) w|^2 + |D_t w|^2 + 1/4 |w|^2  dx dt.

The pipeline is: sublevel region of ``b`` -> bounding rectangle -> adapted
partition (cells where ``b`` is comparable to its centre value) -> mesh ->
discrete form -> Hermitian matrix -> inertia count.

Mesh.  Rows ``t_j = j ht`` are uniform.  Each row is a lattice ``x = x0 + k hx_j``.
On graded meshes ``hx_j = h 2^m`` for ``t_j`` in ``[m ln 2, (m+1) ln 2)``, so the
step measured in ``s = x e^(-t)`` stays in ``(h/2, h]`` and the lattices of two
neighbouring rows are equal or nested with ratio 2.  Each row only carries the
nodes inside its own slice of the sublevel region.  Nodes outside are
Dirichlet zeros.

Discrete form.  Every term is ``w |sum_p c_p e^(-i theta_p) u_p|^2`` over at most
three nodes; node 0 is the anchor (``c_0 = 1``, ``theta_0 = 0``).  Horizontal
links use ``theta = At1(x_mid, t) hx``.  A fine node below a coarse row sits
either under a coarse node or halfway between two of them; in the second case
it is coupled to their average, with phases integrated along the coarse row.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .discrete import DiscreteOperator, hermitian_from_upper
from .eigencount import CountResult, inertia_count
from .fields import FieldEvaluationError, FieldModel, verify_bottle_conditions
from .gauge import LinkPhases, MagneticPotential

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
FLUX_CAP = math.pi / 2
DELTA0_RANGE = (1.0 / 3.0, 2.0 / 5.0)
GROWTH_FAILURE = "growth condition violated, N(λ) undefined by truncation"
LABEL = "Dirichlet-truncated (lower-biased)"


class TruncationError(RuntimeError):
    pass


class MeshTooLarge(RuntimeError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message


@dataclass(frozen=True)
class LogRectangle:
    """``[x0 - wx, x0 + wx] x [t0 - wt, t0 + wt]`` in log coordinates."""

    x0: float
    t0: float
    wx: float
    wt: float

    def __post_init__(self):
        if not (self.wx > 0 and self.wt > 0):
            raise ValueError("half-widths must be positive")

    @classmethod
    def from_bounds(cls, x_lo, x_hi, t_lo, t_hi) -> "LogRectangle":
        return cls(0.5 * (x_lo + x_hi), 0.5 * (t_lo + t_hi), 0.5 * (x_hi - x_lo), 0.5 * (t_hi - t_lo))

    @property
    def x_lo(self):
        return self.x0 - self.wx

    @property
    def x_hi(self):
        return self.x0 + self.wx

    @property
    def t_lo(self):
        return self.t0 - self.wt

    @property
    def t_hi(self):
        return self.t0 + self.wt

    @property
    def area(self) -> float:
        return 4.0 * self.wx * self.wt

    def contains(self, other: "LogRectangle") -> bool:
        return (self.x_lo <= other.x_lo and other.x_hi <= self.x_hi
                and self.t_lo <= other.t_lo and other.t_hi <= self.t_hi)


# -- sublevel region ----------------------------------------------------------------


def adapted_width(b, a0: float = 2.0, delta0: float = 0.35):
    """Dyadic cell size ``2^-m`` (``m >= 0``): the largest one below ``a0 / (1 + b^delta0)``."""
    bound = a0 / (1.0 + np.asarray(b, dtype=float) ** delta0)
    m = np.maximum(0, np.ceil(-np.log2(bound) - 1e-12))
    return 2.0 ** -m


class _RangeExtrema:
    """Sparse tables for O(1) range min / max queries."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.mins = [lo]
        self.maxs = [hi]
        k = 1
        while 2 * k <= lo.size:
            a, b = self.mins[-1], self.maxs[-1]
            self.mins.append(np.minimum(a[:-k], a[k:]))
            self.maxs.append(np.maximum(b[:-k], b[k:]))
            k *= 2

    def query(self, i0, i1):
        """min / max over ``[i0, i1)`` (vectorised; empty ranges give +inf / -inf)."""
        i0 = np.asarray(i0)
        i1 = np.asarray(i1)
        length = np.maximum(i1 - i0, 1)
        lev = np.floor(np.log2(length)).astype(int)
        lo = np.full(i0.shape, np.inf)
        hi = np.full(i0.shape, -np.inf)
        for L in np.unique(lev):
            sel = (lev == L) & (i1 > i0)
            if not sel.any():
                continue
            span = 1 << L
            a, b = i0[sel], i1[sel] - span
            lo[sel] = np.minimum(self.mins[L][a], self.mins[L][b])
            hi[sel] = np.maximum(self.maxs[L][a], self.maxs[L][b])
        return lo, hi


@dataclass
class SublevelRegion:
    """Sampled ``{b(x, e^t) <= level}`` stored as one x-interval per sample row,
    padded by ``pad`` in ``t`` and ``pad e^t`` in ``x``."""

    level: float
    ts: np.ndarray
    xlo: np.ndarray
    xhi: np.ndarray
    pad: float
    dt: float
    _rmq: _RangeExtrema = field(default=None, repr=False)

    def __post_init__(self):
        lo = np.where(np.isfinite(self.xlo), self.xlo, np.inf)
        hi = np.where(np.isfinite(self.xhi), self.xhi, -np.inf)
        self._rmq = _RangeExtrema(lo, hi)

    @property
    def empty(self) -> bool:
        return not np.isfinite(self.xlo).any()

    @property
    def t_extent(self) -> tuple[float, float]:
        """Unpadded t-range of the sampled set."""
        rows = np.flatnonzero(np.isfinite(self.xlo))
        return float(self.ts[rows[0]]), float(self.ts[rows[-1]])

    def x_span(self, t_lo, t_hi):
        """Padded x-interval covering the region over ``[t_lo, t_hi]`` (vectorised)."""
        t_lo = np.asarray(t_lo, dtype=float)
        t_hi = np.asarray(t_hi, dtype=float)
        i0 = np.searchsorted(self.ts, t_lo - self.pad - 0.5 * self.dt, side="left")
        i1 = np.searchsorted(self.ts, t_hi + self.pad + 0.5 * self.dt, side="right")
        lo, hi = self._rmq.query(i0, i1)
        grow = self.pad * np.exp(t_hi)
        return lo - grow, hi + grow

    @property
    def bounding(self) -> LogRectangle | None:
        if self.empty:
            return None
        t0, t1 = self.t_extent
        t_lo, t_hi = t0 - self.pad - self.dt, t1 + self.pad + self.dt
        lo, hi = self.x_span(self.ts, self.ts)
        ok = np.isfinite(lo)
        return LogRectangle.from_bounds(float(lo[ok].min()), float(hi[ok].max()), t_lo, t_hi)


def sublevel_region(model: FieldModel, level: float, *, pad: float | None = None, a0: float = 2.0,
                    delta0: float = 0.35, dt: float = 0.005, ns: int = 1025,
                    s_limit: float = 1e4, t_limit: float = 40.0) -> SublevelRegion:
    """Scan ``{b <= level}`` in ``(s, t)`` with ``s = x e^-t``, growing the scan
    box until the set no longer touches its edge."""
    if pad is None:
        pad = float(adapted_width(max(level, 0.0), a0, delta0))
    S, T = 4.0, 4.0
    while True:
        ts = np.arange(-round(T / dt), round(T / dt) + 1) * dt
        ss = np.linspace(-S, S, ns)
        y = np.exp(ts)[:, None]
        try:
            b = model.intensity(ss[None, :] * y, y)
        except FieldEvaluationError as exc:
            raise TruncationError(f"field evaluation failed while scanning: {exc}") from exc
        mask = b <= level
        touch_s = bool(mask[:, 0].any() or mask[:, -1].any())
        touch_t = bool(mask[0].any() or mask[-1].any())
        if not mask.any() or not (touch_s or touch_t):
            break
        if (touch_s and S >= s_limit) or (touch_t and T >= t_limit):
            raise TruncationError(
                f"sublevel set {{b <= {level:g}}} is unbounded within scan limits |x/y| <= {S:g}, |ln y| <= {T:g}")
        if touch_s:
            S = min(2 * S, s_limit)
        if touch_t:
            T = min(2 * T, t_limit)
    if mask.any():
        # one more pass with the s-window fitted to the set
        cols = np.flatnonzero(mask.any(axis=0))
        ds = ss[1] - ss[0]
        s0, s1 = ss[cols[0]] - ds, ss[cols[-1]] + ds
        ss = np.linspace(s0, s1, ns)
        b = model.intensity(ss[None, :] * y, y)
        mask = b <= level
        ds = ss[1] - ss[0]
    else:
        ds = 0.0
    has = mask.any(axis=1)
    first = np.argmax(mask, axis=1)
    last = ns - 1 - np.argmax(mask[:, ::-1], axis=1)
    e = np.exp(ts)
    xlo = np.where(has, (ss[first] - ds) * e, np.nan)
    xhi = np.where(has, (ss[last] + ds) * e, np.nan)
    return SublevelRegion(float(level), ts, xlo, xhi, float(pad), float(dt))


def truncation_domain(model: FieldModel, lam: float, kappa: float = 2.0, *, a0: float = 2.0,
                      delta0: float = 0.35) -> LogRectangle:
    """Smallest rectangle holding the sampled ``{b <= kappa lam}``, padded by one cell width."""
    if kappa < 1.5:
        raise ValueError("kappa must be at least 1.5")
    reg = sublevel_region(model, kappa * lam, a0=a0, delta0=delta0)
    if reg.empty:
        raise TruncationError(f"sublevel set {{b <= {kappa * lam:g}}} is empty")
    return reg.bounding


# -- adapted partition ----------------------------------------------------------------


@dataclass
class AdaptedPartition:
    """Cells as arrays of clipped bounds plus nominal size ``eps`` (t-side; the
    x-side is ``eps e^alpha2``) and the field at the nominal centre."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    t_lo: np.ndarray
    t_hi: np.ndarray
    eps: np.ndarray
    alpha2: np.ndarray
    b_center: np.ndarray
    a0: float
    delta0: float

    def __len__(self):
        return self.eps.size

    @property
    def cells(self) -> list[LogRectangle]:
        return [LogRectangle.from_bounds(*v) for v in zip(self.x_lo, self.x_hi, self.t_lo, self.t_hi)]

    def area(self) -> float:
        return math.fsum((self.x_hi - self.x_lo) * (self.t_hi - self.t_lo))

    @property
    def eps_min(self) -> float:
        return float(self.eps.min())

    def eps_bounds(self):
        """Admissible ``(lower, upper)`` cell sizes at each nominal centre."""
        d = 1.0 + self.b_center ** self.delta0
        return 1.0 / (self.a0 * d), self.a0 / d


def adapted_partition(domain: LogRectangle, model: FieldModel, a0: float = 2.0, delta0: float = 0.35,
                      region: SublevelRegion | None = None, max_depth: int = 20) -> AdaptedPartition:
    """Tile by ``K(alpha) = e^a2 [a1 - 1/2, a1 + 1/2] x [a2 - 1/2, a2 + 1/2]`` and
    split dyadically until ``eps <= a0 / (1 + b^delta0)`` at each centre.

    Cells are clipped to ``domain``; with a ``region`` only cells meeting it are kept.
    """
    lo_d, hi_d = DELTA0_RANGE
    if not lo_d < delta0 < hi_d:
        raise ValueError(f"delta0 must lie in ({lo_d:.6g}, {hi_d:.6g})")
    if not a0 > 1:
        raise ValueError("a0 must exceed 1")
    xc, tc, a2s = [], [], []
    for a2 in range(math.floor(domain.t_lo + 0.5), math.ceil(domain.t_hi - 0.5) + 1):
        if not (a2 - 0.5 < domain.t_hi and a2 + 0.5 > domain.t_lo):
            continue
        e = math.exp(a2)
        xl, xh = domain.x_lo, domain.x_hi
        if region is not None:
            rl, rh = region.x_span(max(a2 - 0.5, domain.t_lo), min(a2 + 0.5, domain.t_hi))
            if not np.isfinite(rl):
                continue
            xl, xh = max(xl, float(rl)), min(xh, float(rh))
            if xl >= xh:
                continue
        k0 = math.floor(xl / e + 0.5)
        k1 = math.ceil(xh / e - 0.5)
        k = np.arange(k0, k1 + 1)
        xc.append(e * k)
        tc.append(np.full(k.size, float(a2)))
        a2s.append(np.full(k.size, a2))
    if not xc:
        raise ValueError("domain does not meet any tile")
    xc = np.concatenate(xc)
    tc = np.concatenate(tc)
    a2 = np.concatenate(a2s)
    eps = np.ones(xc.size)
    done = []
    for depth in range(max_depth + 1):
        scale = np.exp(a2)
        hx = 0.5 * eps * scale
        ht = 0.5 * eps
        cx0, cx1 = np.maximum(xc - hx, domain.x_lo), np.minimum(xc + hx, domain.x_hi)
        ct0, ct1 = np.maximum(tc - ht, domain.t_lo), np.minimum(tc + ht, domain.t_hi)
        keep = (cx1 > cx0) & (ct1 > ct0)
        if region is not None:
            rl, rh = region.x_span(ct0, ct1)
            keep &= (rl < cx1) & (rh > cx0)
        xc, tc, a2, eps = xc[keep], tc[keep], a2[keep], eps[keep]
        cx0, cx1, ct0, ct1 = cx0[keep], cx1[keep], ct0[keep], ct1[keep]
        try:
            b = model.intensity(xc, np.exp(tc))
        except FieldEvaluationError as exc:
            raise ValueError(f"field not finite at a cell centre: {exc}") from exc
        if not np.all(np.isfinite(b)):
            i = int(np.flatnonzero(~np.isfinite(b))[0])
            raise ValueError(f"field not finite at cell centre x={xc[i]}, t={tc[i]}")
        ok = eps <= a0 / (1.0 + b ** delta0) * (1 + 1e-12)
        done.append((cx0[ok], cx1[ok], ct0[ok], ct1[ok], eps[ok], a2[ok], b[ok]))
        if ok.all():
            break
        if depth == max_depth:
            raise ValueError(f"partition did not resolve within {max_depth} subdivisions")
        sx = 0.25 * eps[~ok] * np.exp(a2[~ok])
        st = 0.25 * eps[~ok]
        xs, ts_ = xc[~ok], tc[~ok]
        xc = np.concatenate([xs - sx, xs + sx, xs - sx, xs + sx])
        tc = np.concatenate([ts_ - st, ts_ - st, ts_ + st, ts_ + st])
        a2 = np.tile(a2[~ok], 4)
        eps = np.tile(0.5 * eps[~ok], 4)
    cols = [np.concatenate(c) for c in zip(*done)]
    return AdaptedPartition(*cols, a0=float(a0), delta0=float(delta0))


def cell_field_ratio(part: AdaptedPartition, model: FieldModel, samples: int = 5) -> np.ndarray:
    """max b / min b over a ``samples x samples`` lattice in each cell."""
    u = (np.arange(samples) + 0.5) / samples
    X = part.x_lo[:, None, None] + (part.x_hi - part.x_lo)[:, None, None] * u[None, :, None]
    T = part.t_lo[:, None, None] + (part.t_hi - part.t_lo)[:, None, None] * u[None, None, :]
    b = model.intensity(X, np.exp(T)).reshape(len(part), -1)
    with np.errstate(divide="ignore"):
        return b.max(axis=1) / b.min(axis=1)


# -- grids ---------------------------------------------------------------------------


@dataclass
class LogGrid:
    """Rows ``t_j`` with lattices ``x0_j + k hx_j`` for ``k in [kl_j, kr_j]``."""

    t: np.ndarray
    hx: np.ndarray
    x0: np.ndarray
    kl: np.ndarray
    kr: np.ndarray
    ht: float
    h: float
    graded: bool = True
    start: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        counts = np.maximum(self.kr - self.kl + 1, 0)
        self.start = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    @property
    def n(self) -> int:
        return int(self.start[-1])

    @property
    def rows(self) -> int:
        return self.t.size

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates in index order (row by row, ``x`` increasing)."""
        counts = np.diff(self.start)
        row = np.repeat(np.arange(self.rows), counts)
        k = np.arange(self.n) - self.start[row] + self.kl[row]
        return self.x0[row] + k * self.hx[row], self.t[row]

    def step_at(self, t: float) -> float:
        """x-step of a row at height ``t`` (also for rows outside the grid)."""
        if not self.graded:
            return float(self.hx[0])
        return float(self.h * 2.0 ** math.floor(t / LN2 + 1e-12))

    def node_step(self) -> np.ndarray:
        counts = np.diff(self.start)
        return np.repeat(self.hx, counts)

    @classmethod
    def uniform(cls, domain: LogRectangle, nx: int, nt: int) -> "LogGrid":
        """``nx x nt`` interior nodes of a tensor grid on ``domain``."""
        hx = 2 * domain.wx / (nx + 1)
        ht = 2 * domain.wt / (nt + 1)
        t = domain.t_lo + ht * np.arange(1, nt + 1)
        return cls(t, np.full(nt, hx), np.full(nt, domain.x_lo), np.ones(nt, dtype=np.int64),
                   np.full(nt, nx, dtype=np.int64), ht, min(hx, ht), graded=False)

    def describe(self) -> dict:
        return {"n": self.n, "rows": self.rows, "ht": self.ht, "h": self.h, "graded": self.graded,
                "t_lo": float(self.t[0]) if self.rows else None, "t_hi": float(self.t[-1]) if self.rows else None,
                "hx_min": float(self.hx.min()) if self.rows else None, "hx_max": float(self.hx.max()) if self.rows else None}


def graded_grid(domain: LogRectangle, h: float, region: SublevelRegion | None = None) -> LogGrid:
    """Graded grid with local ``s``-step in ``(h/2, h]`` and row step ``h``."""
    j0 = math.ceil(domain.t_lo / h)
    j1 = math.floor(domain.t_hi / h)
    t = h * np.arange(j0, j1 + 1)
    m = np.floor(t / LN2 + 1e-12)
    hx = h * 2.0 ** m
    if region is None:
        xl = np.full(t.size, domain.x_lo)
        xh = np.full(t.size, domain.x_hi)
    else:
        xl, xh = region.x_span(t, t)
        xl = np.maximum(xl, domain.x_lo)
        xh = np.minimum(xh, domain.x_hi)
    with np.errstate(invalid="ignore"):
        kl = np.where(np.isfinite(xl), np.ceil(xl / hx), 1).astype(np.int64)
        kr = np.where(np.isfinite(xh), np.floor(xh / hx), 0).astype(np.int64)
    return LogGrid(t, hx, np.zeros(t.size), kl, kr, float(h), float(h), graded=True)


def plaquette_flux(model: FieldModel, grid: LogGrid) -> float:
    """Largest ``b e^-t hx ht`` over the nodes (flux of the ``(x, t)`` field per cell)."""
    if grid.n == 0:
        return 0.0
    x, t = grid.nodes()
    b = model.intensity(x, np.exp(t))
    return float(np.max(b * np.exp(-t) * grid.node_step() * grid.ht))


def flux_area_cap(density: float) -> float:
    """Largest ``hx ht`` keeping ``density hx ht <= pi/2``."""
    return FLUX_CAP / density


def _estimate_nodes(domain, h, region):
    j0, j1 = math.ceil(domain.t_lo / h), math.floor(domain.t_hi / h)
    t = h * np.arange(j0, j1 + 1)
    hx = h * 2.0 ** np.floor(t / LN2 + 1e-12)
    if region is None:
        w = np.full(t.size, domain.x_hi - domain.x_lo)
    else:
        lo, hi = region.x_span(t, t)
        w = np.where(np.isfinite(lo), np.minimum(hi, domain.x_hi) - np.maximum(lo, domain.x_lo), 0.0)
    return float(np.sum(np.maximum(w, 0) / hx + 1))


def build_mesh(domain: LogRectangle, partition: AdaptedPartition, model: FieldModel | None = None, *,
               region: SublevelRegion | None = None, ppc: int = 8, h: float | None = None,
               h_cap: float | None = None, max_nodes: int = 4_000_000, graded: bool = True) -> LogGrid:
    """Choose steps from the partition and the flux cap, then lay out the grid.

    Graded: the finest cell centred in the region gets ``ppc`` points per side
    (``h = eps/(ppc-1)``),
    then ``h`` shrinks until every plaquette carries flux ``<= pi/2``.  An
    explicit ``h`` is used as given (and must satisfy the flux cap).
    Uniform (``graded=False``): one tensor grid over ``domain``; ``ht`` from the
    finest t-side, ``hx`` from the finest x-side, then ``hx`` reduced for flux.
    """
    if ppc < 2:
        raise ValueError("ppc must be at least 2")
    if not graded:
        ht = partition.eps_min / (ppc - 1)
        hx = float(np.min(partition.x_hi - partition.x_lo)) / (ppc - 1)
        if h_cap is not None:
            ht, hx = min(ht, h_cap), min(hx, h_cap)
        if model is not None:
            tt = np.linspace(domain.t_lo, domain.t_hi, 257)
            xx = np.linspace(domain.x_lo, domain.x_hi, 257)
            rho = float(np.max(model.intensity(xx[None, :], np.exp(tt)[:, None]) * np.exp(-tt)[:, None]))
            if rho * hx * ht > FLUX_CAP:
                hx = flux_area_cap(rho) / ht
        nx = max(1, math.ceil(2 * domain.wx / hx) - 1)
        nt = max(1, math.ceil(2 * domain.wt / ht) - 1)
        if nx * nt > max_nodes:
            raise MeshTooLarge(f"grid of {nx * nt} nodes exceeds the mesh cap max_nodes={max_nodes}")
        return LogGrid.uniform(domain, nx, nt)
    explicit = h is not None
    if h is None:
        eps = partition.eps
        if region is not None and np.any(partition.b_center <= region.level):
            # padding cells centred outside the sublevel set do not set the resolution
            eps = eps[partition.b_center <= region.level]
        h = float(eps.min()) / (ppc - 1)
        if h_cap is not None:
            h = min(h, h_cap)
    for _ in range(20):
        est = _estimate_nodes(domain, h, region)
        if est > max_nodes:
            raise MeshTooLarge(f"grid of about {int(est)} nodes exceeds the mesh cap max_nodes={max_nodes}")
        grid = graded_grid(domain, h, region)
        if model is None:
            return grid
        flux = plaquette_flux(model, grid)
        if flux <= FLUX_CAP:
            return grid
        if explicit:
            raise ValueError(f"plaquette flux {flux:.4g} exceeds pi/2 at the requested step h={h:g}")
        h *= 0.99 * math.sqrt(FLUX_CAP / flux)
    raise RuntimeError("could not satisfy the flux cap")


# -- discrete form ---------------------------------------------------------------------


@dataclass
class MeshForm:
    """Terms ``weight |sum_p coef_p e^(-i phase_p) u_p|^2`` plus ``shift * mass |u|^2``."""

    grid: LogGrid
    links: LinkPhases
    coef: np.ndarray
    weight: np.ndarray
    mass: np.ndarray
    shift: float = 0.25

    @property
    def n(self) -> int:
        return self.mass.size


def _row_index(grid: LogGrid, j: int, k: np.ndarray) -> np.ndarray:
    if j < 0 or j >= grid.rows:
        return np.full(k.shape, -1, dtype=np.int64)
    ok = (k >= grid.kl[j]) & (k <= grid.kr[j])
    return np.where(ok, grid.start[j] + (k - grid.kl[j]), -1)


def _hull(*ranges):
    lo = [a for a, b in ranges if a <= b]
    hi = [b for a, b in ranges if a <= b]
    if not lo:
        return np.empty(0, dtype=np.int64)
    return np.arange(min(lo), max(hi) + 1, dtype=np.int64)


def sample_link_potential(grid: LogGrid, potential=None, weight_fn=None) -> MeshForm:
    """Build the discrete form on ``grid``.

    ``potential`` is a :class:`MagneticPotential`, a callable ``(x, t) -> At1`` or
    ``None`` (zero).  ``weight_fn(t)`` replaces the ``e^(2t)`` weight of the
    ``x``-derivative term (for tests).
    """
    if potential is None:
        def a1(x, t):
            return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(t)))
    elif isinstance(potential, MagneticPotential):
        a1 = potential.a1_log
    else:
        a1 = potential
    if weight_fn is None:
        def weight_fn(t):
            return np.exp(2 * t)
    ht = grid.ht
    nodes, coef, phase, xlen, wts = [], [], [], [], []
    midx, midt, midl, slot = [], [], [], []  # deferred potential samples
    count = 0

    def add(nd, cf, w, xl):
        nonlocal count
        keep = (nd >= 0).any(axis=1)
        nodes.append(nd[keep])
        coef.append(cf[keep])
        wts.append(w[keep] if np.ndim(w) else np.full(int(keep.sum()), float(w)))
        xlen.append(xl[keep])
        phase.append(np.zeros((int(keep.sum()), 3)))
        count += int(keep.sum())
        return keep

    for j in range(grid.rows):
        kl, kr = int(grid.kl[j]), int(grid.kr[j])
        hx = float(grid.hx[j])
        if kl <= kr:
            k = np.arange(kl - 1, kr + 1, dtype=np.int64)
            nd = np.stack([_row_index(grid, j, k), _row_index(grid, j, k + 1), np.full(k.size, -1)], axis=1)
            cf = np.tile([1.0, -1.0, 0.0], (k.size, 1))
            base = count
            keep = add(nd, cf, ht * float(weight_fn(grid.t[j])) / hx, np.full(k.size, hx))
            xm = grid.x0[j] + (k[keep] + 0.5) * hx
            midx.append(xm)
            midt.append(np.full(xm.size, grid.t[j]))
            midl.append(np.full(xm.size, hx))
            slot.append(np.stack([base + np.arange(xm.size), np.ones(xm.size, dtype=np.int64)], axis=1))
    # vertical terms between rows j and j + 1, including the virtual rows -1 and J
    # virtual rows take the step the grid would have there, so that a grid
    # restricted to a smaller domain gives a principal submatrix
    for j in range(-1, grid.rows):
        lo_ok, up_ok = j >= 0, j + 1 < grid.rows
        hl = float(grid.hx[j]) if lo_ok else grid.step_at(grid.t[0] - ht)
        hu = float(grid.hx[j + 1]) if up_ok else grid.step_at(grid.t[-1] + ht)
        rl = (int(grid.kl[j]), int(grid.kr[j])) if lo_ok else (1, 0)
        ru = (int(grid.kl[j + 1]), int(grid.kr[j + 1])) if up_ok else (1, 0)
        ratio = hu / hl
        if abs(ratio - 1) < 1e-12:
            k = _hull(rl, ru)
            if k.size == 0:
                continue
            nd = np.stack([_row_index(grid, j, k), _row_index(grid, j + 1, k), np.full(k.size, -1)], axis=1)
            cf = np.tile([1.0, -1.0, 0.0], (k.size, 1))
            add(nd, cf, hl / ht, np.zeros(k.size))
        elif abs(ratio - 2) < 1e-12:
            if lo_ok and up_ok and grid.x0[j] != grid.x0[j + 1]:
                raise ValueError("nested rows must share the lattice origin")
            k = _hull(rl, (2 * ru[0] - 1, 2 * ru[1] + 1) if up_ok else (1, 0))
            if k.size == 0:
                continue
            even = k % 2 == 0
            ke, ko = k[even], k[~even]
            nd = np.stack([_row_index(grid, j, ke), _row_index(grid, j + 1, ke // 2), np.full(ke.size, -1)], axis=1)
            add(nd, np.tile([1.0, -1.0, 0.0], (ke.size, 1)), hl / ht, np.zeros(ke.size))
            nd = np.stack([_row_index(grid, j, ko), _row_index(grid, j + 1, (ko - 1) // 2),
                           _row_index(grid, j + 1, (ko + 1) // 2)], axis=1)
            base = count
            keep = add(nd, np.tile([1.0, -0.5, -0.5], (ko.size, 1)), hl / ht, np.full(ko.size, -hl))
            if not up_ok:
                continue  # coarse nodes all absent, phases irrelevant
            x = grid.x0[j + 1] + ko[keep] * hl
            tu = float(grid.t[j + 1])
            idx = base + np.arange(x.size)
            midx += [x - 0.5 * hl, x + 0.5 * hl]
            midt += [np.full(x.size, tu)] * 2
            midl += [np.full(x.size, -hl), np.full(x.size, hl)]
            slot += [np.stack([idx, np.full(x.size, 1)], axis=1), np.stack([idx, np.full(x.size, 2)], axis=1)]
        else:
            raise ValueError(f"row step ratio {ratio} not supported")
    nodes = np.concatenate(nodes) if nodes else np.empty((0, 3), dtype=np.int64)
    coef = np.concatenate(coef) if coef else np.empty((0, 3))
    phase = np.concatenate(phase) if phase else np.empty((0, 3))
    xlen = np.concatenate(xlen) if xlen else np.empty(0)
    wts = np.concatenate(wts) if wts else np.empty(0)
    if midx:
        mx, mt, ml = np.concatenate(midx), np.concatenate(midt), np.concatenate(midl)
        sl = np.concatenate(slot)
        phase[sl[:, 0], sl[:, 1]] = a1(mx, mt) * ml
    counts = np.diff(grid.start)
    mass = np.repeat(grid.hx * grid.ht, counts)
    return MeshForm(grid, LinkPhases(nodes, phase, xlen), coef, wts, mass)


def assemble_from_form(form: MeshForm, **provenance) -> DiscreteOperator:
    """``M^-1/2 Q M^-1/2 + shift`` with ``Q`` from the terms and ``M`` the lumped mass."""
    n = form.n
    nodes = form.links.nodes
    g = form.coef * np.exp(-1j * form.links.phase)
    present = nodes >= 0
    g = np.where(present, g, 0)
    w = form.weight
    diag = np.zeros(n)
    for p in range(3):
        sel = present[:, p]
        np.add.at(diag, nodes[sel, p], w[sel] * np.abs(g[sel, p]) ** 2)
    rows, cols, vals = [], [], []
    for p, q in ((0, 1), (0, 2), (1, 2)):
        sel = present[:, p] & present[:, q]
        a, b = nodes[sel, p], nodes[sel, q]
        v = w[sel] * np.conj(g[sel, p]) * g[sel, q]
        swap = a > b
        rows.append(np.where(swap, b, a))
        cols.append(np.where(swap, a, b))
        vals.append(np.where(swap, np.conj(v), v))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    if np.any(r == c):
        raise ValueError("a term couples a node to itself")
    s = 1.0 / np.sqrt(form.mass)
    upper = sp.coo_matrix((v * s[r] * s[c], (r, c)), shape=(n, n))
    mat = hermitian_from_upper(upper, diag / form.mass + form.shift)
    return DiscreteOperator(mat, form.grid.describe(), dict(provenance))


def assemble_operator(model: FieldModel, grid: LogGrid, base_y: float = 1.0) -> DiscreteOperator:
    pot = MagneticPotential(model, base_y=base_y)
    form = sample_link_potential(grid, pot)
    return assemble_from_form(form, model=model.name or model.kind, gauge_base=base_y)


def node_gauge(grid: LogGrid, phi) -> np.ndarray:
    """Sample a function ``phi(x, t)`` on the nodes."""
    x, t = grid.nodes()
    return np.asarray(phi(x, t), dtype=float)


# -- pipeline -------------------------------------------------------------------------


@dataclass
class SolverPolicy:
    kappa: float = 2.0
    a0: float = 2.0
    delta0: float = 0.35
    ppc: int = 8
    h: float | None = None
    h_cap: float | None = None
    max_nodes: int = 4_000_000
    refine: bool = True
    enlarge: bool = True
    method: str = "auto"
    check_growth: bool = True

    def __post_init__(self):
        if self.kappa < 1.5:
            raise ValueError("kappa must be at least 1.5")
        lo, hi = DELTA0_RANGE
        if not lo < self.delta0 < hi:
            raise ValueError("delta0 must lie in (1/3, 2/5)")
        if not self.a0 > 1:
            raise ValueError("a0 must exceed 1")


@dataclass
class Discretization:
    region: SublevelRegion
    domain: LogRectangle
    partition: AdaptedPartition
    grid: LogGrid
    operator: DiscreteOperator


def discretize(model: FieldModel, lam: float, policy: SolverPolicy, *, kappa: float | None = None,
               h: float | None = None) -> Discretization | None:
    """Run truncation -> partition -> mesh -> assembly.  ``None`` when the sublevel set is empty."""
    kappa = policy.kappa if kappa is None else kappa
    stage = "truncation"
    try:
        region = sublevel_region(model, kappa * lam, a0=policy.a0, delta0=policy.delta0)
        if region.empty:
            return None
        domain = region.bounding
        stage = "partition"
        part = adapted_partition(domain, model, policy.a0, policy.delta0, region=region)
        stage = "mesh"
        grid = build_mesh(domain, part, model, region=region, ppc=policy.ppc,
                          h=h if h is not None else policy.h, h_cap=policy.h_cap, max_nodes=policy.max_nodes)
        stage = "assembly"
        op = assemble_operator(model, grid)
    except PipelineError:
        raise
    except (TruncationError, MeshTooLarge, ValueError, FieldEvaluationError, RuntimeError) as exc:
        raise PipelineError(stage, str(exc)) from exc
    op.provenance.update(kappa=kappa, lam=lam)
    return Discretization(region, domain, part, grid, op)


@dataclass
class HyperbolicCount:
    lam: float
    N: int
    N_err_domain: int | None
    N_err_mesh: int | None
    n: int
    h: float | None
    method: str
    shift_jitter_applied: bool
    label: str = LABEL
    runs: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"lambda": self.lam, "N": self.N, "N_err_domain": self.N_err_domain, "N_err_mesh": self.N_err_mesh,
                "n": self.n, "h": self.h, "method": self.method, "shift_jitter_applied": self.shift_jitter_applied,
                "label": self.label, "runs": self.runs, "warnings": self.warnings}


def _count(d: Discretization | None, lam: float, method: str) -> tuple[CountResult, dict]:
    t0 = time.perf_counter()
    if d is None:
        res = CountResult(lam, 0, "empty-sublevel")
        info = {"n": 0}
    else:
        try:
            res = inertia_count(d.operator, lam, method=method)
        except Exception as exc:  # noqa: BLE001 - stage tagging
            raise PipelineError("count", str(exc)) from exc
        info = {**d.grid.describe(), "cells": len(d.partition), "kappa": d.operator.provenance.get("kappa")}
    info.update(N=res.N, method=res.method, jitter=res.shift_jitter_applied, seconds=round(time.perf_counter() - t0, 3))
    return res, info


def count_eigenvalues(model: FieldModel, lam: float, policy: SolverPolicy | None = None,
                      keep_operator: bool = False) -> HyperbolicCount:
    """``N(lam)`` for the Dirichlet-truncated discretisation, with a domain
    enlargement (``kappa -> 2 kappa``) and a mesh halving as error indicators."""
    policy = policy or SolverPolicy()
    warnings = []
    if lam <= 0.25:
        # the form is bounded below by 1/4, discretely as well
        return HyperbolicCount(lam, 0, 0, 0, 0, None, "form-bound", False, warnings=warnings)
    if policy.check_growth:
        rep = verify_bottle_conditions(model)
        if not rep.growth_ok:
            warnings.append("sampled growth condition failed; truncation may be unreliable")
            log.warning("growth check failed for %s", model.name)
    base = discretize(model, lam, policy)
    res, info = _count(base, lam, policy.method)
    runs = {"base": info}
    h = base.grid.h if base is not None else None
    n_dom = n_mesh = None
    if policy.enlarge:
        big = discretize(model, lam, policy, kappa=2 * policy.kappa, h=h)
        r2, runs["enlarged"] = _count(big, lam, policy.method)
        n_dom = r2.N - res.N
        del big
    if policy.refine and h is not None:
        fine = discretize(model, lam, policy, h=h / 2)
        r3, runs["refined"] = _count(fine, lam, policy.method)
        n_mesh = r3.N - res.N
        del fine
    out = HyperbolicCount(lam, res.N, n_dom, n_mesh, base.grid.n if base else 0, h, res.method,
                          res.shift_jitter_applied, runs=runs, warnings=warnings)
    if keep_operator:
        out.runs["operator"] = base.operator if base else None
    return out

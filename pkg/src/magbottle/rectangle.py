"""Constant magnetic field in the Euclidean plane: density of states and
Dirichlet rectangles.

``H0 = (D_x - b y/2)^2 + (D_y + b x/2)^2`` on ``]-R1/2, R1/2[ x ]-R2/2, R2/2[``
with Dirichlet conditions.  The Landau levels are ``(2n+1) b`` and the
density of states is ``b/(2 pi)`` per level below ``lam``.
"""
from __future__ import annotations

import csv
import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .discrete import DiscreteOperator, hermitian_from_upper
from .eigencount import inertia_count
from .kernels import sturm_count

FLUX_CAP = math.pi / 2


def landau_count(b: float, lam: float) -> int:
    """``#{n >= 0 : (2n+1) b < lam}`` with a strict inequality.

    Evaluated exactly on the binary values of ``b`` and ``lam``: a product
    ``(2n+1) b`` that rounds onto ``lam`` but lies below it is counted.
    """
    if not b > 0:
        raise ValueError("b must be positive")
    if not lam > b:
        return 0
    if math.isinf(lam):
        raise ValueError("lam must be finite")
    q = (Fraction(lam) - Fraction(b)) / (2 * Fraction(b))
    return math.ceil(q)


def dos_constant_field(b: float, lam: float) -> float:
    return b / (2 * math.pi) * landau_count(b, lam)


# -- discrete rectangle -------------------------------------------------------


@dataclass(frozen=True)
class RectProblem:
    b: float
    R1: float
    R2: float
    h1: float
    h2: float

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("b must be nonnegative")
        if not (self.R1 > 0 and self.R2 > 0):
            raise ValueError("side lengths must be positive")
        if not (self.h1 > 0 and self.h2 > 0):
            raise ValueError("mesh steps must be positive")
        flux = self.b * self.h1 * self.h2
        if flux > FLUX_CAP:
            raise ValueError(f"plaquette flux {flux:.4g} exceeds pi/2; refine the mesh")

    @classmethod
    def square(cls, b: float, R: float, h: float) -> "RectProblem":
        return cls(b, R, R, h, h)

    @property
    def shape(self) -> tuple[int, int]:
        """Interior node counts along x and y."""
        return (max(0, int(round(self.R1 / self.h1)) - 1), max(0, int(round(self.R2 / self.h2)) - 1))

    @property
    def area(self) -> float:
        return self.R1 * self.R2


def assemble_rect_operator(prob: RectProblem) -> DiscreteOperator:
    """Five-point magnetic Laplacian with Peierls phases, Dirichlet outside.

    Gauge ``A = (b y/2, -b x/2)``; the link from node ``p`` to ``p + e`` carries
    ``exp(-i A(mid) . e)`` with ``A`` sampled at the link midpoint, which is
    exact here since ``A`` is linear.
    """
    nx, ny = prob.shape
    h1, h2, b = prob.h1, prob.h2, prob.b
    x = -prob.R1 / 2 + h1 * np.arange(1, nx + 1)
    y = -prob.R2 / 2 + h2 * np.arange(1, ny + 1)
    idx = np.arange(nx * ny).reshape(nx, ny)
    X, Y = np.meshgrid(x, y, indexing="ij")
    rows, cols, vals = [], [], []
    # x-links (i, j) -> (i+1, j)
    th = (b * Y[:-1, :] / 2) * h1
    rows.append(idx[:-1, :].ravel())
    cols.append(idx[1:, :].ravel())
    vals.append((-np.exp(-1j * th) / h1 ** 2).ravel())
    # y-links (i, j) -> (i, j+1)
    th = (-b * X[:, :-1] / 2) * h2
    rows.append(idx[:, :-1].ravel())
    cols.append(idx[:, 1:].ravel())
    vals.append((-np.exp(-1j * th) / h2 ** 2).ravel())
    n = nx * ny
    upper = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    diag = np.full(n, 2 / h1 ** 2 + 2 / h2 ** 2)
    mat = hermitian_from_upper(upper, diag)
    grid = {"kind": "rectangle", "nx": nx, "ny": ny, "h1": h1, "h2": h2, "R1": prob.R1, "R2": prob.R2, "b": b}
    return DiscreteOperator(mat, grid, {"gauge": "symmetric"})


# -- bounds ----------------------------------------------------------------------


@dataclass
class RectBounds:
    cdv_upper: float
    cdv_lower: float | None
    weyl_lower: float | None
    weyl_upper: float | None
    binding: dict = field(default_factory=dict)


def rectangle_bounds(lam: float, b: float, R, eps: float | None = None, C0: float | None = None) -> RectBounds:
    """Colin de Verdiere upper/lower bounds and the two-sided Weyl band.

    The lower bound needs ``eps`` and ``C0``, the Weyl band needs ``C0``.  Each
    bound's hypotheses are checked and reported in ``binding``; the values are
    returned either way.
    """
    if not (b > 0 and lam > 0):
        raise ValueError("need b > 0 and lam > 0")
    R1, R2 = (float(r) for r in R)
    area = R1 * R2
    rmin = min(R1, R2)
    upper = b * area / (2 * math.pi) * landau_count(b, lam)
    binding = {"cdv_upper": lam > 1}
    lower = wl = wu = None
    if eps is not None and C0 is not None:
        if not 0 < eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        lam_red = lam - C0 / (eps * rmin) ** 2
        lower = (1 - eps) ** 2 * b * area / (2 * math.pi) * landau_count(b, lam_red)
        binding["cdv_lower"] = bool(0 < b < lam and 1 <= math.sqrt(b) * rmin)
    if C0 is not None:
        corr = C0 * math.sqrt(b / lam)
        wl = area / (4 * math.pi) * lam * (1 - corr)
        wu = area / (4 * math.pi) * lam * (1 + corr)
        binding["weyl"] = bool(0 <= b <= lam and C0 > 0 and all(1 / (C0 * math.sqrt(b)) <= r for r in (R1, R2)))
    return RectBounds(upper, lower, wl, wu, binding)


def _round_down(q: Fraction) -> float:
    x = float(q)
    return x if Fraction(x) <= q else math.nextafter(x, -math.inf)


def _round_up(q: Fraction) -> float:
    x = float(q)
    return x if Fraction(x) >= q else math.nextafter(x, math.inf)


def level_count_bracket(b: float, lam: float) -> tuple[float, float, float]:
    """``((lam-b)/2, b * count, (lam+b)/2)``; the middle value lies between the others.

    The outer values are rounded outward, the middle one to nearest, so the
    ordering survives floating point.
    """
    B, L = Fraction(b), Fraction(lam)
    return _round_down((L - B) / 2), b * landau_count(b, lam), _round_up((L + B) / 2)


# -- harmonic fibers -------------------------------------------------------------


def harmonic_cutoff(R: float, lam: float) -> float:
    """Fibers with ``|k|`` above this have no eigenvalue below ``lam``."""
    return (R * math.sqrt(max(lam, 0.0)) + R * R / 2) / (2 * math.pi)


def _harmonic_values(k: int, R: float, n: int, top: float) -> np.ndarray:
    h = R / (n + 1)
    x = -R / 2 + h * np.arange(1, n + 1)
    d = 2 / h ** 2 + (2 * k * math.pi / R + x) ** 2
    e = np.full(n - 1, -1 / h ** 2)
    cnt = int(sturm_count(d, e, [top])[0])
    if cnt == 0:
        return np.empty(0)
    return eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, cnt - 1))


def fiber_harmonic_count(k: int, R: float, lam: float, h: float = 0.01) -> int:
    """``N(lam)`` for ``D_x^2 + (2 k pi / R + x)^2`` on ``]-R/2, R/2[`` (Dirichlet).

    Eigenvalues on steps ``h`` and ``h/2`` are Richardson-extrapolated before
    counting.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    if abs(k) > harmonic_cutoff(R, lam):
        return 0
    n = max(4, int(round(R / h)) - 1)
    top = lam + 1.0
    coarse = _harmonic_values(k, R, n, top)
    fine = _harmonic_values(k, R, 2 * n + 1, top)
    m = min(coarse.size, fine.size)
    ext = (4 * fine[:m] - coarse[:m]) / 3
    return int(np.sum(ext < lam))


# -- convergence scan ------------------------------------------------------------


@dataclass
class ScanRow:
    b: float
    R1: float
    R2: float
    h: float
    lam: float
    N: int
    N_over_area: float
    dos: float
    cdv_upper: float


def dos_convergence_scan(b: float, lam: float, radii, h: float = 0.125, method: str = "auto") -> list[ScanRow]:
    """Normalised Dirichlet counts on squares of side ``R`` for each ``R``."""
    for n in range(landau_count(b, lam + 1e-3) + 1):
        if abs(lam - (2 * n + 1) * b) < 1e-3:
            raise ValueError(f"lam={lam} is within 1e-3 of the Landau level {(2 * n + 1) * b}")
    out = []
    dos = dos_constant_field(b, lam)
    for R in radii:
        steps = int(round(R / h))
        hh = R / steps
        op = assemble_rect_operator(RectProblem.square(b, R, hh))
        N = inertia_count(op, lam, method=method).N
        area = R * R
        out.append(ScanRow(b, R, R, hh, lam, N, N / area, dos, dos * area))
    return out


RECT_CSV_HEADER = ["b", "R1", "R2", "h", "lambda", "N", "N_over_area", "dos", "cdv_upper"]


def write_rect_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECT_CSV_HEADER)
        for r in rows:
            w.writerow([f"{r.b:.12g}", f"{r.R1:.12g}", f"{r.R2:.12g}", f"{r.h:.12g}", f"{r.lam:.12g}",
                        r.N, f"{r.N_over_area:.12g}", f"{r.dos:.12g}", f"{r.cdv_upper:.12g}"])

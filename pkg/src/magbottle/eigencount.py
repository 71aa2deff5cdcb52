"""Counting eigenvalues below a level and computing the lowest eigenpairs.

``N(lam; H)`` is the number of eigenvalues strictly below ``lam``.  It is read
off from the inertia of ``H - lam I``: the number of negative pivots in a
symmetric-indefinite triangular factorisation (Sylvester's law).  Three
factorisation routes share that contract:

* ``dense``  LAPACK Bunch-Kaufman (``?hetrf`` via ``scipy.linalg.ldl``);
* ``band``   reverse Cuthill-McKee ordering, then the banded LDL^H kernel in
             :mod:`magbottle.kernels` (1x1 / adjacent 2x2 pivots);
* ``sparse`` SuperLU restricted to diagonal pivots with a symmetric
             fill-reducing ordering, so ``U = D L^H``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

from . import kernels
from .discrete import DiscreteOperator

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-12
JITTER = 1e-9
MAX_JITTERS = 3
DENSE_MAX = 2000


class FactorizationBreakdown(RuntimeError):
    pass


@dataclass
class CountResult:
    lam: float
    N: int
    method: str
    shift_jitter_applied: bool = False
    lam_used: float | None = None
    min_pivot: float = float("nan")
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lam_used is None:
            self.lam_used = self.lam


def _as_op(H) -> DiscreteOperator:
    if isinstance(H, DiscreteOperator):
        return H
    return DiscreteOperator.from_matrix(H)


# -- factorisation routes ----------------------------------------------------


def _dense_inertia(a: np.ndarray) -> tuple[int, float]:
    if np.iscomplexobj(a):
        # rounding can leave imaginary dust on the diagonal; the Hermitian part is meant
        np.fill_diagonal(a, a.diagonal().real)
    _, d, _ = sla.ldl(a, lower=True, hermitian=True)
    n = d.shape[0]
    neg = 0
    minpiv = np.inf
    k = 0
    while k < n:
        if k + 1 < n and d[k + 1, k] != 0:
            blk = d[k:k + 2, k:k + 2]
            w = np.linalg.eigvalsh(blk)
            neg += int(np.sum(w < 0))
            minpiv = min(minpiv, float(np.abs(w).min()))
            k += 2
        else:
            p = d[k, k].real
            neg += p < 0
            minpiv = min(minpiv, abs(p))
            k += 1
    return int(neg), float(minpiv)


def rcm_band(op: DiscreteOperator) -> tuple[np.ndarray, int]:
    """Reverse Cuthill-McKee permutation and resulting half-bandwidth (cached)."""
    if "rcm" not in op.cache:
        a = op.matrix.tocsr()
        perm = reverse_cuthill_mckee(sp.csr_matrix(abs(a)), symmetric_mode=True)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        coo = a.tocoo()
        bw = int(np.abs(inv[coo.row] - inv[coo.col]).max()) if coo.nnz else 0
        op.cache["rcm"] = (perm, bw)
    return op.cache["rcm"]


def _band_storage(a: sp.spmatrix, perm: np.ndarray, bw: int, shift: float) -> np.ndarray:
    n = a.shape[0]
    inv = np.empty_like(perm)
    inv[perm] = np.arange(n)
    coo = a.tocoo()
    r, c = inv[coo.row], inv[coo.col]
    low = r >= c
    ab = np.zeros((bw + 1, n), dtype=np.complex128)
    ab[r[low] - c[low], c[low]] = coo.data[low]
    ab[0] -= shift
    return ab


def _band_inertia(op: DiscreteOperator, lam: float) -> tuple[int, float]:
    perm, bw = rcm_band(op)
    ab = _band_storage(op.matrix, perm, bw, lam)
    return kernels.band_inertia(ab)


def _sparse_inertia(op: DiscreteOperator, lam: float) -> tuple[int, float]:
    a = (op.matrix - lam * sp.identity(op.n, dtype=np.complex128, format="csr")).tocsc()
    try:
        lu = spla.splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError:
        return 0, 0.0
    if not np.array_equal(lu.perm_r, lu.perm_c):
        # an off-diagonal pivot was forced: treat as a near-singular shift
        return 0, 0.0
    d = lu.U.diagonal()
    return int(np.sum(d.real < 0)), float(np.abs(d).min())


def choose_method(op: DiscreteOperator) -> str:
    if op.n <= 1000:
        return "dense"
    _, bw = rcm_band(op)
    if op.n * float(bw) ** 2 <= 3e8:
        return "band"
    return "sparse"


def inertia_count(H, lam: float, method: str = "auto") -> CountResult:
    """Number of eigenvalues of ``H`` strictly below ``lam``.

    When a pivot is smaller than ``1e-12 ||H||`` the level is nudged down by
    ``1e-9 ||H||`` (recorded in the result) and the factorisation repeated;
    a downward nudge keeps eigenvalues sitting exactly at ``lam`` uncounted.
    """
    op = _as_op(H)
    if op.n == 0:
        return CountResult(lam, 0, "empty")
    if method == "auto":
        method = choose_method(op)
    norm = max(op.norm, abs(lam), 1e-300)
    lam_used = float(lam)
    for attempt in range(MAX_JITTERS + 1):
        if method == "dense":
            if op.n > DENSE_MAX * 4:
                raise ValueError(f"dense route refused for n={op.n}")
            a = op.matrix.toarray() - lam_used * np.eye(op.n)
            neg, minpiv = _dense_inertia(a)
        elif method == "band":
            neg, minpiv = _band_inertia(op, lam_used)
        elif method == "sparse":
            neg, minpiv = _sparse_inertia(op, lam_used)
        else:
            raise ValueError(f"unknown method {method!r}")
        if minpiv >= PIVOT_TOL * norm:
            return CountResult(float(lam), int(neg), method, attempt > 0, lam_used, minpiv,
                               {"n": op.n, **{k: v for k, v in op.grid.items() if np.isscalar(v)}})
        log.debug("tiny pivot %.3g at lam=%.17g, nudging", minpiv, lam_used)
        lam_used -= JITTER * norm
    raise FactorizationBreakdown(f"pivot below {PIVOT_TOL:g}*||H|| after {MAX_JITTERS} nudges near lam={lam}")


# -- dense oracle ---------------------------------------------------------------


def dense_spectrum(H) -> np.ndarray:
    """Full ascending spectrum: Householder tridiagonalisation + implicit QR (LAPACK ``?heev``)."""
    op = _as_op(H)
    if op.n > DENSE_MAX:
        raise ValueError(f"dense_spectrum limited to n <= {DENSE_MAX}, got {op.n}")
    if op.n == 0:
        return np.empty(0)
    return sla.eigvalsh(op.matrix.toarray(), driver="ev")


# -- Lanczos ------------------------------------------------------------------


@dataclass
class Eigenpairs:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    converged: bool
    iterations: int
    shift: float


def lowest_eigenpairs(H, k: int, *, shift: float | None = None, tol: float = 1e-8,
                      seed: int | None = 0, max_dim: int | None = None) -> Eigenpairs:
    """``k`` lowest eigenpairs by shift-invert Lanczos with full reorthogonalisation.

    The shift sits below the Gershgorin bound so ``(H - shift)^-1`` is positive
    definite and its largest eigenvalues are the wanted ones.  A pair is
    accepted when ``||H v - theta v|| <= tol ||H||``; the block of accepted
    values is confirmed to be the lowest one by an inertia count.
    """
    op = _as_op(H)
    n = op.n
    if k < 1 or k > max(1, n // 4):
        raise ValueError(f"k must be in [1, n/4] (n={n})")
    norm = op.norm
    if shift is None:
        shift = op.gershgorin_lower() - 1e-3 * max(norm, 1.0)
    a = (op.matrix - shift * sp.identity(n, format="csr")).tocsc()
    lu = spla.splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
    rng = np.random.default_rng(seed)
    if max_dim is None:
        max_dim = min(n, max(20 * k, 200))
    V = np.zeros((n, max_dim + 1), dtype=np.complex128)
    alpha = np.zeros(max_dim)
    beta = np.zeros(max_dim)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    V[:, 0] = v / np.linalg.norm(v)
    m = 0
    check_every = max(5, k)
    result = None
    while m < max_dim:
        w = lu.solve(V[:, m])
        alpha[m] = np.vdot(V[:, m], w).real
        # full reorthogonalisation, twice
        for _ in range(2):
            w -= V[:, : m + 1] @ (V[:, : m + 1].conj().T @ w)
        beta[m] = np.linalg.norm(w)
        m += 1
        if beta[m - 1] < 1e-14 or m == max_dim or (m >= k and m % check_every == 0):
            theta, s = sla.eigh_tridiagonal(alpha[:m], beta[: m - 1])
            top = np.argsort(theta)[::-1][:k]
            mu = theta[top]
            vals = shift + 1.0 / mu
            order = np.argsort(vals)
            top, vals = top[order], vals[order]
            X = V[:, :m] @ s[:, top]
            X /= np.linalg.norm(X, axis=0)
            R = op.matrix @ X - X * vals
            res = np.linalg.norm(R, axis=0)
            ok = bool(np.all(res <= tol * max(norm, 1e-300)))
            result = Eigenpairs(vals, X, res, ok, m, shift)
            if ok:
                # nothing may hide below the largest accepted value
                probe = vals[-1] - 1e3 * tol * norm
                if inertia_count(op, probe).N == int(np.sum(vals < probe)):
                    return result
                result.converged = False
            if beta[m - 1] < 1e-14:
                # invariant subspace: restart from a fresh orthogonal vector
                v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                v -= V[:, :m] @ (V[:, :m].conj().T @ v)
                beta[m - 1] = 0.0
                V[:, m] = v / np.linalg.norm(v)
                continue
        V[:, m] = w / beta[m - 1]
    if result is None:
        result = Eigenpairs(np.empty(0), np.empty((n, 0)), np.empty(0), False, m, shift)
    log.warning("Lanczos stopped at dimension %d without full convergence", m)
    return result

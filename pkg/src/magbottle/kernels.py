"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with ``numba.njit`` and a
pure-numpy version.  The compiled path is used by default; set the
environment variable ``MAGBOTTLE_PURE_NUMPY=1`` (read at import time) or call
:func:`use_numba` to force the numpy path.  Both paths must agree exactly on
integer outputs and to rounding on floating ones; ``tests/test_kernels.py``
checks that and ``benchmarks/bench_kernels.py`` times them against each other.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

# Bunch-Kaufman growth constant (1 + sqrt(17)) / 8.
BK_ALPHA = 0.6403882032022076

_ENV_FLAG = "MAGBOTTLE_PURE_NUMPY"
_use_numba = numba is not None and os.environ.get(_ENV_FLAG, "") in ("", "0")


def use_numba(flag: bool | None = None) -> bool:
    """Query or set whether the compiled kernels are used."""
    global _use_numba
    if flag is not None:
        _use_numba = bool(flag) and numba is not None
    return _use_numba


# ---------------------------------------------------------------------------
# banded Hermitian LDL^H inertia
# ---------------------------------------------------------------------------
#
# Storage is LAPACK-style lower band: ab[d, k] = A[k + d, k], d = 0..bw.
# Pivots are 1x1 or adjacent 2x2 blocks chosen with a Bunch-Kaufman style
# test; no interchanges are made so the band never widens.


def _band_inertia_loops(ab):
    bw = ab.shape[0] - 1
    n = ab.shape[1]
    neg = 0
    minpiv = np.inf
    k = 0
    while k < n:
        m = min(bw, n - 1 - k)
        a = ab[0, k].real
        colmax = 0.0
        for i in range(1, m + 1):
            v = abs(ab[i, k])
            if v > colmax:
                colmax = v
        two = False
        c = 0.0j
        d = 0.0
        det = 0.0
        if k + 1 < n and abs(a) < BK_ALPHA * colmax:
            c = ab[1, k]
            d = ab[0, k + 1].real
            det = a * d - (c.real * c.real + c.imag * c.imag)
            big = max(abs(a), abs(c), abs(d))
            if abs(det) > abs(a) * big:
                two = True
        if not two:
            if a < 0.0:
                neg += 1
            if abs(a) < minpiv:
                minpiv = abs(a)
            if a != 0.0:
                for j in range(1, m + 1):
                    f = ab[j, k].conjugate() / a
                    for i in range(j, m + 1):
                        ab[i - j, k + j] -= ab[i, k] * f
            k += 1
        else:
            if det < 0.0:
                neg += 1
            elif a + d < 0.0:
                neg += 2
            half = 0.5 * abs(a + d)
            rad = np.sqrt(0.25 * (a - d) * (a - d) + abs(c) ** 2)
            small = abs(det) / (half + rad)
            if small < minpiv:
                minpiv = small
            m2 = min(bw + 1, n - 1 - k)
            cc = c.conjugate()
            for j in range(2, m2 + 1):
                pj = ab[j, k] if j <= bw else 0.0j
                qj = ab[j - 1, k + 1]
                # conj(e_j) where e_j = W_j D^{-1}
                ej0 = ((pj * d - qj * c) / det).conjugate()
                ej1 = ((qj * a - pj * cc) / det).conjugate()
                for i in range(j, m2 + 1):
                    pi = ab[i, k] if i <= bw else 0.0j
                    qi = ab[i - 1, k + 1]
                    ab[i - j, k + j] -= pi * ej0 + qi * ej1
            k += 2
    return neg, minpiv


_tri_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _tri(m: int) -> tuple[np.ndarray, np.ndarray]:
    if m not in _tri_cache:
        i, j = np.tril_indices(m)
        _tri_cache[m] = (i, j)
    return _tri_cache[m]


def _band_inertia_numpy(ab):
    bw = ab.shape[0] - 1
    n = ab.shape[1]
    neg = 0
    minpiv = np.inf
    k = 0
    while k < n:
        m = min(bw, n - 1 - k)
        a = ab[0, k].real
        col = ab[1:m + 1, k]
        colmax = float(np.abs(col).max()) if m else 0.0
        two = False
        if k + 1 < n and abs(a) < BK_ALPHA * colmax:
            c = ab[1, k]
            d = ab[0, k + 1].real
            det = a * d - (c.real * c.real + c.imag * c.imag)
            big = max(abs(a), abs(c), abs(d))
            two = abs(det) > abs(a) * big
        if not two:
            if a < 0.0:
                neg += 1
            minpiv = min(minpiv, abs(a))
            if a != 0.0 and m:
                ii, jj = _tri(m)
                # A[k+1+i, k+1+j] -= col[i] conj(col[j]) / a
                ab[ii - jj, k + 1 + jj] -= col[ii] * (col[jj].conj() / a)
            k += 1
        else:
            if det < 0.0:
                neg += 1
            elif a + d < 0.0:
                neg += 2
            half = 0.5 * abs(a + d)
            rad = np.sqrt(0.25 * (a - d) ** 2 + abs(c) ** 2)
            minpiv = min(minpiv, abs(det) / (half + rad))
            m2 = min(bw + 1, n - 1 - k)
            if m2 >= 2:
                p = np.zeros(m2 - 1, dtype=ab.dtype)
                p[: min(bw, m2) - 1] = ab[2:min(bw, m2) + 1, k]
                q = ab[1:m2, k + 1].copy()
                e0 = ((p * d - q * c) / det).conj()
                e1 = ((q * a - p * np.conj(c)) / det).conj()
                ii, jj = _tri(m2 - 1)
                ab[ii - jj, k + 2 + jj] -= p[ii] * e0[jj] + q[ii] * e1[jj]
            k += 2
    return neg, minpiv


# ---------------------------------------------------------------------------
# Sturm sequence count for real symmetric tridiagonal matrices
# ---------------------------------------------------------------------------


def _sturm_loops(d, e, lams):
    n = d.shape[0]
    out = np.zeros(lams.shape[0], dtype=np.int64)
    for s in range(lams.shape[0]):
        lam = lams[s]
        cnt = 0
        q = d[0] - lam
        if q < 0.0:
            cnt += 1
        for i in range(1, n):
            if q == 0.0:
                q = 1e-300
            q = d[i] - lam - e[i - 1] * e[i - 1] / q
            if q < 0.0:
                cnt += 1
        out[s] = cnt
    return out


def _sturm_numpy(d, e, lams):
    q = d[0] - lams
    cnt = (q < 0.0).astype(np.int64)
    e2 = e * e
    for i in range(1, d.shape[0]):
        q = np.where(q == 0.0, 1e-300, q)
        q = d[i] - lams - e2[i - 1] / q
        cnt += q < 0.0
    return cnt


if numba is not None:
    _band_inertia_jit = numba.njit(cache=True, nogil=True)(_band_inertia_loops)
    _sturm_jit = numba.njit(cache=True, nogil=True)(_sturm_loops)
else:  # pragma: no cover
    _band_inertia_jit = None
    _sturm_jit = None


def band_inertia(ab: np.ndarray, *, compiled: bool | None = None) -> tuple[int, float]:
    """Number of negative eigenvalues of a banded Hermitian matrix.

    ``ab`` holds the lower band (``ab[d, k] = A[k+d, k]``) and is overwritten.
    Returns ``(negatives, smallest_pivot_magnitude)``; the caller decides
    whether the smallest pivot is too close to zero to trust the count.
    """
    ab = np.ascontiguousarray(ab, dtype=np.complex128)
    if compiled is None:
        compiled = _use_numba
    if compiled:
        neg, mp = _band_inertia_jit(ab)
    else:
        neg, mp = _band_inertia_numpy(ab)
    return int(neg), float(mp)


def sturm_count(d: np.ndarray, e: np.ndarray, lams, *, compiled: bool | None = None) -> np.ndarray:
    """Eigenvalues of tridiag(e, d, e) strictly below each entry of ``lams``."""
    d = np.ascontiguousarray(d, dtype=np.float64)
    e = np.ascontiguousarray(e, dtype=np.float64)
    lams = np.atleast_1d(np.asarray(lams, dtype=np.float64))
    if compiled is None:
        compiled = _use_numba
    if compiled:
        return _sturm_jit(d, e, lams)
    return _sturm_numpy(d, e, lams)

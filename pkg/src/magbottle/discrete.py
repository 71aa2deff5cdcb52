"""Sparse Hermitian matrices with the grid they came from."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass
class DiscreteOperator:
    """A Hermitian sparse matrix plus grid metadata and assembly provenance.

    Immutable after assembly by convention; ``cache`` only holds derived data
    (norm estimate, fill-reducing orderings) keyed by name.
    """

    matrix: sp.csr_matrix
    grid: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        """Infinity-norm, an upper bound for the spectral radius."""
        if "norm" not in self.cache:
            self.cache["norm"] = float(abs(self.matrix).sum(axis=1).max()) if self.n else 0.0
        return self.cache["norm"]

    def is_hermitian(self) -> bool:
        """Bit-exact check ``A == A^H``."""
        a = self.matrix.tocsr()
        d = a - a.conj().T
        d.eliminate_zeros()
        return d.nnz == 0

    def gershgorin_lower(self) -> float:
        a = self.matrix.tocsr()
        diag = a.diagonal().real
        off = np.asarray(abs(a).sum(axis=1)).ravel() - np.abs(diag)
        return float((diag - off).min())

    def negated(self) -> "DiscreteOperator":
        return DiscreteOperator(-self.matrix, dict(self.grid), dict(self.provenance))

    @classmethod
    def from_matrix(cls, a, **provenance) -> "DiscreteOperator":
        a = sp.csr_matrix(a, dtype=np.complex128)
        return cls(a, {"kind": "matrix", "n": a.shape[0]}, provenance)


def hermitian_from_upper(upper: sp.spmatrix, diag: np.ndarray) -> sp.csr_matrix:
    """``U + U^H + diag(d)`` with ``U`` strictly upper; exact Hermitian symmetry."""
    upper = sp.csr_matrix(upper, dtype=np.complex128)
    upper.sum_duplicates()
    h = upper + upper.conj().T + sp.diags(np.asarray(diag, dtype=float).astype(np.complex128))
    h = sp.csr_matrix(h)
    h.sum_duplicates()
    h.sort_indices()
    return h


def write_coo(op: DiscreteOperator, path) -> None:
    """Debug dump: one metadata header line, then ``i j re im`` in row-major order."""
    a = op.matrix.tocsr()
    a.sort_indices()
    coo = a.tocoo()
    meta = {"n": op.n, "nnz": int(a.nnz), **{k: v for k, v in op.grid.items() if np.isscalar(v)},
            **{k: v for k, v in op.provenance.items() if np.isscalar(v)}}
    with open(path, "w") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline()
        n = int(dict(kv.split("=", 1) for kv in header[1:].split())["n"])
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((n, n), dtype=np.complex128)
    return sp.csr_matrix((data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(n, n))

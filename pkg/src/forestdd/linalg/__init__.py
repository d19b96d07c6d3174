"""Sparse symmetric direct kernels: LL^T and LDL^T with deferred pivoting.

Matrices are stored as lower triangles in compressed-row layout.  The
factorization permutes with reverse Cuthill-McKee and runs a right-looking
profile (envelope) elimination.  Pivots below threshold are deferred into a
small dense trailing block factored by Bunch-Kaufman LDL^T, which carries
the indefinite part of saddle-point systems and yields the inertia.

The hot loops run in a compiled Cython extension when available; a pure
numpy fallback with identical semantics is selected at import otherwise
(or when FORESTDD_PURE=1 is set).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.sparse.csgraph import reverse_cuthill_mckee

from ..errors import NotPositiveDefiniteError, SingularMatrixError

if os.environ.get("FORESTDD_PURE"):
    from . import _kernels_py as _k
else:
    try:
        from . import _kernels as _k  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _k

BACKEND = _k.BACKEND

DEFER_TOL = 1e-10     # relative pivot threshold for deferral (LDL^T)
SINGULAR_TOL = 1e-9   # relative threshold for trailing-block singularity
DEFER_CAP = 128


class SymSparse:
    """Symmetric sparse matrix; lower triangle in CSR layout."""

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray, data: np.ndarray):
        self.n = int(n)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=np.float64)
        self._csr = None

    @classmethod
    def from_coo(cls, n: int, rows, cols, vals) -> "SymSparse":
        """Build from (possibly duplicated) symmetric COO entries.

        Entries above the diagonal are mirrored to the lower triangle;
        duplicates are summed in index-sorted order.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        r = np.maximum(rows, cols)
        c = np.minimum(rows, cols)
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], vals[order]
        if len(r):
            new = np.empty(len(r), dtype=bool)
            new[0] = True
            new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
            starts = np.nonzero(new)[0]
            v = np.add.reduceat(v, starts)
            r, c = r[starts], c[starts]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(n, indptr, c, v)

    @classmethod
    def from_dense(cls, A: np.ndarray) -> "SymSparse":
        A = np.asarray(A, dtype=np.float64)
        r, c = np.nonzero(np.tril(A) != 0)
        return cls.from_coo(A.shape[0], r, c, A[r, c])

    @classmethod
    def from_scipy(cls, A) -> "SymSparse":
        low = scipy.sparse.tril(A, format="coo")
        return cls.from_coo(A.shape[0], low.row, low.col, low.data)

    def to_csr(self):
        """Full (both triangles) scipy CSR; cached."""
        if self._csr is None:
            r = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
            c = self.indices
            off = r != c
            rows = np.concatenate([r, c[off]])
            cols = np.concatenate([c, r[off]])
            vals = np.concatenate([self.data, self.data[off]])
            self._csr = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n)
        r = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        on = r == self.indices
        d[r[on]] = self.data[on]
        return d

    @property
    def nnz(self) -> int:
        return len(self.data)


def _ldl_blocks(dmat: np.ndarray, scale: float):
    """Eigenvalues of the 1x1/2x2 blocks of a Bunch-Kaufman D factor."""
    n = dmat.shape[0]
    eigs = []
    i = 0
    while i < n:
        if i + 1 < n and dmat[i + 1, i] != 0.0:
            eigs.extend(np.linalg.eigvalsh(dmat[i:i + 2, i:i + 2]))
            i += 2
        else:
            eigs.append(dmat[i, i])
            i += 1
    return np.asarray(eigs)


@dataclass
class Factorization:
    """P A P^T = L D L^T with a dense Bunch-Kaufman trailing block."""

    kind: str
    n: int
    perm: np.ndarray
    first: np.ndarray
    rowptr: np.ndarray
    data: np.ndarray
    elim: np.ndarray                 # uint8 mask over permuted indices
    dvals: np.ndarray                # pivots at eliminated positions (else 1)
    def_rows: np.ndarray             # permuted indices of deferred columns
    vl: np.ndarray                   # (ndef, n) couplings of deferred rows
    trailing: tuple | None           # (lu, dmat, p2) from scipy.linalg.ldl
    inertia: tuple[int, int, int] = (0, 0, 0)

    def solve(self, B: np.ndarray) -> np.ndarray:
        """Solve A X = B for one or many right-hand-side columns."""
        B = np.asarray(B, dtype=np.float64)
        single = B.ndim == 1
        X = B[:, None] if single else B
        if X.shape[0] != self.n:
            raise ValueError(f"rhs has {X.shape[0]} rows, expected {self.n}")
        xp = np.ascontiguousarray(X[self.perm])
        _k.forward_profile(self.first, self.rowptr, self.data, self.elim, xp)
        emask = self.elim.astype(bool)
        if len(self.def_rows):
            wd = xp[self.def_rows] - self.vl[:, emask] @ xp[emask]
            z = self._trailing_solve(wd)
            xp[emask] /= self.dvals[emask, None]
            xp[emask] -= self.vl[:, emask].T @ z
            xp[self.def_rows] = z
        else:
            xp[emask] /= self.dvals[emask, None]
        _k.backward_profile(self.first, self.rowptr, self.data, self.elim, xp)
        out = np.empty_like(xp)
        out[self.perm] = xp
        return out[:, 0] if single else out

    def _trailing_solve(self, w: np.ndarray) -> np.ndarray:
        """Solve the dense Bunch-Kaufman trailing block B z = w."""
        lu, dmat, p2 = self.trailing
        lp = lu[p2]
        y = scipy.linalg.solve_triangular(lp, w[p2], lower=True, unit_diagonal=True)
        y = self._block_diag_solve(dmat, y)
        t = scipy.linalg.solve_triangular(lp.T, y, lower=False, unit_diagonal=True)
        z = np.empty_like(t)
        z[p2] = t
        return z

    @staticmethod
    def _block_diag_solve(dmat: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = y.copy()
        n = dmat.shape[0]
        i = 0
        while i < n:
            if i + 1 < n and dmat[i + 1, i] != 0.0:
                out[i:i + 2] = np.linalg.solve(dmat[i:i + 2, i:i + 2], y[i:i + 2])
                i += 2
            else:
                out[i] = y[i] / dmat[i, i]
                i += 1
        return out


def factor(A: SymSparse, kind: str = "llt", perm: np.ndarray | None = None,
           defer_cap: int = DEFER_CAP) -> Factorization:
    """Factor a symmetric matrix; 'llt' requires SPD, 'ldlt' allows saddles."""
    if kind not in ("llt", "ldlt"):
        raise ValueError(f"unknown factorization kind {kind!r}")
    n = A.n
    if perm is None:
        if n > 1:
            perm = np.asarray(reverse_cuthill_mckee(A.to_csr(), symmetric_mode=True),
                              dtype=np.int64)
        else:
            perm = np.arange(n, dtype=np.int64)
    else:
        perm = np.asarray(perm, dtype=np.int64)
    iperm = np.empty(n, dtype=np.int64)
    iperm[perm] = np.arange(n)

    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(A.indptr))
    pr = iperm[rows]
    pc = iperm[A.indices]
    lo = np.minimum(pr, pc)
    hi = np.maximum(pr, pc)

    first = np.arange(n, dtype=np.int64)
    np.minimum.at(first, hi, lo)
    rowlen = np.arange(n) - first + 1
    rowptr = np.zeros(n + 1, dtype=np.int64)
    rowptr[1:] = np.cumsum(rowlen)
    data = np.zeros(int(rowptr[n]))
    np.add.at(data, rowptr[hi] + (lo - first[hi]), A.data)

    colscale = np.zeros(n)
    np.maximum.at(colscale, hi, np.abs(A.data))
    np.maximum.at(colscale, lo, np.abs(A.data))
    if kind == "ldlt":
        tol = DEFER_TOL * colscale
        allow = True
    else:
        tol = np.zeros(n)
        allow = False

    vbuf = np.zeros((min(defer_cap, max(n, 1)), n))
    def_out = np.zeros(vbuf.shape[0], dtype=np.int64)
    info, ndef = _k.factor_profile(first, rowptr, data, n, allow, tol, vbuf, def_out)
    if info > 0:
        k = info - 1
        raise NotPositiveDefiniteError(int(perm[k]), float(data[rowptr[k] + (k - first[k])]))
    if info < 0:
        raise SingularMatrixError(
            f"more than {vbuf.shape[0]} deferred pivots; matrix looks singular")

    elim = np.ones(n, dtype=np.uint8)
    def_rows = np.empty(0, dtype=np.int64)
    vl = np.zeros((0, n))
    trailing = None
    npos = nneg = nzero = 0
    scale = float(colscale.max()) if n else 1.0
    if ndef:
        def_rows = def_out[:ndef].copy()
        elim[def_rows] = 0
        vl = vbuf[:ndef]
        Bt = vl[:, def_rows]
        Bt = 0.5 * (Bt + Bt.T)
        lu, dmat, p2 = scipy.linalg.ldl(Bt, lower=True)
        eigs = _ldl_blocks(dmat, scale)
        if np.any(np.abs(eigs) <= SINGULAR_TOL * max(scale, 1e-300)):
            raise SingularMatrixError(
                f"singular trailing block (min |pivot| = {np.abs(eigs).min():.3e})")
        trailing = (lu, dmat, p2)
        npos += int((eigs > 0).sum())
        nneg += int((eigs < 0).sum())
    dvals = np.ones(n)
    emask = elim.astype(bool)
    idx = np.nonzero(emask)[0]
    dvals[idx] = data[rowptr[idx] + (idx - first[idx])]
    if kind == "llt" and n and np.any(dvals[idx] <= 0):
        bad = idx[np.nonzero(dvals[idx] <= 0)[0][0]]
        raise NotPositiveDefiniteError(int(perm[bad]), float(dvals[bad]))
    npos += int((dvals[idx] > 0).sum())
    nneg += int((dvals[idx] < 0).sum())
    nzero = n - npos - nneg

    return Factorization(kind, n, perm, first, rowptr, data, elim, dvals,
                         def_rows, vl, trailing, (npos, nneg, nzero))


def solve(F: Factorization, B: np.ndarray) -> np.ndarray:
    return F.solve(B)


def spmv(A: SymSparse, x: np.ndarray) -> np.ndarray:
    if x.shape[0] != A.n:
        raise ValueError("dimension mismatch in spmv")
    return A.to_csr() @ x


def dot(x: np.ndarray, y: np.ndarray) -> float:
    if x.shape != y.shape:
        raise ValueError("dimension mismatch in dot")
    return float(np.dot(x, y))


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape != y.shape:
        raise ValueError("dimension mismatch in axpy")
    return y + a * x


def norm2(x: np.ndarray) -> float:
    return math.sqrt(dot(x, x))


def save_matrix(A: SymSparse, path_or_file) -> None:
    """Coordinate text format: header 'n nnz', then lower-triangle entries."""
    close = False
    f = path_or_file
    if isinstance(path_or_file, (str, bytes)):
        f = open(path_or_file, "w")
        close = True
    try:
        f.write(f"{A.n} {A.nnz}\n")
        r = np.repeat(np.arange(A.n), np.diff(A.indptr))
        for i, j, v in zip(r, A.indices, A.data):
            f.write(f"{i} {j} {v:.17g}\n")
    finally:
        if close:
            f.close()


def load_matrix(path_or_file) -> SymSparse:
    close = False
    f = path_or_file
    if isinstance(path_or_file, (str, bytes)):
        f = open(path_or_file)
        close = True
    try:
        n, nnz = map(int, f.readline().split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k in range(nnz):
            a, b, c = f.readline().split()
            rows[k], cols[k], vals[k] = int(a), int(b), float(c)
    finally:
        if close:
            f.close()
    return SymSparse.from_coo(n, rows, cols, vals)

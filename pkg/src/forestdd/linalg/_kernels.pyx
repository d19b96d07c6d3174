# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled profile-factorization kernels (see _kernels_py for the fallback)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

BACKEND = "compiled"


def factor_profile(cnp.int64_t[::1] first, cnp.int64_t[::1] rowptr, double[::1] data,
                   Py_ssize_t n, bint allow_defer, double[::1] tol, double[:, ::1] vbuf,
                   cnp.int64_t[::1] def_out):
    """Right-looking LDL^T on a symmetric profile; bad pivots are deferred."""
    cdef Py_ssize_t cap = vbuf.shape[0]
    cdef Py_ssize_t ndef = 0
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] deferred_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] deferred = deferred_arr
    cdef cnp.int64_t[::1] def_rows = def_out
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rows_arr = np.zeros(max(n, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] rows = rows_arr
    cdef cnp.ndarray[double, ndim=1] vals_arr = np.zeros(max(n, 1), dtype=np.float64)
    cdef double[::1] vals = vals_arr
    cdef cnp.ndarray[double, ndim=1] coefs_arr = np.zeros(max(cap, 1), dtype=np.float64)
    cdef double[::1] coefs = coefs_arr
    cdef Py_ssize_t k, i, ii, jj, q, q2, m, base, L
    cdef double dk, a, lik, lq, aq

    for k in range(n):
        if deferred[k]:
            continue
        dk = data[rowptr[k] + (k - first[k])]
        if allow_defer and fabs(dk) <= tol[k]:
            if ndef >= cap:
                return -1, ndef
            L = k - first[k] + 1
            for i in range(n):
                vbuf[ndef, i] = 0.0
            for i in range(L):
                vbuf[ndef, first[k] + i] = data[rowptr[k] + i]
                data[rowptr[k] + i] = 0.0
            for i in range(k + 1, n):
                if first[i] <= k:
                    vbuf[ndef, i] = data[rowptr[i] + (k - first[i])]
                    data[rowptr[i] + (k - first[i])] = 0.0
            for q in range(ndef):
                vbuf[ndef, def_rows[q]] = vbuf[q, k]
            deferred[k] = 1
            def_rows[ndef] = k
            ndef += 1
            continue
        if not allow_defer and dk <= tol[k]:
            return k + 1, ndef

        m = 0
        for i in range(k + 1, n):
            if first[i] <= k:
                a = data[rowptr[i] + (k - first[i])]
                if a != 0.0:
                    rows[m] = i
                    vals[m] = a
                    m += 1
        for ii in range(m):
            i = rows[ii]
            lik = vals[ii] / dk
            base = rowptr[i] - first[i]
            for jj in range(ii + 1):
                data[base + rows[jj]] -= lik * vals[jj]
            data[base + k] = lik
        if ndef:
            for q in range(ndef):
                coefs[q] = vbuf[q, k]
            for q in range(ndef):
                aq = coefs[q]
                if aq == 0.0:
                    continue
                lq = aq / dk
                for ii in range(m):
                    vbuf[q, rows[ii]] -= lq * vals[ii]
                for q2 in range(ndef):
                    vbuf[q, def_rows[q2]] -= lq * coefs[q2]
                vbuf[q, k] = lq
    return 0, ndef


def forward_profile(cnp.int64_t[::1] first, cnp.int64_t[::1] rowptr, double[::1] data,
                    cnp.uint8_t[::1] elim, double[:, ::1] b):
    cdef Py_ssize_t n = first.shape[0]
    cdef Py_ssize_t nrhs = b.shape[1]
    cdef Py_ssize_t i, c, j, f, base
    cdef double coef
    for i in range(n):
        if not elim[i]:
            continue
        f = first[i]
        base = rowptr[i]
        for c in range(i - f):
            coef = data[base + c]
            if coef != 0.0:
                for j in range(nrhs):
                    b[i, j] -= coef * b[f + c, j]
    return 0


def backward_profile(cnp.int64_t[::1] first, cnp.int64_t[::1] rowptr, double[::1] data,
                     cnp.uint8_t[::1] elim, double[:, ::1] b):
    cdef Py_ssize_t n = first.shape[0]
    cdef Py_ssize_t nrhs = b.shape[1]
    cdef Py_ssize_t i, c, j, f, base
    cdef double coef
    for i in range(n - 1, -1, -1):
        if not elim[i]:
            continue
        f = first[i]
        base = rowptr[i]
        for c in range(i - f):
            coef = data[base + c]
            if coef != 0.0:
                for j in range(nrhs):
                    b[f + c, j] -= coef * b[i, j]
    return 0

"""Pure-Python (numpy) twins of the compiled profile-factorization kernels.

Same algorithms and floating-point operation order as the Cython versions,
kept as the import-time fallback and for cross-checking the compiled path.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def factor_profile(first, rowptr, data, n, allow_defer, tol, vbuf, def_out):
    """Right-looking LDL^T on a symmetric profile; bad pivots are deferred.

    Eliminated columns store divided multipliers l_ik in the profile and the
    pivot d_k at the diagonal position.  Deferred columns move to dense rows
    of vbuf and keep receiving Schur updates; their entries at eliminated
    positions end up as the couplings to the eliminated block.  def_out[:ndef]
    receives the deferred (permuted) indices in deferral order.

    Returns (info, ndef): info = 0 on success, k+1 if pivot k failed
    (no-deferral mode), -1 if vbuf capacity was exceeded.
    """
    cap = vbuf.shape[0]
    ndef = 0
    deferred = np.zeros(n, dtype=np.uint8)
    def_rows: list[int] = []

    for k in range(n):
        if deferred[k]:
            continue
        dk = data[rowptr[k] + (k - first[k])]
        if allow_defer and abs(dk) <= tol[k]:
            if ndef >= cap:
                return -1, ndef
            v = vbuf[ndef]
            v[:] = 0.0
            L = k - first[k] + 1
            v[first[k]:k + 1] = data[rowptr[k]:rowptr[k] + L]
            data[rowptr[k]:rowptr[k] + L] = 0.0
            for i in range(k + 1, n):
                if first[i] <= k:
                    pos = rowptr[i] + (k - first[i])
                    v[i] = data[pos]
                    data[pos] = 0.0
            for q in range(ndef):
                v[def_rows[q]] = vbuf[q][k]
            deferred[k] = 1
            def_rows.append(k)
            def_out[ndef] = k
            ndef += 1
            continue
        if not allow_defer and dk <= tol[k]:
            return k + 1, ndef

        rows = []
        vals = []
        for i in range(k + 1, n):
            if first[i] <= k:
                a = data[rowptr[i] + (k - first[i])]
                if a != 0.0:
                    rows.append(i)
                    vals.append(a)
        for ii in range(len(rows)):
            i = rows[ii]
            lik = vals[ii] / dk
            base = rowptr[i] - first[i]
            for jj in range(ii + 1):
                data[base + rows[jj]] -= lik * vals[jj]
            data[base + k] = lik
        if ndef:
            coefs = [vbuf[q][k] for q in range(ndef)]
            for q in range(ndef):
                aq = coefs[q]
                if aq == 0.0:
                    continue
                lq = aq / dk
                v = vbuf[q]
                for ii in range(len(rows)):
                    v[rows[ii]] -= lq * vals[ii]
                for q2 in range(ndef):
                    v[def_rows[q2]] -= lq * coefs[q2]
                v[k] = lq
    return 0, ndef


def forward_profile(first, rowptr, data, elim, b):
    """In place on eliminated rows: b <- L^{-1} b (unit lower profile L)."""
    n = len(first)
    for i in range(n):
        if not elim[i]:
            continue
        f = first[i]
        if f < i:
            seg = data[rowptr[i]:rowptr[i] + (i - f)]
            b[i] -= seg @ b[f:i]
    return 0


def backward_profile(first, rowptr, data, elim, b):
    """In place on eliminated rows: b <- L^{-T} b (scatter form)."""
    n = len(first)
    for i in range(n - 1, -1, -1):
        if not elim[i]:
            continue
        f = first[i]
        if f < i:
            seg = data[rowptr[i]:rowptr[i] + (i - f)]
            b[f:i] -= seg[:, None] * b[i]
    return 0

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluation/assembly kernels (hot inner loops).

Signature-compatible with hpfem._kernels._fallback.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

IS_COMPILED = True


def legendre_table(t, int jmax):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t m = tt.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] val = np.empty((m, jmax + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] der = np.empty((m, jmax + 1))
    cdef Py_ssize_t q
    cdef int j
    cdef double x
    for q in range(m):
        x = tt[q]
        val[q, 0] = 1.0
        der[q, 0] = 0.0
        if jmax >= 1:
            val[q, 1] = x
            der[q, 1] = 1.0
        for j in range(2, jmax + 1):
            val[q, j] = ((2 * j - 1) * x * val[q, j - 1] - (j - 1) * val[q, j - 2]) / j
            der[q, j] = der[q, j - 2] + (2 * j - 1) * val[q, j - 1]
    return val, der


def shape_table(t, int jmax):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t m = tt.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] val = np.empty((m, jmax + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] der = np.empty((m, jmax + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lv
    cdef Py_ssize_t q
    cdef int j
    val[:, 0] = 0.5 * (1.0 - tt)
    der[:, 0] = -0.5
    if jmax >= 1:
        val[:, 1] = 0.5 * (1.0 + tt)
        der[:, 1] = 0.5
    if jmax >= 2:
        lv, _ = legendre_table(tt, jmax)
        for q in range(m):
            for j in range(2, jmax + 1):
                val[q, j] = (lv[q, j] - lv[q, j - 2]) / (2 * j - 1)
                der[q, j] = lv[q, j - 1]
    return val, der


def scalar_stiffness(cnp.ndarray[cnp.float64_t, ndim=3] dphi,
                     cnp.ndarray[cnp.float64_t, ndim=1] w):
    cdef Py_ssize_t nq = dphi.shape[0], nb = dphi.shape[1], d = dphi.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A = np.zeros((nb, nb))
    cdef Py_ssize_t q, i, j, k
    cdef double s, wq
    for q in range(nq):
        wq = w[q]
        for i in range(nb):
            for j in range(i, nb):
                s = 0.0
                for k in range(d):
                    s += dphi[q, i, k] * dphi[q, j, k]
                A[i, j] += wq * s
    for i in range(nb):
        for j in range(i):
            A[i, j] = A[j, i]
    return A


def mass_matrix(cnp.ndarray[cnp.float64_t, ndim=2] phi,
                cnp.ndarray[cnp.float64_t, ndim=1] w):
    cdef Py_ssize_t nq = phi.shape[0], nb = phi.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] M = np.zeros((nb, nb))
    cdef Py_ssize_t q, i, j
    cdef double wq
    for q in range(nq):
        wq = w[q]
        for i in range(nb):
            for j in range(i, nb):
                M[i, j] += wq * phi[q, i] * phi[q, j]
    for i in range(nb):
        for j in range(i):
            M[i, j] = M[j, i]
    return M


def load_vector(cnp.ndarray[cnp.float64_t, ndim=2] phi,
                cnp.ndarray[cnp.float64_t, ndim=1] w, f):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] f2
    cdef cnp.ndarray[cnp.float64_t, ndim=1] f1
    cdef Py_ssize_t nq = phi.shape[0], nb = phi.shape[1]
    cdef Py_ssize_t q, i, k, d
    if f.ndim == 1:
        f1 = f
        out1 = np.zeros(nb)
        for q in range(nq):
            for i in range(nb):
                out1[i] += w[q] * f1[q] * phi[q, i]
        return out1
    f2 = f
    d = f2.shape[1]
    out2 = np.zeros((nb, d))
    for q in range(nq):
        for i in range(nb):
            for k in range(d):
                out2[i, k] += w[q] * f2[q, k] * phi[q, i]
    return out2


def elastic_stiffness(cnp.ndarray[cnp.float64_t, ndim=3] dphi,
                      cnp.ndarray[cnp.float64_t, ndim=1] w,
                      double lam, double mu):
    cdef Py_ssize_t nq = dphi.shape[0], nb = dphi.shape[1], d = dphi.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] K = np.zeros((nb * d, nb * d))
    cdef Py_ssize_t q, b, bp, k, l, n
    cdef double wq, lap, v
    for q in range(nq):
        wq = w[q]
        for b in range(nb):
            for bp in range(nb):
                lap = 0.0
                for n in range(d):
                    lap += dphi[q, b, n] * dphi[q, bp, n]
                for k in range(d):
                    for l in range(d):
                        v = lam * dphi[q, b, k] * dphi[q, bp, l] \
                            + mu * dphi[q, b, l] * dphi[q, bp, k]
                        if k == l:
                            v += mu * lap
                        K[b * d + k, bp * d + l] += wq * v
    return K


def coupling_block(cnp.ndarray[cnp.float64_t, ndim=3] dphi,
                   cnp.ndarray[cnp.float64_t, ndim=1] w,
                   cnp.ndarray[cnp.float64_t, ndim=2] phiq,
                   cnp.ndarray[cnp.float64_t, ndim=3] S):
    cdef Py_ssize_t nq = dphi.shape[0], nb = dphi.shape[1], d = dphi.shape[2]
    cdef Py_ssize_t nm = phiq.shape[1], L = S.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] B = np.zeros((nb * d, nm * L))
    cdef Py_ssize_t q, b, k, m, l, n
    cdef double wq, s
    for q in range(nq):
        wq = w[q]
        for b in range(nb):
            for k in range(d):
                for l in range(L):
                    s = 0.0
                    for n in range(d):
                        s += S[l, k, n] * dphi[q, b, n]
                    s *= wq
                    for m in range(nm):
                        B[b * d + k, m * L + l] += s * phiq[q, m]
    return B


def chi_blocks(cnp.ndarray[cnp.float64_t, ndim=2] p,
               cnp.ndarray[cnp.float64_t, ndim=2] lam,
               cnp.ndarray[cnp.float64_t, ndim=1] sigma,
               double rho, bint want_jacobian=True):
    cdef Py_ssize_t N = p.shape[0], L = p.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] chi = np.empty((N, L))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] dp
    cdef cnp.ndarray[cnp.float64_t, ndim=3] dl
    cdef Py_ssize_t i, a, b
    cdef double nw, m, wv, sig, what_b
    cdef double[16] wbuf  # L <= 5 in practice; generous bound
    if want_jacobian:
        dp = np.zeros((N, L, L))
        dl = np.zeros((N, L, L))
    for i in range(N):
        sig = sigma[i]
        nw = 0.0
        for a in range(L):
            wv = lam[i, a] + rho * p[i, a]
            wbuf[a] = wv
            nw += wv * wv
        nw = sqrt(nw)
        m = nw if nw > sig else sig
        for a in range(L):
            chi[i, a] = m * lam[i, a] - sig * wbuf[a]
        if not want_jacobian:
            continue
        if nw >= sig:
            for a in range(L):
                for b in range(L):
                    what_b = wbuf[b] / nw
                    dl[i, a, b] = lam[i, a] * what_b
                    dp[i, a, b] = rho * lam[i, a] * what_b
                dl[i, a, a] += nw - sig
                dp[i, a, a] -= sig * rho
        else:
            for a in range(L):
                dp[i, a, a] = -sig * rho
    if want_jacobian:
        return chi, dp, dl
    return chi, None, None

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled transport kernels: per-macrocell residual and block forward substitution.

Both release the GIL so that runtime workers solve different
(macrocell, velocity) pairs concurrently.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

BACKEND = "cython"


cdef void _residual(const double[:, ::1] F, const double[:, :, ::1] G,
                    const long long[::1] cp_ptr, const long long[::1] cp_node,
                    const long long[::1] cp_src_sub, const long long[::1] cp_src_node,
                    const double[::1] cp_coef, double alpha, double[:, ::1] R) noexcept nogil:
    cdef Py_ssize_t n_sub = F.shape[0], N = F.shape[1]
    cdef Py_ssize_t s, i, j, c
    cdef double acc
    for s in range(n_sub):
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += G[s, i, j] * F[s, j]
            R[s, i] = acc
        for c in range(cp_ptr[s], cp_ptr[s + 1]):
            R[s, cp_node[c]] += cp_coef[c] * F[cp_src_sub[c], cp_src_node[c]]
        for i in range(N):
            R[s, i] = F[s, i] - alpha * R[s, i]


cdef Py_ssize_t _factor(double[:, ::1] A, long long[::1] piv) noexcept nogil:
    """In-place LU with partial pivoting; returns 0 or 1 when a pivot is below 1e-300."""
    cdef Py_ssize_t N = A.shape[0]
    cdef Py_ssize_t k, i, j, p
    cdef double amax, t, f
    for k in range(N):
        p = k
        amax = fabs(A[k, k])
        for i in range(k + 1, N):
            if fabs(A[i, k]) > amax:
                amax = fabs(A[i, k])
                p = i
        if amax < 1e-300:
            return 1
        piv[k] = p
        if p != k:
            for j in range(N):
                t = A[k, j]
                A[k, j] = A[p, j]
                A[p, j] = t
        for i in range(k + 1, N):
            f = A[i, k] / A[k, k]
            A[i, k] = f
            for j in range(k + 1, N):
                A[i, j] -= f * A[k, j]
    return 0


cdef void _lu_solve(const double[:, ::1] A, const long long[::1] piv, double[::1] b) noexcept nogil:
    cdef Py_ssize_t N = A.shape[0]
    cdef Py_ssize_t k, i
    cdef double t
    for k in range(N):
        if piv[k] != k:
            t = b[k]
            b[k] = b[piv[k]]
            b[piv[k]] = t
    for i in range(N):
        for k in range(i):
            b[i] -= A[i, k] * b[k]
    for i in range(N - 1, -1, -1):
        for k in range(i + 1, N):
            b[i] -= A[i, k] * b[k]
        b[i] /= A[i, i]


cdef Py_ssize_t _solve(const double[:, ::1] R, const double[:, :, ::1] G, const long long[::1] order,
                       const long long[::1] cp_ptr, const long long[::1] cp_node,
                       const long long[::1] cp_src_sub, const long long[::1] cp_src_node,
                       const double[::1] cp_coef, double beta, double[:, ::1] F,
                       double[:, :, ::1] lu, long long[:, ::1] piv, bint refactor) noexcept nogil:
    cdef Py_ssize_t n_sub = R.shape[0], N = R.shape[1]
    cdef Py_ssize_t k, s, i, j, c
    for k in range(n_sub):
        s = order[k]
        if refactor:
            for i in range(N):
                for j in range(N):
                    lu[s, i, j] = beta * G[s, i, j]
                lu[s, i, i] += 1.0
            if _factor(lu[s], piv[s]):
                return s
        for i in range(N):
            F[s, i] = R[s, i]
        for c in range(cp_ptr[s], cp_ptr[s + 1]):
            F[s, cp_node[c]] -= beta * cp_coef[c] * F[cp_src_sub[c], cp_src_node[c]]
        _lu_solve(lu[s], piv[s], F[s])
    return -1


def volume_residual(st, double[:, ::1] F, double alpha, double[:, ::1] R):
    cdef const double[:, :, ::1] G = st.G
    cdef const long long[::1] cp_ptr = st.cp_ptr
    cdef const long long[::1] cp_node = st.cp_node
    cdef const long long[::1] cp_src_sub = st.cp_src_sub
    cdef const long long[::1] cp_src_node = st.cp_src_node
    cdef const double[::1] cp_coef = st.cp_coef
    with nogil:
        _residual(F, G, cp_ptr, cp_node, cp_src_sub, cp_src_node, cp_coef, alpha, R)
    return R


def block_solve(st, double[:, ::1] R, double beta, double[:, ::1] F, cache=None):
    """Forward substitution in topological order; returns index of a singular block or -1."""
    cdef const double[:, :, ::1] G = st.G
    cdef const long long[::1] order = st.order
    cdef const long long[::1] cp_ptr = st.cp_ptr
    cdef const long long[::1] cp_node = st.cp_node
    cdef const long long[::1] cp_src_sub = st.cp_src_sub
    cdef const long long[::1] cp_src_node = st.cp_src_node
    cdef const double[::1] cp_coef = st.cp_coef
    cdef double[:, :, ::1] lu
    cdef long long[:, ::1] piv
    cdef bint refactor = True
    cdef Py_ssize_t bad
    n_sub, N = st.G.shape[0], st.G.shape[1]
    hit = cache.get((BACKEND, beta)) if cache is not None else None
    if hit is not None:
        lu, piv = hit
        refactor = False
    else:
        lu = np.empty((n_sub, N, N))
        piv = np.empty((n_sub, N), dtype=np.int64)
    with nogil:
        bad = _solve(R, G, order, cp_ptr, cp_node, cp_src_sub, cp_src_node, cp_coef,
                     beta, F, lu, piv, refactor)
    if bad < 0 and refactor and cache is not None:
        cache[BACKEND, beta] = (np.asarray(lu), np.asarray(piv))
    return bad

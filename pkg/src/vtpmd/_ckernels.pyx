# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled factorization kernels. Same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, copysign

cnp.import_array()

NAME = "cython"


def householder_qr(A, bint pivot):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Ra = np.array(A, dtype=np.float64, order="C")
    cdef Py_ssize_t m = Ra.shape[0], n = Ra.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Qa = np.eye(m)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] perma = np.arange(n, dtype=np.int64)
    cdef Py_ssize_t steps = min(m, n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pna = np.zeros(steps)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] va = np.zeros(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wa = np.zeros(max(m, n))
    cdef double[:, ::1] R = Ra
    cdef double[:, ::1] Q = Qa
    cdef long long[::1] perm = perma
    cdef double[::1] pn = pna
    cdef double[::1] v = va
    cdef double[::1] w = wa
    cdef Py_ssize_t i, j, k, p
    cdef double alpha, sigma, norm, s, beta, acc, best, tmp
    cdef long long ptmp

    for j in range(steps):
        if pivot:
            p = j
            best = -1.0
            for k in range(j, n):
                acc = 0.0
                for i in range(j, m):
                    acc += R[i, k] * R[i, k]
                if acc > best or (acc == best and perm[k] < perm[p]):
                    best = acc
                    p = k
            if p != j:
                for i in range(m):
                    tmp = R[i, j]
                    R[i, j] = R[i, p]
                    R[i, p] = tmp
                ptmp = perm[j]
                perm[j] = perm[p]
                perm[p] = ptmp
        alpha = R[j, j]
        sigma = 0.0
        for i in range(j + 1, m):
            sigma += R[i, j] * R[i, j]
        norm = sqrt(alpha * alpha + sigma)
        pn[j] = norm
        if sigma == 0.0:
            continue
        s = 1.0 if alpha >= 0.0 else -1.0
        v[j] = alpha + s * norm
        acc = v[j] * v[j]
        for i in range(j + 1, m):
            v[i] = R[i, j]
            acc += v[i] * v[i]
        beta = 2.0 / acc
        # R[j:, j+1:] -= beta * v (v^T R[j:, j+1:])
        for k in range(j + 1, n):
            w[k] = 0.0
        for i in range(j, m):
            for k in range(j + 1, n):
                w[k] += v[i] * R[i, k]
        for i in range(j, m):
            tmp = beta * v[i]
            for k in range(j + 1, n):
                R[i, k] -= tmp * w[k]
        R[j, j] = -s * norm
        for i in range(j + 1, m):
            R[i, j] = 0.0
        # Q[:, j:] -= beta * (Q[:, j:] v) v^T
        for i in range(m):
            acc = 0.0
            for k in range(j, m):
                acc += Q[i, k] * v[k]
            acc *= beta
            for k in range(j, m):
                Q[i, k] -= acc * v[k]
    for i in range(steps):
        if R[i, i] < 0.0:
            for k in range(i, n):
                R[i, k] = -R[i, k]
            for k in range(m):
                Q[k, i] = -Q[k, i]
    return Qa, Ra, perma, pna


def lu_partial(A, double zero_tol):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Ua = np.array(A, dtype=np.float64, order="C")
    cdef Py_ssize_t n = Ua.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] La = np.eye(n)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] perma = np.arange(n, dtype=np.int64)
    cdef double[:, ::1] U = Ua
    cdef double[:, ::1] L = La
    cdef long long[::1] perm = perma
    cdef Py_ssize_t i, j, k, p
    cdef double best, tmp, piv, f
    cdef long long ptmp
    zero_pivots = []
    for k in range(n):
        p = k
        best = fabs(U[k, k])
        for i in range(k + 1, n):
            if fabs(U[i, k]) > best:
                best = fabs(U[i, k])
                p = i
        if p != k:
            for j in range(n):
                tmp = U[k, j]
                U[k, j] = U[p, j]
                U[p, j] = tmp
            for j in range(k):
                tmp = L[k, j]
                L[k, j] = L[p, j]
                L[p, j] = tmp
            ptmp = perm[k]
            perm[k] = perm[p]
            perm[p] = ptmp
        if best <= zero_tol:
            zero_pivots.append(k)
            for i in range(k + 1, n):
                U[i, k] = 0.0
            continue
        piv = U[k, k]
        for i in range(k + 1, n):
            f = U[i, k] / piv
            L[i, k] = f
            for j in range(k + 1, n):
                U[i, j] -= f * U[k, j]
            U[i, k] = 0.0
    return perma, La, Ua, zero_pivots


def cholesky_upper(A):
    cdef double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef Py_ssize_t n = Av.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Ra = np.zeros((n, n))
    cdef double[:, ::1] R = Ra
    cdef Py_ssize_t i, j, k
    cdef double s, d
    for j in range(n):
        s = Av[j, j]
        for k in range(j):
            s -= R[k, j] * R[k, j]
        if not s > 0.0:
            return Ra, j
        d = sqrt(s)
        R[j, j] = d
        for i in range(j + 1, n):
            s = Av[j, i]
            for k in range(j):
                s -= R[k, j] * R[k, i]
            R[j, i] = s / d
    return Ra, -1


def jacobi_rows(Wt_in, Vt_in, double tol, int max_sweeps):
    cdef double[:, ::1] W = Wt_in
    cdef double[:, ::1] V = Vt_in
    cdef Py_ssize_t n = W.shape[0], m = W.shape[1], nv = V.shape[1]
    cdef Py_ssize_t i, j, k
    cdef int sweep
    cdef bint rotated
    cdef double alpha, beta, gamma, zeta, t, c, s, a, b
    for sweep in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for k in range(m):
                    a = W[i, k]
                    b = W[j, k]
                    alpha += a * a
                    beta += b * b
                    gamma += a * b
                if gamma == 0.0 or fabs(gamma) <= tol * sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if fabs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = copysign(1.0, zeta) / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for k in range(m):
                    a = W[i, k]
                    b = W[j, k]
                    W[i, k] = c * a - s * b
                    W[j, k] = s * a + c * b
                for k in range(nv):
                    a = V[i, k]
                    b = V[j, k]
                    V[i, k] = c * a - s * b
                    V[j, k] = s * a + c * b
        if not rotated:
            return sweep + 1
    return -1

"""Pure numpy implementation of the hot factorization kernels.

Mirrors ``_ckernels.pyx`` function for function; ``vtpmd.kernels`` picks one at
import. All functions take C-contiguous float64 arrays and work on copies unless
the name says otherwise.
"""
import math

import numpy as np

NAME = "python"


def householder_qr(A, pivot):
    """Householder QR, optionally with greedy column pivoting.

    Returns ``(Q, R, perm, pivot_norms)``. Q is m x m, R is m x n with exact zeros
    below the diagonal and a nonnegative diagonal. ``pivot_norms[j]`` is the norm of
    the column chosen at step j (before reflection); without pivoting it is still
    reported. perm is the identity when ``pivot`` is false.
    """
    R = np.array(A, dtype=np.float64, order="C")
    m, n = R.shape
    Q = np.eye(m)
    perm = np.arange(n, dtype=np.int64)
    steps = min(m, n)
    pivot_norms = np.zeros(steps)
    for j in range(steps):
        if pivot:
            sub = R[j:, j:]
            norms2 = np.einsum("ij,ij->j", sub, sub)
            best = norms2.max()
            cand = np.flatnonzero(norms2 == best) + j
            p = int(cand[np.argmin(perm[cand])])
            if p != j:
                R[:, [j, p]] = R[:, [p, j]]
                perm[[j, p]] = perm[[p, j]]
        x = R[j:, j].copy()
        alpha = x[0]
        sigma = float(np.dot(x[1:], x[1:]))
        norm = math.sqrt(alpha * alpha + sigma)
        pivot_norms[j] = norm
        if sigma == 0.0:
            continue
        s = 1.0 if alpha >= 0.0 else -1.0
        v = x
        v[0] = alpha + s * norm
        beta = 2.0 / float(np.dot(v, v))
        if j + 1 < n:
            blk = R[j:, j + 1:]
            blk -= beta * np.outer(v, v @ blk)
        R[j, j] = -s * norm
        R[j + 1:, j] = 0.0
        qb = Q[:, j:]
        qb -= beta * np.outer(qb @ v, v)
    for i in range(steps):
        if R[i, i] < 0.0:
            R[i, i:] *= -1.0
            Q[:, i] *= -1.0
    return Q, R, perm, pivot_norms


def lu_partial(A, zero_tol):
    """Row-pivoted LU of a square matrix: ``A[perm] == L @ U``.

    Returns ``(perm, L, U, zero_pivots)``; a column whose candidates are all within
    ``zero_tol`` of zero is skipped and its index recorded.
    """
    U = np.array(A, dtype=np.float64, order="C")
    n = U.shape[0]
    L = np.eye(n)
    perm = np.arange(n, dtype=np.int64)
    zero_pivots = []
    for k in range(n):
        col = np.abs(U[k:, k])
        p = k + int(np.argmax(col))
        if p != k:
            U[[k, p], :] = U[[p, k], :]
            L[[k, p], :k] = L[[p, k], :k]
            perm[[k, p]] = perm[[p, k]]
        if col.max() <= zero_tol:
            zero_pivots.append(k)
            U[k + 1:, k] = 0.0
            continue
        piv = U[k, k]
        L[k + 1:, k] = U[k + 1:, k] / piv
        U[k + 1:, k + 1:] -= np.outer(L[k + 1:, k], U[k, k + 1:])
        U[k + 1:, k] = 0.0
    return perm, L, U, zero_pivots


def cholesky_upper(A):
    """Upper Cholesky factor. Returns ``(R, j)`` with j = -1 on success, else the
    index of the first nonpositive pivot (R then only partially filled)."""
    n = A.shape[0]
    R = np.zeros((n, n))
    for j in range(n):
        s = A[j, j] - float(np.dot(R[:j, j], R[:j, j]))
        if not s > 0.0:
            return R, j
        d = math.sqrt(s)
        R[j, j] = d
        if j + 1 < n:
            R[j, j + 1:] = (A[j, j + 1:] - R[:j, j] @ R[:j, j + 1:]) / d
    return R, -1


def jacobi_rows(Wt, Vt, tol, max_sweeps):
    """One-sided (Hestenes) Jacobi on the rows of ``Wt`` in place, applying the same
    rotations to the rows of ``Vt``. Returns the number of sweeps used, or -1 if the
    cap was hit without convergence."""
    n = Wt.shape[0]
    for sweep in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                wi = Wt[i]
                wj = Wt[j]
                alpha = float(np.dot(wi, wi))
                beta = float(np.dot(wj, wj))
                gamma = float(np.dot(wi, wj))
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_i = c * wi - s * wj
                Wt[j] = s * wi + c * wj
                Wt[i] = new_i
                vi = Vt[i]
                vj = Vt[j]
                new_vi = c * vi - s * vj
                Vt[j] = s * vi + c * vj
                Vt[i] = new_vi
        if not rotated:
            return sweep + 1
    return -1

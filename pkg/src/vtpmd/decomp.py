"""Matrix decompositions: LU, Cholesky, QR (full, reduced, column-pivoted), complete
orthogonal decomposition, SVD (full, condensed, truncated), plus least-squares
solvers and the accuracy/speed comparison between them.

Conventions
-----------
* Every triangular factor has exact 0.0 where structure demands it.
* R factors (and L of the COD) have a nonnegative diagonal; each SVD U column has
  its largest-magnitude entry positive. Together with lowest-index tie-breaking this
  makes factor bytes a deterministic function of input bytes.
* Permutations are index vectors: ``A[perm]`` for row permutations (LU) and
  ``A[:, perm]`` for column permutations (pivoted QR), i.e. ``A @ Pi``.
* SVD stores A = U @ diag(sigma) @ V.T.
"""
import math
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import kernels
from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NotPositiveDefinite,
    NotSupported,
    NotSymmetric,
    RankTooLarge,
    SingularMatrix,
    VtpmdError,
)
from .matcore import as_matrix, as_vector, frobenius_norm

EPS = np.finfo(np.float64).eps  # 2**-52
MAX_JACOBI_SWEEPS = 100


def _frozen(*arrays):
    for a in arrays:
        a.flags.writeable = False


@dataclass(frozen=True)
class PLUFactors:
    perm: np.ndarray
    L: np.ndarray
    U: np.ndarray
    zero_pivots: tuple = ()

    def __post_init__(self):
        _frozen(self.perm, self.L, self.U)

    def P(self):
        n = self.perm.shape[0]
        P = np.zeros((n, n))
        P[np.arange(n), self.perm] = 1.0
        return P


@dataclass(frozen=True)
class CholeskyFactor:
    R: np.ndarray

    def __post_init__(self):
        _frozen(self.R)


@dataclass(frozen=True)
class QRFactors:
    variant: str  # "full" | "reduced"
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        _frozen(self.Q, self.R)


@dataclass(frozen=True)
class PivotedQRFactors:
    Q: np.ndarray
    R1: np.ndarray
    S: np.ndarray
    perm: np.ndarray
    rank: int
    pivot_norms: np.ndarray

    def __post_init__(self):
        _frozen(self.Q, self.R1, self.S, self.perm, self.pivot_norms)

    @property
    def T(self):
        """``[R1 S]``, the leading r rows of R in pivoted column order."""
        return np.hstack([self.R1, self.S])

    def Pi(self):
        n = self.perm.shape[0]
        P = np.zeros((n, n))
        P[self.perm, np.arange(n)] = 1.0
        return P

    def approx(self, k=None):
        """Rank-k approximation ``Q[:, :k] [R1 S][:k] Pi^T`` in original column order."""
        k = self.rank if k is None else k
        if k > self.rank:
            raise RankTooLarge(f"k={k} exceeds detected rank {self.rank}")
        right = np.empty((k, self.perm.shape[0]))
        right[:, self.perm] = self.T[:k]
        return self.Q[:, :k] @ right


@dataclass(frozen=True)
class CODFactors:
    Q: np.ndarray
    L: np.ndarray
    U: np.ndarray
    rank: int

    def __post_init__(self):
        _frozen(self.Q, self.L, self.U)

    def reconstruct(self):
        r = self.rank
        return self.Q[:, :r] @ self.L @ self.U[:, :r].T


@dataclass(frozen=True)
class SVDFactors:
    variant: str  # "full" | "condensed" | "truncated"
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        _frozen(self.U, self.sigma, self.V)

    @property
    def k(self):
        return int(self.sigma.shape[0])

    def reconstruct(self):
        p = self.k
        return (self.U[:, :p] * self.sigma) @ self.V[:, :p].T


# rank policies -------------------------------------------------------------

@dataclass(frozen=True)
class FixedRank:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("FixedRank needs k >= 1")


@dataclass(frozen=True)
class EnergyFraction:
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("EnergyFraction needs 0 < delta < 1")


@dataclass(frozen=True)
class FullRank:
    pass


def choose_rank(energies, policy):
    """Rank chosen by ``policy`` given per-component energies (squared magnitudes,
    already in decreasing order of importance)."""
    avail = len(energies)
    if isinstance(policy, FixedRank):
        if policy.k > avail:
            raise RankTooLarge(f"rank {policy.k} requested, only {avail} available")
        return policy.k
    if isinstance(policy, FullRank):
        return avail
    if isinstance(policy, EnergyFraction):
        e = np.asarray(energies, dtype=np.float64)
        total = float(e.sum())
        if total == 0.0:
            return min(1, avail)
        cum = np.cumsum(e)
        need = (1.0 - policy.delta) * total
        return int(np.argmax(cum >= need)) + 1 if cum[-1] >= need else avail
    raise TypeError(f"unknown rank policy {policy!r}")


def policy_str(policy):
    if isinstance(policy, FixedRank):
        return f"rank={policy.k}"
    if isinstance(policy, EnergyFraction):
        return f"energy={policy.delta!r}"
    return "full"


def default_rank_tol(shape, largest):
    return max(shape) * EPS * float(largest)


# LU / Cholesky -------------------------------------------------------------

def lu(A, allow_singular=False):
    """Partial-pivoting LU of a square matrix, ``A[perm] = L @ U``.

    A pivot column that is zero (within 1e-14 * ||A||_F) is skipped and listed in
    ``zero_pivots``; unless ``allow_singular`` this raises :class:`SingularMatrix`
    with the factors attached.
    """
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"lu needs a square matrix, got {A.shape}")
    tol = 1e-14 * frobenius_norm(A)
    perm, L, U, zp = kernels.get().lu_partial(A, tol)
    f = PLUFactors(np.asarray(perm, dtype=np.int64), L, U, tuple(zp))
    if zp and not allow_singular:
        raise SingularMatrix(f"zero pivot in column(s) {list(zp)}", factors=f)
    return f


def cholesky(A):
    A = as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"cholesky needs a square matrix, got {A.shape}")
    if frobenius_norm(A - A.T) > 1e-12 * frobenius_norm(A):
        raise NotSymmetric("matrix is not symmetric")
    R, fail = kernels.get().cholesky_upper(A)
    if fail >= 0:
        raise NotPositiveDefinite(f"nonpositive pivot at index {fail}")
    return CholeskyFactor(R)


# QR family ---------------------------------------------------------------

def qr_full(A):
    A = as_matrix(A)
    m, n = A.shape
    if m < n:
        raise DimensionMismatch(f"qr_full needs rows >= cols, got {A.shape}")
    Q, R, _, _ = kernels.get().householder_qr(A, False)
    return QRFactors("full", Q, R)


def qr_reduced(A):
    f = qr_full(A)
    n = f.R.shape[1]
    return QRFactors("reduced", f.Q[:, :n].copy(), f.R[:n, :].copy())


def qr_pivoted(A, rank_tol=None):
    """Householder QR with column pivoting: ``A[:, perm] = Q [[R1, S], [0, 0]]``.

    The numerical rank r is the number of leading steps whose pivot column norm
    exceeds ``rank_tol`` (default ``max(m, n) * eps * |R[0, 0]|``).
    """
    A = as_matrix(A)
    m, n = A.shape
    Q, R, perm, pn = kernels.get().householder_qr(A, True)
    if rank_tol is None:
        rank_tol = default_rank_tol(A.shape, pn[0])
    if rank_tol < 0:
        raise ValueError("rank_tol must be >= 0")
    below = np.flatnonzero(pn <= rank_tol)
    r = int(below[0]) if below.size else len(pn)
    return PivotedQRFactors(Q, R[:r, :r].copy(), R[:r, r:].copy(),
                            np.asarray(perm, dtype=np.int64), r, pn)


def cod(A, rank_tol=None):
    """Complete orthogonal decomposition ``A = Q [[L, 0], [0, 0]] U^T``.

    Built from the pivoted QR: a second, full QR of ``[R1 S]^T = Z [[R2], [0]]``
    gives ``L = R2^T`` and ``U = Pi Z``.
    """
    A = as_matrix(A)
    pq = qr_pivoted(A, rank_tol)
    n = A.shape[1]
    r = pq.rank
    if r == 0:
        Z = np.eye(n)
        L = np.zeros((0, 0))
    else:
        Z, R2, _, _ = kernels.get().householder_qr(np.ascontiguousarray(pq.T.T), False)
        L = np.ascontiguousarray(R2[:r, :r].T)
    U = np.empty((n, n))
    U[pq.perm] = Z
    return CODFactors(pq.Q.copy(), L, U, r)


# SVD -----------------------------------------------------------------------

def _jacobi_svd_tall(A):
    m, n = A.shape
    Wt = np.ascontiguousarray(A.T)
    Vt = np.eye(n)
    sweeps = kernels.get().jacobi_rows(Wt, Vt, m * EPS, MAX_JACOBI_SWEEPS)
    if sweeps < 0:
        raise ConvergenceFailure(f"Jacobi SVD did not converge in {MAX_JACOBI_SWEEPS} sweeps")
    norms = np.sqrt(np.einsum("ij,ij->i", Wt, Wt))
    order = np.argsort(-norms, kind="stable")
    sigma = norms[order]
    Wt = Wt[order]
    V = np.ascontiguousarray(Vt[order].T)
    cut = default_rank_tol(A.shape, sigma[0]) if n else 0.0
    r = int(np.count_nonzero(sigma > cut)) if sigma[0] > 0 else 0
    Ur = (Wt[:r] / sigma[:r, None]).T
    if r < m:
        if r:
            Qc, _, _, _ = kernels.get().householder_qr(np.ascontiguousarray(Ur), False)
            U = np.hstack([Ur, Qc[:, r:]])
        else:
            U = np.eye(m)
    else:
        U = Ur
    return np.ascontiguousarray(U), sigma, V


def _sign_fix(U, V, p):
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0.0:
            U[:, j] = -U[:, j]
            if j < p:
                V[:, j] = -V[:, j]
    for j in range(p, V.shape[1]):
        i = int(np.argmax(np.abs(V[:, j])))
        if V[i, j] < 0.0:
            V[:, j] = -V[:, j]


def svd(A):
    """Full SVD via one-sided Jacobi: U is m x m, V is n x n, sigma has min(m, n)
    entries in nonincreasing order."""
    A = as_matrix(A)
    m, n = A.shape
    if m >= n:
        U, sigma, V = _jacobi_svd_tall(A)
    else:
        V, sigma, U = _jacobi_svd_tall(np.ascontiguousarray(A.T))
        U = np.array(U)
        V = np.array(V)
    _sign_fix(U, V, sigma.shape[0])
    return SVDFactors("full", U, sigma, V)


def svd_condensed(A, rank_tol=None):
    """Keep only the singular triples with sigma > rank_tol."""
    A = as_matrix(A)
    f = svd(A)
    if rank_tol is None:
        rank_tol = default_rank_tol(A.shape, f.sigma[0])
    if rank_tol < 0:
        raise ValueError("rank_tol must be >= 0")
    r = int(np.count_nonzero(f.sigma > rank_tol))
    return SVDFactors("condensed", f.U[:, :r].copy(), f.sigma[:r].copy(), f.V[:, :r].copy())


def svd_truncate(f, policy):
    k = choose_rank(f.sigma ** 2, policy)
    return SVDFactors("truncated", f.U[:, :k].copy(), f.sigma[:k].copy(), f.V[:, :k].copy())


def evd_guard(A):
    """EVD is never offered: rectangular pruned weights have none, and square ones
    need not be diagonalizable. Always raises :class:`NotSupported`."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSupported("non-square")
    raise NotSupported("EVD path disabled; use SVD")


# least squares --------------------------------------------------------------

METHODS = ("normal_equations", "qr", "svd")


def solve_upper(R, y):
    n = R.shape[0]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        d = R[i, i]
        if d == 0.0:
            raise SingularMatrix(f"zero diagonal at {i} in triangular solve")
        x[i] = (y[i] - R[i, i + 1:] @ x[i + 1:]) / d
    return x


def solve_lower(L, y):
    n = L.shape[0]
    x = np.zeros(n)
    for i in range(n):
        d = L[i, i]
        if d == 0.0:
            raise SingularMatrix(f"zero diagonal at {i} in triangular solve")
        x[i] = (y[i] - L[i, :i] @ x[:i]) / d
    return x


def lstsq_solve(A, b, method, rank_tol=None):
    A = as_matrix(A)
    b = as_vector(b, "b")
    m, n = A.shape
    if m < n:
        raise DimensionMismatch(f"least squares needs rows >= cols, got {A.shape}")
    if b.shape[0] != m:
        raise DimensionMismatch(f"b has length {b.shape[0]}, A has {m} rows")
    if method == "normal_equations":
        R = cholesky(A.T @ A).R
        return solve_upper(R, solve_lower(np.ascontiguousarray(R.T), A.T @ b))
    if method == "qr":
        f = qr_reduced(A)
        return solve_upper(f.R, f.Q.T @ b)
    if method == "svd":
        f = svd(A)
        if rank_tol is None:
            rank_tol = default_rank_tol(A.shape, f.sigma[0])
        keep = f.sigma > rank_tol
        c = f.U[:, :n][:, keep].T @ b
        return f.V[:, keep] @ (c / f.sigma[keep])
    raise ValueError(f"unknown least-squares method {method!r}")


@dataclass
class MethodResult:
    solution: Optional[np.ndarray]
    residual_norm: Optional[float]
    solution_error: Optional[float]
    wall_time: float
    failure: Optional[str] = None

    def to_dict(self):
        return {
            "solution": None if self.solution is None else [float(v) for v in self.solution],
            "residual_norm": self.residual_norm,
            "solution_error": self.solution_error,
            "wall_time": self.wall_time,
            "failure": self.failure,
        }


@dataclass
class LstsqReport:
    shape: tuple
    results: dict = field(default_factory=dict)

    def error(self, method):
        """Relative solution error; a failed solve counts as infinitely wrong."""
        r = self.results[method]
        if r.failure is not None:
            return math.inf
        return r.solution_error

    def to_dict(self):
        return {"shape": list(self.shape),
                "methods": {k: v.to_dict() for k, v in self.results.items()}}


def lstsq_compare(A, b, reference=None, repeats=20):
    A = as_matrix(A)
    b = as_vector(b, "b")
    if reference is not None:
        reference = as_vector(reference, "reference")
        ref_norm = float(np.linalg.norm(reference))
    report = LstsqReport(A.shape)
    for method in METHODS:
        times = []
        x = None
        failure = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            try:
                x = lstsq_solve(A, b, method)
            except VtpmdError as exc:
                failure = f"{type(exc).__name__}: {exc}"
            times.append(time.perf_counter() - t0)
            if failure:
                break
        wall = statistics.median(times)
        if failure is None and not np.isfinite(x).all():
            failure = "non-finite solution"
        if failure is not None:
            report.results[method] = MethodResult(None, None, None, wall, failure)
            continue
        res = float(np.linalg.norm(A @ x - b))
        err = None
        if reference is not None:
            diff = float(np.linalg.norm(x - reference))
            err = diff / ref_norm if ref_norm > 0 else diff
        report.results[method] = MethodResult(x, res, err, wall)
    return report


def lauchli(n, eps):
    """(n+1) x n Lauchli matrix: a row of ones over eps * I."""
    A = np.zeros((n + 1, n))
    A[0] = 1.0
    A[1:] = eps * np.eye(n)
    return A


def exact_lstsq(A, b):
    """Least-squares solution of the float data (A, b) in exact rational arithmetic.

    Gauss-Jordan on the normal equations over ``Fraction``; A must have full column
    rank. Meant for small reference problems only.
    """
    A = as_matrix(A)
    b = as_vector(b)
    m, n = A.shape
    Af = [[Fraction(float(v)) for v in row] for row in A]
    bf = [Fraction(float(v)) for v in b]
    G = [[sum(Af[k][i] * Af[k][j] for k in range(m)) for j in range(n)] for i in range(n)]
    h = [sum(Af[k][i] * bf[k] for k in range(m)) for i in range(n)]
    for c in range(n):
        p = next((r for r in range(c, n) if G[r][c] != 0), None)
        if p is None:
            raise SingularMatrix("rank-deficient system in exact solve")
        G[c], G[p] = G[p], G[c]
        h[c], h[p] = h[p], h[c]
        piv = G[c][c]
        for r in range(n):
            if r != c and G[r][c] != 0:
                f = G[r][c] / piv
                G[r] = [x - f * y for x, y in zip(G[r], G[c])]
                h[r] -= f * h[c]
    return np.array([float(h[i] / G[i][i]) for i in range(n)])

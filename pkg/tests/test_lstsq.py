import mpmath
import numpy as np
import pytest

from vtpmd import decomp
from vtpmd.errors import DimensionMismatch, NotPositiveDefinite, SingularMatrix


def mp_lstsq(A, b, dps=60):
    """High-precision least squares via the normal equations in mpmath."""
    with mpmath.workdps(dps):
        M = mpmath.matrix(A.tolist())
        y = mpmath.matrix(b.tolist())
        x = mpmath.lu_solve(M.T * M, M.T * y)
        return np.array([float(v) for v in x])


def lauchli_problem(eps, n=10, seed=0):
    rng = np.random.default_rng(seed)
    A = decomp.lauchli(n, eps)
    b = A @ rng.standard_normal(n)
    return A, b


def relerr(x, ref):
    return np.linalg.norm(x - ref) / np.linalg.norm(ref)


@pytest.mark.parametrize("method", decomp.METHODS)
def test_identity_system(backend, method):
    x = decomp.lstsq_solve(np.eye(3), np.array([1.0, 2.0, 3.0]), method)
    assert np.allclose(x, [1.0, 2.0, 3.0], rtol=0, atol=1e-15)


def test_lauchli_1e7(backend):
    # b = A @ ones, so the exact solution is known
    A = decomp.lauchli(10, 1e-7)
    b = A @ np.ones(10)
    ref = np.ones(10)
    assert relerr(mp_lstsq(A, b), ref) <= 1e-15
    try:
        ne = relerr(decomp.lstsq_solve(A, b, "normal_equations"), ref)
    except NotPositiveDefinite:
        ne = np.inf
    assert ne >= 1e-2
    assert relerr(decomp.lstsq_solve(A, b, "qr"), ref) <= 1e-6
    assert relerr(decomp.lstsq_solve(A, b, "svd"), ref) <= 1e-6


def test_exact_reference_matches_mpmath(rng):
    for eps in (1e-6, 1e-7, 1e-8):
        A, b = lauchli_problem(eps, seed=int(rng.integers(1000)))
        assert relerr(decomp.exact_lstsq(A, b), mp_lstsq(A, b)) <= 1e-15


def test_rank_deficient_min_norm(backend):
    base = np.array([[1.0, 2.0], [3.0, 1.0], [0.0, 1.0], [2.0, 2.0]])
    A = np.hstack([base, base[:, :1]])  # duplicate column
    b = np.array([1.0, 2.0, 3.0, 4.0])
    # full-rank solve on the base columns; the min-norm split of z0 over the
    # duplicated pair is even
    z = mp_lstsq(base, b)
    expect = np.array([z[0] / 2, z[1], z[0] / 2])
    x = decomp.lstsq_solve(A, b, "svd")
    assert np.allclose(x, expect, rtol=0, atol=1e-12)
    try:
        xq = decomp.lstsq_solve(A, b, "qr")
        degraded = not np.allclose(xq, expect, atol=1e-6)
    except SingularMatrix:
        degraded = True
    assert degraded
    with pytest.raises(NotPositiveDefinite):
        decomp.lstsq_solve(A, b, "normal_equations")


def test_lstsq_errors():
    with pytest.raises(DimensionMismatch):
        decomp.lstsq_solve(np.ones((2, 3)), np.ones(2), "qr")
    with pytest.raises(DimensionMismatch):
        decomp.lstsq_solve(np.ones((3, 2)), np.ones(2), "qr")
    with pytest.raises(ValueError):
        decomp.lstsq_solve(np.eye(2), np.ones(2), "cramer")


def test_compare_well_conditioned(backend, rng):
    A = rng.standard_normal((50, 10))
    b = A @ rng.standard_normal(10)
    ref = decomp.lstsq_solve(A, b, "qr")
    rep = decomp.lstsq_compare(A, b, ref, repeats=3)
    for m in decomp.METHODS:
        r = rep.results[m]
        assert r.failure is None and r.solution_error <= 1e-10 and r.residual_norm >= 0
    d = rep.to_dict()
    assert set(d["methods"]) == set(decomp.METHODS)


@pytest.mark.parametrize("eps", [1e-6, 1e-7, 1e-8])
def test_compare_lauchli_ordering(backend, eps):
    A, b = lauchli_problem(eps, seed=5)
    rep = decomp.lstsq_compare(A, b, mp_lstsq(A, b), repeats=3)
    assert rep.error("normal_equations") >= rep.error("qr") >= rep.error("svd") - 1e-12


def test_compare_identity_timings(backend):
    b = np.array([1.0, -2.0, 0.5])
    rep = decomp.lstsq_compare(np.eye(3), b, b, repeats=5)
    for r in rep.results.values():
        assert r.wall_time > 0 and r.residual_norm <= 1e-12


def test_compare_records_failures(backend):
    A, b = lauchli_problem(1e-9)
    rep = decomp.lstsq_compare(A, b, repeats=2)
    assert rep.results["normal_equations"].failure.startswith("NotPositiveDefinite")
    assert rep.error("normal_equations") == np.inf

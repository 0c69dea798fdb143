"""L1-sparsified importance scores fitted per layer.

For calibration activations X (samples x d) and the weight W (d x out) that the
scores gate, the scores minimise

    ||X diag(a) W - X W||_F^2 + lam * ||a||_1

starting from a = 1, by proximal gradient descent (ISTA) with step halving.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, DivergenceDetected
from .matcore import as_matrix, as_vector
from .prune import ImportanceScores

DEFAULT_LAMBDA = 1e-4
DEFAULT_ITERS = 500
MAX_HALVINGS = 10


@dataclass(frozen=True)
class FitConfig:
    calib: np.ndarray
    lam: float = DEFAULT_LAMBDA
    iters: int = DEFAULT_ITERS
    step: Optional[float] = None  # None: 1 / L from a power-iteration estimate

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be > 0")


def _check(X, W, a=None):
    X = as_matrix(X, "X")
    W = as_matrix(W, "W")
    if X.shape[1] != W.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[1]} features, W has {W.shape[0]} rows")
    if a is not None:
        a = as_vector(a, "a")
        if a.shape[0] != X.shape[1]:
            raise DimensionMismatch(f"a has {a.shape[0]} entries, expected {X.shape[1]}")
    return X, W, a


def _residual(X, W, a):
    # X diag(a) W - X W, written so that a == 1 gives exact zeros
    return X @ ((a - 1.0)[:, None] * W)


def objective(X, W, a, lam):
    X, W, a = _check(X, W, a)
    E = _residual(X, W, a)
    return float(np.sum(E * E) + lam * np.sum(np.abs(a)))


def grad_a(X, W, a):
    X, W, a = _check(X, W, a)
    E = _residual(X, W, a)
    return 2.0 * np.sum((X.T @ E) * W, axis=1)


def prox_l1(v, t):
    if t < 0:
        raise ValueError("t must be >= 0")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def lipschitz(X, W, iters=200):
    """2 * largest eigenvalue of (X^T X) * (W W^T) (Hadamard), by power iteration."""
    H = (X.T @ X) * (W @ W.T)
    d = H.shape[0]
    v = np.full(d, 1.0 / math.sqrt(d))
    lam = 0.0
    for _ in range(iters):
        w = H @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ H @ v)
        if abs(new - lam) <= 1e-12 * abs(new):
            lam = new
            break
        lam = new
    return 2.0 * lam


def ista(X, W, lam, iters, step=None):
    """Returns (a, objective history, final step). Every accepted step is nonincreasing.

    A step that raises the objective is retried with the step halved, up to
    MAX_HALVINGS times, then DivergenceDetected is raised. An increase at
    rounding level counts as convergence and ends the run.
    """
    X, W, _ = _check(X, W)
    d = X.shape[1]
    if step is None:
        L = lipschitz(X, W)
        step = 1.0 / L if L > 0 else 1.0
    a = np.ones(d)
    F = objective(X, W, a, lam)
    hist = [F]
    noise = 1e-12 * max(1.0, abs(F))
    for _ in range(iters):
        g = grad_a(X, W, a)
        for _ in range(MAX_HALVINGS + 1):
            cand = prox_l1(a - step * g, step * lam)
            Fc = objective(X, W, cand, lam)
            if Fc <= F or Fc - F <= noise:
                break
            step *= 0.5
        else:
            raise DivergenceDetected(f"objective rose from {F} to {Fc} after {MAX_HALVINGS} halvings")
        if Fc > F or np.array_equal(cand, a):
            # converged: the only remaining change is rounding noise
            break
        a, F = cand, Fc
        hist.append(F)
    return a, hist, step


def fit_scores(W, cfg, layer_id=""):
    a, _, _ = ista(cfg.calib, W, cfg.lam, cfg.iters, cfg.step)
    return ImportanceScores(a, cfg.lam, layer_id)


def sparsity(a, tol=0.0):
    """Fraction of entries with |a_i| <= tol."""
    a = np.asarray(a)
    return float(np.mean(np.abs(a) <= tol))

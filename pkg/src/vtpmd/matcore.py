"""Dense float64 matrix primitives and the elementwise functions used by the ViT engine.

Matrices are plain 2-D ``numpy.ndarray`` objects (float64, C order). ``as_matrix``
and ``as_vector`` are the validating constructors; every public operation in the
package funnels its inputs through them.
"""
import math

import numpy as np

from .errors import DimensionMismatch, NonFiniteError

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


def as_matrix(a, name="matrix"):
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name}: expected 2-D array, got {m.ndim}-D")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionMismatch(f"{name}: empty shape {m.shape}")
    if not np.isfinite(m).all():
        raise NonFiniteError(f"{name}: contains NaN or Inf")
    return m


def as_vector(v, name="vector"):
    x = np.ascontiguousarray(v, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"{name}: expected 1-D array, got {x.ndim}-D")
    if not np.isfinite(x).all():
        raise NonFiniteError(f"{name}: contains NaN or Inf")
    return x


def matmul(A, B):
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise DimensionMismatch(f"matmul: {A.shape} x {B.shape}")
    return A @ B


def transpose(A):
    return np.ascontiguousarray(as_matrix(A).T)


def frobenius_norm(A):
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0:
        return 0.0
    # scale first so huge/tiny entries neither overflow nor underflow
    scale = np.abs(A).max()
    if scale == 0.0:
        return 0.0
    return float(scale * math.sqrt(np.sum((A / scale) ** 2)))


def softmax_rows(A):
    return softmax_lastaxis(as_matrix(A))


def softmax_lastaxis(A):
    z = A - A.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm_rows(A, gamma, beta, eps=LN_EPS):
    A = as_matrix(A)
    gamma = as_vector(gamma, "gamma")
    beta = as_vector(beta, "beta")
    if not (gamma.shape[0] == beta.shape[0] == A.shape[1]):
        raise DimensionMismatch(
            f"layer_norm_rows: gamma {gamma.shape}, beta {beta.shape}, A {A.shape}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    return layer_norm_lastaxis(A, gamma, beta, eps)


def layer_norm_lastaxis(A, gamma, beta, eps=LN_EPS):
    mu = A.mean(axis=-1, keepdims=True)
    c = A - mu
    var = (c * c).mean(axis=-1, keepdims=True)
    return c / np.sqrt(var + eps) * gamma + beta


def gelu(A):
    """tanh-approximated GELU, elementwise."""
    x = np.asarray(A, dtype=np.float64)
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))

"""Fixed-size (2x2 and 4x4) dense matrix algebra.

Matrices are plain numpy arrays.  ``mat2`` and ``mat4`` validate shape and
finiteness; the remaining helpers accept anything array-like and most of them
broadcast over leading batch dimensions, which the holonomy code relies on.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import SingularMatrix

EPS = np.array([[0.0, 1.0], [-1.0, 0.0]])
I2 = np.eye(2)
I4 = np.eye(4)

SINGULAR_RTOL = 1e-12


def _checked(m, n: int) -> np.ndarray:
    arr = np.asarray(m)
    if arr.dtype.kind not in "fc":
        arr = arr.astype(float)
    if arr.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def mat2(m) -> np.ndarray:
    """Validate and return a real or complex 2x2 matrix."""
    return _checked(m, 2)


def mat4(m) -> np.ndarray:
    """Validate and return a 4x4 matrix, promoted to complex."""
    return _checked(m, 4).astype(complex)


def det2(m) -> complex | float:
    m = np.asarray(m)
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def inv2(m) -> np.ndarray:
    """Closed-form inverse of a 2x2 matrix.

    Raises SingularMatrix when ``|det m| <= 1e-12 * max(1, ||m||_inf)``.
    """
    m = np.asarray(m)
    d = det2(m)
    scale = max(1.0, float(np.max(np.sum(np.abs(m), axis=-1))))
    if np.any(np.abs(d) <= SINGULAR_RTOL * scale):
        raise SingularMatrix(f"2x2 matrix is singular to working precision (det={d})")
    out = np.empty_like(m, dtype=np.result_type(m, float))
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    out[..., 1, 1] = m[..., 0, 0]
    return out / np.asarray(d)[..., None, None]


def kron(a, b) -> np.ndarray:
    """Kronecker product; block (i, j) of the result is ``a[i, j] * b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    na, nb = a.shape[-1], b.shape[-1]
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    return out.reshape(a.shape[:-2] + (na * nb, na * nb))


def matmul(a, b) -> np.ndarray:
    return np.matmul(a, b)


def commutator(a, b) -> np.ndarray:
    return np.matmul(a, b) - np.matmul(b, a)


def trace(m):
    return np.trace(m, axis1=-2, axis2=-1)


def frobenius_norm(m) -> float:
    return float(np.sqrt(np.sum(np.abs(np.asarray(m)) ** 2)))


def _taylor_order(theta: float, tol: float) -> int:
    # smallest K with theta^(K+1)/(K+1)! * e^theta <= tol
    k = 1
    term = theta
    while term * math.exp(theta) / (k + 1) > tol and k < 60:
        k += 1
        term *= theta / k
    return k


def matexp(m, tol: float = 1e-16) -> np.ndarray:
    """Matrix exponential by scaling and squaring.

    The scaled matrix has 1-norm at most 1/2 and the Taylor order is the
    smallest one whose remainder bound falls below ``tol``.  Works on a
    single matrix or on a stack ``(..., n, n)``; a stack shares one scaling
    exponent, taken from its largest member.
    """
    m = np.asarray(m)
    if m.dtype.kind not in "fc":
        m = m.astype(float)
    n = m.shape[-1]
    norm = float(np.max(np.sum(np.abs(m), axis=-2))) if m.size else 0.0
    s = 0 if norm <= 0.5 else int(math.ceil(math.log2(norm / 0.5)))
    x = m / (2.0**s)
    order = _taylor_order(norm / 2.0**s, tol)
    eye = np.broadcast_to(np.eye(n, dtype=m.dtype), m.shape)
    result = eye.copy()
    term = eye.copy()
    for j in range(1, order + 1):
        term = np.matmul(term, x) / j
        result = result + term
    for _ in range(s):
        result = np.matmul(result, result)
    return result

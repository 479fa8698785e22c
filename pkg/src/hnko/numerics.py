"""Dense float64 linear-algebra kernels.

Everything in the package funnels matrix work through this module so that the
numerical conventions (rank tolerance of the pseudoinverse, the matrix
exponential's scaling policy, eigenpair ordering) live in exactly one place.
Matrices are plain ``numpy.ndarray`` objects: 2-D, float64, validated at the
boundaries by :func:`as_matrix`.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "as_matrix",
    "matmul",
    "pinv",
    "expm",
    "kron",
    "eig_orthogonal",
    "orthogonality_defect",
    "EXPM_TAYLOR_ORDER",
]

#: Order of the Taylor polynomial used by :func:`expm` after scaling.  With the
#: scaled 1-norm at most 0.5, the order-18 remainder is below 2**-60, i.e.
#: under float64 resolution.
EXPM_TAYLOR_ORDER = 18


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate ``a`` as a 2-D float64 array and return it (copying only if needed).

    Raises ``ValueError`` for wrong dimensionality and ``TypeError`` for
    non-numeric input.
    """
    try:
        out = np.asarray(a, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise TypeError(f"{name} must be numeric: {exc}") from None
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if out.size and not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit inner-dimension checking."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"inner dimensions do not match: {a.shape} @ {b.shape}"
        )
    return a @ b


def pinv(a, rank_tol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values below ``rank_tol`` times the largest singular value are
    treated as exactly zero (the matrix of all zeros maps to its transposed
    zero matrix).  ``rank_tol`` is relative, so the rank decision is invariant
    under uniform scaling of ``a``.
    """
    a = as_matrix(a, "a")
    if a.size == 0:
        return np.zeros((a.shape[1], a.shape[0]))
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cutoff = rank_tol * (s[0] if s.size else 0.0)
    inv_s = np.where(s > cutoff, np.divide(1.0, s, where=s > 0), 0.0)
    return (vt.T * inv_s) @ u.T


def _squarings(norm1: float) -> int:
    """Smallest s >= 0 with norm1 / 2**s <= 0.5."""
    if norm1 <= 0.5:
        return 0
    return int(math.ceil(math.log2(norm1 / 0.5)))


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring.

    The input is scaled by 2**-s until its 1-norm is at most 0.5, the
    exponential of the scaled matrix is evaluated as an order-18 Taylor
    polynomial in Horner form, and the result is squared s times.
    """
    a = as_matrix(a, "a")
    n, m = a.shape
    if n != m:
        raise ValueError(f"expm requires a square matrix, got shape {a.shape}")
    s = _squarings(float(np.abs(a).sum(axis=0).max()) if a.size else 0.0)
    x = a / float(2**s)
    eye = np.eye(n)
    # Horner evaluation: P <- I + (X / k) P for k = 18, ..., 1.
    p = eye.copy()
    for k in range(EXPM_TAYLOR_ORDER, 0, -1):
        p = eye + (x / k) @ p
    for _ in range(s):
        p = p @ p
    return p


def kron(a, b) -> np.ndarray:
    """Kronecker product; shapes (n, m) x (p, q) -> (n p, m q)."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    return np.kron(a, b)


def orthogonality_defect(k) -> float:
    """Frobenius norm of K K^T - I; zero exactly when K is orthogonal."""
    k = as_matrix(k, "k")
    if k.shape[0] != k.shape[1]:
        raise ValueError(f"orthogonality defect needs a square matrix, got {k.shape}")
    return float(np.linalg.norm(k @ k.T - np.eye(k.shape[0])))


def _phase_normalize(vec: np.ndarray) -> np.ndarray:
    """Unit-normalize and fix the free phase/sign of an eigenvector.

    The component of largest magnitude is rotated to the positive real axis,
    which makes eigendecompositions reproducible across runs.
    """
    vec = vec / np.linalg.norm(vec)
    idx = int(np.argmax(np.abs(vec)))
    pivot = vec[idx]
    if np.abs(pivot) > 0:
        vec = vec * (np.conj(pivot) / np.abs(pivot))
    return vec


def _real_representative(vec: np.ndarray) -> np.ndarray:
    """Best real unit vector spanning the same line as a (near-)real complex vector."""
    stacked = np.stack([vec.real, vec.imag], axis=1)
    u, _, _ = np.linalg.svd(stacked, full_matrices=False)
    out = u[:, 0]
    idx = int(np.argmax(np.abs(out)))
    if out[idx] < 0:
        out = -out
    return out


def eig_orthogonal(k, tol: float = 1e-6) -> list[tuple[complex, np.ndarray]]:
    """Eigendecomposition of an orthogonal matrix.

    Returns a list of ``(eigenvalue, eigenvector)`` pairs sorted by descending
    real part of the eigenvalue (ties broken by ascending imaginary part).
    Eigenvectors are unit complex128 vectors with a deterministic phase; for
    eigenvalues whose imaginary part is within ``tol`` of zero the eigenvector
    is realified (zero imaginary part), so e.g. the rotation-plus-fixed-axis
    matrix diag(R(theta), 1) reports the fixed axis itself for eigenvalue 1.

    Raises ``ValueError`` if ``k`` is not square, not orthogonal within
    ``tol`` (Frobenius defect), or if any computed eigenvalue strays from the
    unit circle by more than ``tol``.
    """
    k = as_matrix(k, "k")
    n, m = k.shape
    if n != m:
        raise ValueError(f"eig_orthogonal requires a square matrix, got {k.shape}")
    defect = orthogonality_defect(k)
    if defect > tol:
        raise ValueError(
            f"matrix is not orthogonal: ||K K^T - I||_F = {defect:.3e} > {tol:.3e}"
        )
    values, vectors = np.linalg.eig(k)
    off_circle = np.max(np.abs(np.abs(values) - 1.0)) if values.size else 0.0
    if off_circle > tol:
        raise ValueError(
            f"eigenvalue off the unit circle by {off_circle:.3e} (tol {tol:.3e})"
        )
    order = sorted(
        range(n),
        key=lambda i: (-round(values[i].real, 12), round(values[i].imag, 12)),
    )
    pairs: list[tuple[complex, np.ndarray]] = []
    for i in order:
        lam = complex(values[i])
        vec = _phase_normalize(vectors[:, i].astype(np.complex128))
        if abs(lam.imag) <= tol:
            vec = _real_representative(vec).astype(np.complex128)
        pairs.append((lam, vec))
    return pairs

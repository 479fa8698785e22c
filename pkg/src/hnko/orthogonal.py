"""Exactly orthogonal latent maps.

The latent advance matrix is never stored directly: it is the exponential of
a skew-symmetric generator, K = exp(S) with S = -S^T, so orthogonality holds
by construction for any parameter values (and det K = 1, so K is a rotation).
Parameters live in the strictly-upper-triangular entries of S.

Two variants:

- ``full``       one generator of size p, p(p-1)/2 parameters;
- ``kronecker``  K = K1 (x) K2 with K1, K2 of size sqrt(p), parameter count
  sqrt(p)(sqrt(p)-1) — linear in p instead of quadratic.  The Kronecker
  product of orthogonal matrices is orthogonal, so the structural guarantee
  survives the factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import numerics

__all__ = [
    "SkewParams",
    "OrthogonalKoopman",
    "alpha",
    "param_count",
    "init_koopman",
    "materialize",
    "koopman_node",
    "rollout",
]

VARIANTS = ("full", "kronecker")


@dataclass
class SkewParams:
    """Parameters of one skew-symmetric generator of size ``dim``.

    ``values`` has shape (dim(dim-1)/2, 1): the strictly-upper-triangular
    entries in row-major order.
    """

    dim: int
    values: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"generator dimension must be >= 1, got {self.dim}")
        expected = self.dim * (self.dim - 1) // 2
        self.values = np.asarray(self.values, dtype=np.float64).reshape(expected, 1)


def alpha(params: SkewParams) -> np.ndarray:
    """The skew-symmetric matrix S with S[i, j] = params (i < j, row-major)."""
    rows, cols = np.triu_indices(params.dim, k=1)
    mat = np.zeros((params.dim, params.dim))
    mat[rows, cols] = params.values[:, 0]
    mat[cols, rows] = -params.values[:, 0]
    return mat


def param_count(variant: str, p: int) -> int:
    """Number of free parameters for a latent map of size p.

    ``kronecker`` requires p to be a perfect square (two sqrt(p) factors).
    """
    if p < 1:
        raise ValueError(f"latent dimension must be >= 1, got {p}")
    if variant == "full":
        return p * (p - 1) // 2
    if variant == "kronecker":
        root = math.isqrt(p)
        if root * root != p:
            raise ValueError(
                f"kronecker variant needs a perfect-square latent dimension, got {p}"
            )
        return root * (root - 1)
    raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")


@dataclass
class OrthogonalKoopman:
    """A latent advance map, stored as its generator factor(s)."""

    variant: str
    factors: list[SkewParams]

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        expected_factors = 1 if self.variant == "full" else 2
        if len(self.factors) != expected_factors:
            raise ValueError(
                f"variant {self.variant!r} needs {expected_factors} factor(s), "
                f"got {len(self.factors)}"
            )
        if self.variant == "kronecker" and self.factors[0].dim != self.factors[1].dim:
            raise ValueError(
                f"kronecker factors must have equal size, got "
                f"{self.factors[0].dim} and {self.factors[1].dim}"
            )

    @property
    def dim(self) -> int:
        out = 1
        for f in self.factors:
            out *= f.dim
        return out

    @property
    def param_count(self) -> int:
        return sum(f.values.shape[0] for f in self.factors)


def init_koopman(p: int, variant: str = "full", rng: np.random.Generator | None = None) -> OrthogonalKoopman:
    """Identity initialization: all skew parameters zero, so exp(S) = I exactly.

    Starting from the identity assumes no latent motion until the data says
    otherwise: rotation planes the snapshots never excite keep eigenvalue 1
    instead of inheriting arbitrary small angles from a random draw.  The
    ``rng`` argument is accepted for signature stability but unused.
    """
    del rng
    param_count(variant, p)  # validates p/variant combination
    if variant == "full":
        dims = [p]
    else:
        root = math.isqrt(p)
        dims = [root, root]
    factors = [SkewParams(d, np.zeros((d * (d - 1) // 2, 1))) for d in dims]
    return OrthogonalKoopman(variant, factors)


def materialize(koop: OrthogonalKoopman) -> np.ndarray:
    """The dense p x p latent map K = exp(S1) (x) ... (orthogonal by construction)."""
    mats = [numerics.expm(alpha(f)) for f in koop.factors]
    out = mats[0]
    for m in mats[1:]:
        out = numerics.kron(out, m)
    return out


def koopman_node(param_leaves: list[ad.Node], dims: list[int]) -> ad.Node:
    """Differentiable version of :func:`materialize` over tape leaves.

    ``param_leaves[i]`` holds the (L_i, 1) parameter column of factor i with
    size ``dims[i]``.
    """
    if len(param_leaves) != len(dims):
        raise ValueError("one parameter leaf per factor dimension required")
    node = ad.expm_skew(param_leaves[0], dims[0])
    for extra_leaf, d in zip(param_leaves[1:], dims[1:]):
        node = ad.kron(node, ad.expm_skew(extra_leaf, d))
    return node


def rollout(koop: OrthogonalKoopman, y0: np.ndarray, steps: int) -> np.ndarray:
    """Latent trajectory (p, steps+1) by repeated application of K to a vector.

    The map is materialized once; each step is a matrix-vector product, never
    a matrix power, so the cost is steps * p^2.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    y0 = np.asarray(y0, dtype=np.float64).reshape(-1)
    if y0.shape[0] != koop.dim:
        raise ValueError(f"y0 has size {y0.shape[0]}, latent map expects {koop.dim}")
    k = materialize(koop)
    out = np.empty((koop.dim, steps + 1))
    out[:, 0] = y0
    y = y0
    for i in range(1, steps + 1):
        y = k @ y
        out[:, i] = y
    return out

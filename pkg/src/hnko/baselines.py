"""Linear predictive baselines: DMD and dictionary-lifted DMD (EDMD).

Plain DMD fits the least-squares one-step matrix K = X' X^+ directly on
state snapshots.  EDMD first lifts states through a dictionary of
probabilists' Hermite polynomials (He_0 = 1, He_1 = x, He_2 = x^2 - 1, ...,
He_{k+1} = x He_k - k He_{k-1}), with one feature per multi-index of total
degree <= `degree`, enumerated degree-graded so rows 1..n are exactly the
state coordinates.

Prediction is lifted-advanced-projected: at every step the *current state* is
lifted, advanced once by K, and the state block is read back off the
degree-one rows.  Re-lifting each step keeps the iterate on the dictionary
manifold instead of letting errors compound in feature space.

Neither baseline constrains the spectrum of K; on noisy data from a
conservative system its spectral radius drifts off 1 and long rollouts decay
or blow up.  That failure mode is reported by the evaluation layer, never
"fixed" here.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .systems import Trajectory

__all__ = [
    "HermiteDict",
    "LinearModel",
    "hermite_values",
    "dictionary_size",
    "lift",
    "dmd_fit",
    "edmd_fit",
    "linear_predict",
    "spectral_radius",
]

MAX_DICTIONARY_SIZE = 5000


def dictionary_size(n: int, degree: int) -> int:
    """Number of multivariate Hermite features: C(n + degree, degree)."""
    return math.comb(n + degree, degree)


@dataclass(frozen=True)
class HermiteDict:
    """Multivariate Hermite dictionary over n variables up to a total degree."""

    n: int
    degree: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one variable, got n={self.n}")
        if self.degree < 1:
            raise ValueError(
                f"degree must be >= 1 so the state block survives lifting, got {self.degree}"
            )
        size = dictionary_size(self.n, self.degree)
        if size > MAX_DICTIONARY_SIZE:
            raise ValueError(
                f"dictionary would have {size} features for n={self.n}, "
                f"degree={self.degree}; the cap is {MAX_DICTIONARY_SIZE}"
            )

    @property
    def size(self) -> int:
        return dictionary_size(self.n, self.degree)

    def multi_indices(self) -> list[tuple[int, ...]]:
        """Exponent tuples, degree-graded, lexicographic within each degree;
        index 0 is the constant, indices 1..n the bare coordinates."""
        out = []
        for total in range(self.degree + 1):
            for combo in itertools.combinations_with_replacement(range(self.n), total):
                alpha = [0] * self.n
                for var in combo:
                    alpha[var] += 1
                out.append(tuple(alpha))
        return out


def hermite_values(x: np.ndarray, degree: int) -> np.ndarray:
    """He_0 .. He_degree evaluated on an array, stacked along a new first axis."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((degree + 1, *x.shape))
    out[0] = 1.0
    if degree >= 1:
        out[1] = x
    for k in range(1, degree):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


def lift(dictionary: HermiteDict, states: np.ndarray) -> np.ndarray:
    """Feature matrix (size, M) for snapshot rows (M, n)."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 1:
        states = states.reshape(1, -1)
    if states.shape[1] != dictionary.n:
        raise ValueError(
            f"states have {states.shape[1]} coordinates, dictionary expects {dictionary.n}"
        )
    # per-variable Hermite table: (degree+1, M, n)
    table = hermite_values(states, dictionary.degree)
    rows = []
    for alpha in dictionary.multi_indices():
        feature = np.ones(states.shape[0])
        for var, exponent in enumerate(alpha):
            if exponent:
                feature = feature * table[exponent, :, var]
        rows.append(feature)
    return np.stack(rows, axis=0)


@dataclass
class LinearModel:
    """One-step linear predictor; `dictionary` is None for plain DMD."""

    matrix: np.ndarray
    dictionary: HermiteDict | None = None

    def __post_init__(self):
        self.matrix = numerics.as_matrix(self.matrix, "matrix")
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"advance matrix must be square, got {self.matrix.shape}")
        if self.dictionary is not None and self.dictionary.size != self.matrix.shape[0]:
            raise ValueError(
                f"matrix size {self.matrix.shape[0]} != dictionary size {self.dictionary.size}"
            )

    @property
    def state_dim(self) -> int:
        return self.dictionary.n if self.dictionary else self.matrix.shape[0]


def _snapshot_pair(states) -> tuple[np.ndarray, np.ndarray]:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] < 2:
        raise ValueError(
            f"need a (num_snapshots >= 2, n) state matrix, got shape {states.shape}"
        )
    return states[:-1], states[1:]


def dmd_fit(states) -> LinearModel:
    """Least-squares one-step matrix: K = X' X^+ (minimum-norm solution)."""
    before, after = _snapshot_pair(states)
    return LinearModel(numerics.matmul(after.T, numerics.pinv(before.T)))


def edmd_fit(states, degree: int = 2) -> LinearModel:
    """DMD on Hermite-lifted snapshots."""
    before, after = _snapshot_pair(states)
    dictionary = HermiteDict(before.shape[1], degree)
    lifted_before = lift(dictionary, before)
    lifted_after = lift(dictionary, after)
    k = numerics.matmul(lifted_after, numerics.pinv(lifted_before))
    return LinearModel(k, dictionary)


def linear_predict(
    lm: LinearModel, x0, steps: int, dt: float = 1.0, t0: float = 0.0
) -> Trajectory:
    """Roll the predictor forward; divergence is the caller's to notice."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.shape[0] != lm.state_dim:
        raise ValueError(f"x0 has length {x0.shape[0]}, model expects {lm.state_dim}")
    n = lm.state_dim
    out = np.empty((steps + 1, n))
    out[0] = x0
    x = x0
    for step in range(1, steps + 1):
        if lm.dictionary is None:
            x = lm.matrix @ x
        else:
            advanced = lm.matrix @ lift(lm.dictionary, x)[:, 0]
            x = advanced[1 : n + 1]  # degree-one block of the feature vector
        out[step] = x
    return Trajectory(out, dt, t0)


def spectral_radius(lm: LinearModel) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(lm.matrix))))

"""Prediction quality metrics and conservation-law discovery.

Metrics: per-step MSE, its time average, the exact 2-Wasserstein distance
between the predicted and reference state clouds, and relative invariant
drift (energy, plus mass for the wave system) along the prediction.

Discovery: eigenvalue analysis of the latent advance matrix.  Directions
fixed by the dynamics (eigenvalue 1) induce candidate conserved quantities
g_c(x) = <c, phi(x)>; candidates are ranked by how little g_c actually
varies along data, which is also what separates genuine invariants from
the slowly-rotating companions that accompany them in a conjugate pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import model as hm
from . import orthogonal
from .systems import SimulationError, SystemSpec, Trajectory, invariant_values, state_dim

__all__ = [
    "MAX_ASSIGNMENT_SIZE",
    "MetricsReport",
    "DiscoveredInvariant",
    "SlowMode",
    "evaluate",
    "wasserstein2",
    "discover_invariants",
    "slow_modes",
    "feature_variance",
]

MAX_ASSIGNMENT_SIZE = 5000


@dataclass
class MetricsReport:
    mse_per_step: np.ndarray
    mean_mse: float
    wasserstein2: float
    invariant_drift: dict[str, np.ndarray]
    horizon: int

    def as_dict(self) -> dict:
        return {
            "mse_per_step": self.mse_per_step.tolist(),
            "mean_mse": self.mean_mse,
            "wasserstein2": self.wasserstein2,
            "invariant_drift": {k: v.tolist() for k, v in self.invariant_drift.items()},
            "horizon": self.horizon,
        }


@dataclass
class DiscoveredInvariant:
    """A latent direction the advance matrix leaves (almost) fixed."""

    eigenvalue: complex
    coefficients: np.ndarray  # unit p-vector c
    temporal_variance: float
    normalized: bool = True


@dataclass
class SlowMode:
    """A conjugate eigenvalue pair rotating slowly but measurably."""

    eigenvalue: complex  # the Im > 0 representative
    plane: np.ndarray  # (p, 2) orthonormal basis of the rotation plane
    angle: float


def _states_of(data) -> np.ndarray:
    if isinstance(data, Trajectory):
        return data.states
    return np.asarray(data, dtype=np.float64)


def wasserstein2(a: np.ndarray, b: np.ndarray) -> float:
    """Exact 2-Wasserstein distance between two equal-size point sets.

    sqrt(min over pairings of the mean squared matched distance), computed
    with an exact linear assignment.  Sets larger than MAX_ASSIGNMENT_SIZE
    points are rejected (the N^2 cost matrix and N^3 solve get out of hand)
    rather than approximated.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"point sets must have equal cardinality, got {a.shape[0]} and {b.shape[0]}")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"point dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    n = a.shape[0]
    if n == 0:
        raise ValueError("point sets must be non-empty")
    if n > MAX_ASSIGNMENT_SIZE:
        raise ValueError(
            f"point sets of size {n} exceed the exact-assignment cap of {MAX_ASSIGNMENT_SIZE}"
        )
    # Pairwise ||a_i - b_j||^2 from actual differences (not the Gram-matrix
    # shortcut): identical points must cost exactly zero so that identical
    # sets measure exactly zero apart.
    sq = cdist(a, b, metric="sqeuclidean")
    rows, cols = linear_sum_assignment(sq)
    return float(np.sqrt(np.mean(sq[rows, cols])))


def _drift_series(spec: SystemSpec, name: str, states: np.ndarray, anchor: float) -> np.ndarray:
    scale = max(abs(anchor), 1e-300)
    out = np.empty(states.shape[0])
    for k, row in enumerate(states):
        try:
            value = invariant_values(spec, row)[name]
        except SimulationError:
            out[k] = np.inf
            continue
        out[k] = abs(value - anchor) / scale
    return out


def evaluate(
    predicted: Trajectory, truth: Trajectory, spec: SystemSpec, *, w2_cap: int | None = None
) -> MetricsReport:
    """Compare a predicted trajectory against a reference one.

    Per-step MSE (coordinate-mean squared error), its time average, the
    2-Wasserstein distance between the two state clouds, and for each
    conserved quantity the relative drift of the prediction, anchored at
    the reference trajectory's initial value.  States where an invariant
    cannot be evaluated (e.g. bodies driven onto a collision) yield inf
    drift entries.

    ``w2_cap`` bounds the number of states entering the Wasserstein term:
    longer trajectories are thinned to that many evenly spaced, time-aligned
    states first.  The default (None) feeds the full clouds to
    :func:`wasserstein2`, which rejects sets beyond MAX_ASSIGNMENT_SIZE.
    """
    pred = _states_of(predicted)
    ref = _states_of(truth)
    if pred.shape != ref.shape:
        raise ValueError(f"trajectory shapes differ: {pred.shape} vs {ref.shape}")
    n = state_dim(spec)
    if pred.shape[1] != n:
        raise ValueError(f"state dimension {pred.shape[1]} does not match the system's {n}")
    mse_per_step = np.mean((pred - ref) ** 2, axis=1)
    names = ["energy"]
    if "mass" in invariant_values(spec, ref[0]):
        names.insert(0, "mass")
    drift = {
        name: _drift_series(spec, name, pred, invariant_values(spec, ref[0])[name])
        for name in names
    }
    w2_pred, w2_ref = pred, ref
    if w2_cap is not None and pred.shape[0] > w2_cap:
        idx = np.round(np.linspace(0, pred.shape[0] - 1, int(w2_cap))).astype(int)
        w2_pred, w2_ref = pred[idx], ref[idx]
    return MetricsReport(
        mse_per_step=mse_per_step,
        mean_mse=float(np.mean(mse_per_step)),
        wasserstein2=wasserstein2(w2_pred, w2_ref),
        invariant_drift=drift,
        horizon=pred.shape[0] - 1,
    )


def _variance(series: np.ndarray) -> np.ndarray:
    """Temporal (population) variance along axis 0."""
    return np.var(series, axis=0)


def feature_variance(model: hm.HnkoModel, data) -> np.ndarray:
    """Temporal variance of each encoder output along the data."""
    states = _states_of(data)
    features = hm.encode(model, states)  # (M, p)
    return _variance(features)


def discover_invariants(
    model: hm.HnkoModel, data, tol: float = 1e-3
) -> list[DiscoveredInvariant]:
    """Candidate conserved quantities from the eigenvalue-1 subspace of K.

    Every eigenvalue within ``tol`` of 1 contributes its eigenvector's real
    and imaginary parts to a candidate subspace; an orthonormal basis of
    that subspace (rank-guarded SVD) gives one candidate direction each.
    A trained advance matrix rarely has an exactly real unit eigenvalue —
    near-identity conjugate pairs are the typical carrier of an invariant
    direction, and the temporal-variance ranking separates the genuinely
    conserved combination from its slowly rotating companion.

    Returns candidates sorted by ascending temporal variance of
    g_c(x_k) = <c, phi(x_k)>; empty list if no eigenvalue qualifies.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    states = _states_of(data)
    k_matrix = orthogonal.materialize(model.koopman)
    evals, evecs = np.linalg.eig(k_matrix)
    selected = np.abs(evals - 1.0) < tol
    if not np.any(selected):
        return []
    vecs = evecs[:, selected]
    parts = np.hstack([vecs.real, vecs.imag])
    u, sigma, _ = np.linalg.svd(parts, full_matrices=False)
    rank = int(np.sum(sigma > 1e-8 * sigma[0]))
    basis = u[:, :rank]
    features = hm.encode(model, states)  # (M, p)
    out = []
    for j in range(rank):
        c = basis[:, j]
        # Orient deterministically: largest-magnitude component positive.
        pivot = int(np.argmax(np.abs(c)))
        if c[pivot] < 0:
            c = -c
        rayleigh = float(c @ k_matrix @ c)
        variance = float(_variance(features @ c))
        out.append(DiscoveredInvariant(complex(rayleigh), c, variance))
    out.sort(key=lambda inv: inv.temporal_variance)
    return out


def slow_modes(
    model: hm.HnkoModel, tol: float = 1e-3, max_angle: float = 0.1
) -> list[SlowMode]:
    """Conjugate pairs rotating by a small but resolvable angle per step.

    Complements discover_invariants: eigenvalues with |lambda - 1| >= tol
    (so they are not near-identity) but rotation angle |arg lambda| at most
    ``max_angle``.  Each pair is reported once via its Im > 0 representative,
    with an orthonormal basis of its invariant plane.
    """
    k_matrix = orthogonal.materialize(model.koopman)
    evals, evecs = np.linalg.eig(k_matrix)
    out = []
    for i, lam in enumerate(evals):
        angle = float(np.angle(lam))
        if lam.imag <= 0 or abs(lam - 1.0) < tol or abs(angle) > max_angle:
            continue
        v = evecs[:, i]
        plane_parts = np.stack([v.real, v.imag], axis=1)
        u, sigma, _ = np.linalg.svd(plane_parts, full_matrices=False)
        plane = u[:, sigma > 1e-8 * sigma[0]]
        out.append(SlowMode(complex(lam), plane, angle))
    out.sort(key=lambda mode: abs(mode.angle))
    return out

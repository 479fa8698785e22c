"""Benchmark conservative systems: simulators, invariants, noise.

Four systems, one state convention each:

- :class:`NBody`      planar/!spatial gravitational n-body.  State layout
  ``[q_1, ..., q_n, p_1, ..., p_n]`` (each block ``spatial_dim`` long), with
  H = sum_i (m_i/2)||p_i||^2 - g sum_{i<j} m_i m_j / ||q_i - q_j||,
  so dq_i/dt = m_i p_i and dp_i/dt attracts.
- :class:`Kepler`     one planet around a fixed center, state (qx, qy, px, py),
  H = (m/2)||p||^2 - g m^2 / ||q||.
- :class:`MassSpring` harmonic oscillator, state (q, p),
  H = k q^2 / 2 + p^2 / (2 m); the update is the exact phase rotation, not an
  integrator.  The stiffness scale sqrt(k m) controls how eccentric the
  phase-space orbit is.
- :class:`Kdv`        u_t + u_xxx - 6 u u_x = 0 on a periodic domain, state =
  grid values of u.  Solved pseudo-spectrally with an integrating factor so
  the stiff dispersion term is handled exactly; discrete mass (dx * sum u) is
  conserved to round-off by construction.

Particle systems integrate with a 4th-order symplectic composition (three
leapfrog sub-steps with the classic weights w1, w0, w1), which keeps energy
drift bounded instead of secular.  The recording step ``dt`` is decoupled
from the internal integrator step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

__all__ = [
    "NBody",
    "Kepler",
    "MassSpring",
    "Kdv",
    "SystemSpec",
    "Trajectory",
    "SimulationError",
    "state_dim",
    "hamiltonian",
    "invariant_values",
    "simulate",
    "add_noise",
    "soliton",
    "figure_eight_x0",
    "FIGURE_EIGHT_PERIOD",
]

# Composition weights of the 4th-order splitting: w1, w0, w1 with
# w1 = 1/(2 - 2^(1/3)) and w0 = 1 - 2 w1 (negative middle step).
_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = 1.0 - 2.0 * _W1

_COLLISION_DISTANCE = 1e-6


class SimulationError(RuntimeError):
    """A simulation left its domain of validity (near-collision, overflow)."""


@dataclass(frozen=True)
class NBody:
    masses: tuple[float, ...] = (1.0, 1.0, 1.0)
    g: float = 1.0
    spatial_dim: int = 2

    def __post_init__(self):
        if len(self.masses) < 2:
            raise ValueError("n-body needs at least two bodies")
        if any(m <= 0 for m in self.masses):
            raise ValueError("masses must be positive")
        if self.spatial_dim < 1:
            raise ValueError("spatial_dim must be >= 1")


@dataclass(frozen=True)
class Kepler:
    m: float = 1.0
    g: float = 1.0

    def __post_init__(self):
        if self.m <= 0 or self.g <= 0:
            raise ValueError("Kepler mass and coupling must be positive")


@dataclass(frozen=True)
class MassSpring:
    m: float = 1.0
    k: float = 1.0

    def __post_init__(self):
        if self.m <= 0 or self.k <= 0:
            raise ValueError("spring mass and stiffness must be positive")

    @property
    def stiffness_scale(self) -> float:
        return math.sqrt(self.k * self.m)

    @property
    def period(self) -> float:
        return 2.0 * math.pi * math.sqrt(self.m / self.k)


@dataclass(frozen=True)
class Kdv:
    grid_points: int = 64
    domain_length: float = 50.0

    def __post_init__(self):
        if self.grid_points < 4:
            raise ValueError("need at least 4 grid points")
        if self.domain_length <= 0:
            raise ValueError("domain length must be positive")

    @property
    def dx(self) -> float:
        return self.domain_length / self.grid_points

    @property
    def grid(self) -> np.ndarray:
        return self.dx * np.arange(self.grid_points)


SystemSpec = Union[NBody, Kepler, MassSpring, Kdv]


@dataclass
class Trajectory:
    """Equally spaced snapshots: row k is the state at time t0 + k * dt."""

    states: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim != 2:
            raise ValueError(f"states must be 2-D, got shape {self.states.shape}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])

    def __len__(self) -> int:
        return self.states.shape[0]


def state_dim(spec: SystemSpec) -> int:
    if isinstance(spec, NBody):
        return 2 * len(spec.masses) * spec.spatial_dim
    if isinstance(spec, Kepler):
        return 4
    if isinstance(spec, MassSpring):
        return 2
    if isinstance(spec, Kdv):
        return spec.grid_points
    raise TypeError(f"unknown system spec {type(spec).__name__}")


def _nbody_split(spec: NBody, state: np.ndarray):
    n, d = len(spec.masses), spec.spatial_dim
    q = state[: n * d].reshape(n, d)
    p = state[n * d :].reshape(n, d)
    return q, p


def _nbody_distances(q: np.ndarray) -> np.ndarray:
    diff = q[:, None, :] - q[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2)), diff


def hamiltonian(spec: SystemSpec, state: np.ndarray) -> float:
    """Total energy of one state (for Kdv: the discrete quadratic invariant)."""
    state = np.asarray(state, dtype=np.float64).reshape(-1)
    if state.shape[0] != state_dim(spec):
        raise ValueError(
            f"state has length {state.shape[0]}, {type(spec).__name__} expects {state_dim(spec)}"
        )
    if isinstance(spec, NBody):
        q, p = _nbody_split(spec, state)
        masses = np.asarray(spec.masses)
        kinetic = 0.5 * float(np.sum(masses * np.sum(p * p, axis=1)))
        dist, _ = _nbody_distances(q)
        n = len(spec.masses)
        potential = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                if dist[i, j] < _COLLISION_DISTANCE:
                    raise SimulationError(
                        f"bodies {i} and {j} are coincident (distance {dist[i, j]:.3e}); "
                        "potential energy is singular"
                    )
                potential -= spec.g * masses[i] * masses[j] / dist[i, j]
        return kinetic + potential
    if isinstance(spec, Kepler):
        q, p = state[:2], state[2:]
        r = float(np.linalg.norm(q))
        if r < _COLLISION_DISTANCE:
            raise SimulationError(f"planet at the singularity (|q| = {r:.3e})")
        return 0.5 * spec.m * float(p @ p) - spec.g * spec.m**2 / r
    if isinstance(spec, MassSpring):
        q, p = state
        return 0.5 * spec.k * q * q + 0.5 * p * p / spec.m
    if isinstance(spec, Kdv):
        return spec.dx * float(np.sum(state * state))
    raise TypeError(f"unknown system spec {type(spec).__name__}")


def invariant_values(spec: SystemSpec, state: np.ndarray) -> dict[str, float]:
    """Conserved quantities of one state, keyed by name ('energy' always present
    for the mechanical systems; Kdv reports 'mass' and 'energy')."""
    state = np.asarray(state, dtype=np.float64).reshape(-1)
    if isinstance(spec, NBody):
        out = {"energy": hamiltonian(spec, state)}
        _, p = _nbody_split(spec, state)
        total = np.sum(p, axis=0)
        for axis in range(spec.spatial_dim):
            out[f"momentum_{axis}"] = float(total[axis])
        return out
    if isinstance(spec, Kepler):
        q, p = state[:2], state[2:]
        return {
            "energy": hamiltonian(spec, state),
            "angular_momentum": float(q[0] * p[1] - q[1] * p[0]),
        }
    if isinstance(spec, MassSpring):
        return {"energy": hamiltonian(spec, state)}
    if isinstance(spec, Kdv):
        return {
            "mass": spec.dx * float(np.sum(state)),
            "energy": hamiltonian(spec, state),
        }
    raise TypeError(f"unknown system spec {type(spec).__name__}")


# --- particle-system forces -------------------------------------------------


def _nbody_forces(spec: NBody, q: np.ndarray) -> np.ndarray:
    masses = np.asarray(spec.masses)
    dist, diff = _nbody_distances(q)
    n = len(spec.masses)
    pairwise = dist.copy()
    np.fill_diagonal(pairwise, np.inf)
    if np.min(pairwise) < _COLLISION_DISTANCE:
        i, j = np.unravel_index(np.argmin(pairwise), pairwise.shape)
        raise SimulationError(
            f"near-collision: bodies {min(i, j)} and {max(i, j)} at distance "
            f"{dist[i, j]:.3e} < {_COLLISION_DISTANCE:.0e}"
        )
    safe = dist + np.eye(n)  # avoid 0/0 on the diagonal
    inv3 = 1.0 / safe**3
    np.fill_diagonal(inv3, 0.0)
    # dp_i/dt = -g m_i sum_j m_j (q_i - q_j) / |q_i - q_j|^3
    weights = masses[:, None] * masses[None, :] * inv3
    return -spec.g * np.sum(weights[:, :, None] * diff, axis=1)


def _kepler_force(spec: Kepler, q: np.ndarray) -> np.ndarray:
    r = float(np.linalg.norm(q))
    if r < _COLLISION_DISTANCE:
        raise SimulationError(f"near-collision: planet at |q| = {r:.3e}")
    return -spec.g * spec.m**2 * q / r**3


def _leapfrog(q, p, h, force, velocity):
    p = p + 0.5 * h * force(q)
    q = q + h * velocity(p)
    p = p + 0.5 * h * force(q)
    return q, p


def _yoshida_step(q, p, h, force, velocity):
    q, p = _leapfrog(q, p, _W1 * h, force, velocity)
    q, p = _leapfrog(q, p, _W0 * h, force, velocity)
    q, p = _leapfrog(q, p, _W1 * h, force, velocity)
    return q, p


def _substeps(dt: float, internal_dt: float) -> tuple[int, float]:
    """Largest-step internal grid that lands exactly on the recording grid."""
    count = max(1, int(round(dt / internal_dt)))
    return count, dt / count


def _simulate_particles(spec, x0, dt, steps, internal_dt):
    if isinstance(spec, NBody):
        n, d = len(spec.masses), spec.spatial_dim
        masses = np.asarray(spec.masses)
        force = lambda q: _nbody_forces(spec, q)
        velocity = lambda p: masses[:, None] * p  # dq_i/dt = m_i p_i
        q = x0[: n * d].reshape(n, d).copy()
        p = x0[n * d :].reshape(n, d).copy()
    else:
        force = lambda q: _kepler_force(spec, q)
        velocity = lambda p: spec.m * p
        q = x0[:2].copy()
        p = x0[2:].copy()

    if internal_dt is None:
        internal_dt = 0.005
    count, h = _substeps(dt, internal_dt)
    out = np.empty((steps + 1, x0.shape[0]))
    out[0] = x0
    # A close encounter can be skipped over by a fixed step without any force
    # evaluation seeing a tiny distance; the symptom is a gross energy jump.
    # Guard on that too, so "abort" beats "silently corrupted slingshot".
    energy0 = hamiltonian(spec, x0)
    energy_scale = max(abs(energy0), 1e-300)
    for k in range(1, steps + 1):
        for _ in range(count):
            q, p = _yoshida_step(q, p, h, force, velocity)
        row = np.concatenate([q.reshape(-1), p.reshape(-1)])
        if not np.all(np.isfinite(row)):
            raise SimulationError(f"non-finite state at t = {k * dt:.6g}")
        if abs(hamiltonian(spec, row) - energy0) / energy_scale > 1e-2:
            raise SimulationError(
                f"energy error exceeded 1% at t = {k * dt:.6g}; the internal step "
                "cannot resolve the dynamics (close encounter or too-coarse internal_dt)"
            )
        out[k] = row
    return out


def _simulate_spring(spec: MassSpring, x0, dt, steps):
    omega = math.sqrt(spec.k / spec.m)
    c, s = math.cos(omega * dt), math.sin(omega * dt)
    out = np.empty((steps + 1, 2))
    out[0] = x0
    q, p = float(x0[0]), float(x0[1])
    for k in range(1, steps + 1):
        q, p = (
            q * c + p / (spec.m * omega) * s,
            p * c - q * spec.m * omega * s,
        )
        out[k] = (q, p)
    return out


def _kdv_wavenumbers(spec: Kdv) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(spec.grid_points, d=spec.dx)


def _simulate_kdv(spec: Kdv, x0, dt, steps, internal_dt):
    if internal_dt is None:
        internal_dt = 1e-3
    count, h = _substeps(dt, internal_dt)
    k = _kdv_wavenumbers(spec)
    # u_t = -u_xxx + 3 (u^2)_x  ->  u_hat_t = i k^3 u_hat + 3 i k (u^2)_hat;
    # the linear part is integrated exactly via the factor exp(i k^3 t).
    half = np.exp(1j * k**3 * (h / 2.0))
    full = half * half

    def nonlinear(u_hat):
        u = np.fft.ifft(u_hat).real
        return 3j * k * np.fft.fft(u * u)

    out = np.empty((steps + 1, spec.grid_points))
    out[0] = x0
    u_hat = np.fft.fft(x0)
    for step_idx in range(1, steps + 1):
        for _ in range(count):
            k1 = nonlinear(u_hat)
            k2 = nonlinear(half * (u_hat + (h / 2.0) * k1))
            k3 = nonlinear(half * u_hat + (h / 2.0) * k2)
            k4 = nonlinear(full * u_hat + h * half * k3)
            u_hat = full * u_hat + (h / 6.0) * (full * k1 + 2.0 * half * (k2 + k3) + k4)
        u = np.fft.ifft(u_hat).real
        if not np.all(np.isfinite(u)):
            raise SimulationError(f"non-finite field at t = {step_idx * dt:.6g}")
        out[step_idx] = u
    return out


def simulate(
    spec: SystemSpec,
    x0,
    dt: float,
    steps: int,
    internal_dt: float | None = None,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate ``steps`` recording intervals of length ``dt`` from ``x0``.

    ``internal_dt`` is the integrator sub-step (defaults: 0.005 for the
    particle systems, 1e-3 for Kdv; the harmonic oscillator is advanced
    exactly and ignores it).  The recording grid is exact: the integrator
    sub-step is rounded so an integer number of sub-steps lands on each
    recorded time.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.shape[0] != state_dim(spec):
        raise ValueError(
            f"x0 has length {x0.shape[0]}, {type(spec).__name__} expects {state_dim(spec)}"
        )
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 contains non-finite entries")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if internal_dt is not None and not 0 < internal_dt:
        raise ValueError(f"internal_dt must be positive, got {internal_dt}")

    if isinstance(spec, (NBody, Kepler)):
        states = _simulate_particles(spec, x0, dt, steps, internal_dt)
    elif isinstance(spec, MassSpring):
        states = _simulate_spring(spec, x0, dt, steps)
    elif isinstance(spec, Kdv):
        states = _simulate_kdv(spec, x0, dt, steps, internal_dt)
    else:
        raise TypeError(f"unknown system spec {type(spec).__name__}")
    return Trajectory(states, dt, t0)


def add_noise(traj: Trajectory, sigma2: float, seed: int) -> Trajectory:
    """I.i.d. Gaussian measurement noise N(0, sigma2) on every entry.

    Uses the PCG64 generator, so a given (trajectory, sigma2, seed) triple
    yields bit-identical output everywhere.  sigma2 = 0 returns an exact copy.
    """
    if sigma2 < 0:
        raise ValueError(f"noise variance must be >= 0, got {sigma2}")
    if sigma2 == 0:
        return replace(traj, states=traj.states.copy())
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = math.sqrt(sigma2) * rng.standard_normal(traj.states.shape)
    return replace(traj, states=traj.states + noise)


# --- reference solutions and presets ----------------------------------------


def soliton(spec: Kdv, c: float = 1.0, center: float = 25.0, t: float = 0.0) -> np.ndarray:
    """Analytic single-soliton profile u = -(c/2) sech^2(sqrt(c)/2 (x - c t - x0)).

    Valid as a reference while the wave stays away from the periodic seam
    (the sech tail decays like exp(-sqrt(c) |x|)).
    """
    if c <= 0:
        raise ValueError(f"soliton speed must be positive, got {c}")
    arg = 0.5 * math.sqrt(c) * (spec.grid - c * t - center)
    return -(c / 2.0) / np.cosh(arg) ** 2


#: Initial condition of the equal-mass planar figure-eight choreography
#: (positions of bodies 1 and 2 mirrored through the origin, body 3 at rest
#: in the center of mass; g = 1, unit masses).
_FE_Q1 = (0.97000436, -0.24308753)
_FE_V3 = (-0.93240737, -0.86473146)
FIGURE_EIGHT_PERIOD = 6.32591398


def figure_eight_x0() -> np.ndarray:
    q1 = np.array(_FE_Q1)
    v3 = np.array(_FE_V3)
    q = np.concatenate([q1, -q1, [0.0, 0.0]])
    p = np.concatenate([-0.5 * v3, -0.5 * v3, v3])
    return np.concatenate([q, p])

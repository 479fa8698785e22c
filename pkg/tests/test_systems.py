"""Simulator correctness: closed forms, conservation budgets, noise."""

import numpy as np
import pytest

from hnko import systems
from hnko.systems import Kdv, Kepler, MassSpring, NBody, SimulationError


def relative_drift(values):
    values = np.asarray(values)
    return np.max(np.abs(values - values[0])) / max(abs(values[0]), 1e-300)


class TestHamiltonianValues:
    def test_spring_hand_value(self):
        assert systems.hamiltonian(MassSpring(), [1.0, 0.0]) == 0.5

    def test_kepler_circular_hand_value(self):
        # (m/2)|p|^2 - g m^2/|q| = 0.5 - 1
        assert systems.hamiltonian(Kepler(), [1.0, 0.0, 0.0, 1.0]) == -0.5

    def test_two_bodies_at_rest(self):
        spec = NBody(masses=(1.0, 1.0))
        state = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        assert systems.hamiltonian(spec, state) == -1.0

    def test_figure_eight_energy(self):
        # Hand check: |q1| = 1 so r12 = 2, r13 = r23 = 1, V = -(1/2 + 1 + 1);
        # kinetic = (|v3|^2/4 + |v3|^2/4 + |v3|^2)/2 with |v3|^2 ~ 1.6172.
        h = systems.hamiltonian(NBody(), systems.figure_eight_x0())
        assert abs(h - (-1.2871419917663258)) < 1e-12

    def test_coincident_bodies_error(self):
        spec = NBody(masses=(1.0, 1.0))
        with pytest.raises(SimulationError, match="coincident"):
            systems.hamiltonian(spec, np.zeros(8))

    def test_kdv_quadratic(self):
        spec = Kdv(grid_points=64, domain_length=50.0)
        u = np.full(64, 0.7)
        assert np.isclose(systems.hamiltonian(spec, u), 0.49 * 50.0, atol=1e-12)

    def test_wrong_state_length(self):
        with pytest.raises(ValueError, match="length"):
            systems.hamiltonian(MassSpring(), [1.0, 0.0, 0.0])


class TestInvariantValues:
    def test_kdv_zero_field(self):
        spec = Kdv()
        vals = systems.invariant_values(spec, np.zeros(64))
        assert vals == {"mass": 0.0, "energy": 0.0}

    def test_kdv_constant_field(self):
        spec = Kdv()
        vals = systems.invariant_values(spec, np.full(64, 0.7))
        assert np.isclose(vals["mass"], 0.7 * 50.0, atol=1e-12)
        assert np.isclose(vals["energy"], 0.49 * 50.0, atol=1e-12)

    def test_kepler_angular_momentum(self):
        vals = systems.invariant_values(Kepler(), [1.0, 0.0, 0.0, 1.1])
        assert vals["angular_momentum"] == 1.1

    def test_nbody_momentum_names(self):
        vals = systems.invariant_values(NBody(), systems.figure_eight_x0())
        assert set(vals) == {"energy", "momentum_0", "momentum_1"}
        assert abs(vals["momentum_0"]) < 1e-15  # choreography has zero net momentum
        assert abs(vals["momentum_1"]) < 1e-15


class TestSpring:
    def test_quarter_period_closed_form(self):
        traj = systems.simulate(MassSpring(), [1.0, 0.0], np.pi / 200, 100)
        assert np.allclose(traj.states[-1], [0.0, -1.0], atol=1e-6)

    def test_energy_exactly_flat(self):
        spec = MassSpring(m=10.0, k=10.0)
        traj = systems.simulate(spec, [1.0, 0.0], 0.1, 500)
        energies = [systems.hamiltonian(spec, s) for s in traj.states]
        assert relative_drift(energies) < 1e-12

    @pytest.mark.parametrize("m,k", [(1.0, 1.0), (10.0, 10.0), (100.0, 100.0), (1.0, 4.0)])
    def test_period_from_zero_crossings(self, m, k):
        """Measured oscillation period within 0.1% of 2 pi sqrt(m/k)."""
        spec = MassSpring(m=m, k=k)
        dt = spec.period / 500
        traj = systems.simulate(spec, [1.0, 0.0], dt, 700)
        q = traj.states[:, 0]
        t = traj.times
        crossings = []
        for i in range(len(q) - 1):
            if q[i] == 0.0 or q[i] * q[i + 1] < 0:
                # linear interpolation of the zero
                crossings.append(t[i] + dt * q[i] / (q[i] - q[i + 1]))
        assert len(crossings) >= 2
        measured = 2.0 * (crossings[1] - crossings[0])
        assert abs(measured - spec.period) / spec.period < 1e-3

    def test_stiffness_scale(self):
        assert MassSpring(m=4.0, k=9.0).stiffness_scale == 6.0


class TestKepler:
    def test_circular_orbit_radius(self):
        traj = systems.simulate(Kepler(), [1.0, 0.0, 0.0, 1.0], 0.1, 500)
        radii = np.linalg.norm(traj.states[:, :2], axis=1)
        assert np.max(np.abs(radii - 1.0)) < 1e-6

    def test_energy_drift_eccentric(self):
        spec = Kepler()
        traj = systems.simulate(spec, [1.0, 0.0, 0.0, 1.1], 0.1, 500)
        energies = [systems.hamiltonian(spec, s) for s in traj.states]
        assert relative_drift(energies) < 1e-6

    def test_angular_momentum_drift(self):
        spec = Kepler()
        traj = systems.simulate(spec, [1.0, 0.0, 0.0, 1.1], 0.1, 500)
        ell = [systems.invariant_values(spec, s)["angular_momentum"] for s in traj.states]
        assert np.max(np.abs(np.asarray(ell) - ell[0])) < 1e-8


class TestNBody:
    def test_figure_eight_period_return(self):
        x0 = systems.figure_eight_x0()
        steps = 100
        traj = systems.simulate(NBody(), x0, systems.FIGURE_EIGHT_PERIOD / steps, steps)
        assert np.linalg.norm(traj.states[-1] - x0) < 1e-3

    def test_energy_drift_long_horizon(self):
        spec = NBody()
        traj = systems.simulate(spec, systems.figure_eight_x0(), 0.1, 500)
        energies = [systems.hamiltonian(spec, s) for s in traj.states]
        assert relative_drift(energies) < 1e-6

    def test_momentum_conserved(self):
        spec = NBody()
        traj = systems.simulate(spec, systems.figure_eight_x0(), 0.1, 500)
        momenta = np.array(
            [
                [systems.invariant_values(spec, s)[f"momentum_{a}"] for a in (0, 1)]
                for s in traj.states
            ]
        )
        assert np.max(np.abs(momenta - momenta[0])) < 1e-8

    def test_two_body_circular(self):
        """Equal masses on a circular mutual orbit: radius r from the center,
        |v| = sqrt(g m / (4 r)); with dq/dt = m p the momenta equal the velocities."""
        r, g, m = 1.0, 1.0, 1.0
        v = np.sqrt(g * m / (4 * r))
        spec = NBody(masses=(m, m))
        x0 = [r, 0.0, -r, 0.0, 0.0, v, 0.0, -v]
        traj = systems.simulate(spec, x0, 0.1, 200)
        separations = np.linalg.norm(traj.states[:, :2] - traj.states[:, 2:4], axis=1)
        assert np.max(np.abs(separations - 2 * r)) < 1e-6

    def test_head_on_collision_aborts(self):
        spec = NBody(masses=(1.0, 1.0))
        x0 = [-0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]
        with pytest.raises(SimulationError):
            systems.simulate(spec, x0, 0.1, 50)


class TestKdv:
    def test_soliton_translates_at_speed_c(self):
        spec = Kdv(grid_points=256, domain_length=50.0)
        traj = systems.simulate(spec, systems.soliton(spec, c=1.0, center=25.0), 0.5, 10)
        reference = systems.soliton(spec, c=1.0, center=25.0, t=5.0)
        assert np.max(np.abs(traj.states[-1] - reference)) < 1e-3

    def test_soliton_amplitude_and_sign(self):
        spec = Kdv()
        u = systems.soliton(spec, c=2.0, center=25.0)
        assert np.isclose(np.min(u), -1.0, atol=1e-6)  # depth c/2, negative wave
        assert np.max(u) < 1e-8

    def test_long_horizon_invariants(self):
        """Discrete mass to round-off, quadratic invariant within 1e-4, t <= 400."""
        spec = Kdv()
        traj = systems.simulate(spec, systems.soliton(spec), 2.0, 200)
        inv = np.array(
            [
                [systems.invariant_values(spec, s)[name] for name in ("mass", "energy")]
                for s in traj.states
            ]
        )
        assert relative_drift(inv[:, 0]) < 1e-6
        assert relative_drift(inv[:, 1]) < 1e-4

    def test_two_soliton_interaction_conserves(self):
        # 128 points: the faster (narrower) soliton needs the extra bandwidth.
        spec = Kdv(grid_points=128, domain_length=50.0)
        u0 = systems.soliton(spec, c=1.5, center=15.0) + systems.soliton(spec, c=0.75, center=30.0)
        traj = systems.simulate(spec, u0, 1.0, 40)
        energies = [systems.hamiltonian(spec, s) for s in traj.states]
        assert relative_drift(energies) < 1e-4


class TestSimulateContract:
    def test_recording_grid_is_exact(self):
        traj = systems.simulate(MassSpring(), [1.0, 0.0], 0.1, 10, t0=3.0)
        assert np.allclose(traj.times, 3.0 + 0.1 * np.arange(11), atol=1e-15)

    def test_internal_step_decoupled_from_recording(self):
        spec = Kepler()
        coarse = systems.simulate(spec, [1.0, 0.0, 0.0, 1.1], 0.2, 25, internal_dt=0.005)
        fine = systems.simulate(spec, [1.0, 0.0, 0.0, 1.1], 0.2, 25, internal_dt=0.00125)
        assert coarse.states.shape == fine.states.shape
        assert np.max(np.abs(coarse.states - fine.states)) < 1e-8

    def test_zero_steps(self):
        traj = systems.simulate(MassSpring(), [1.0, 0.0], 0.1, 0)
        assert traj.states.shape == (1, 2)

    def test_bad_x0_length(self):
        with pytest.raises(ValueError, match="length"):
            systems.simulate(MassSpring(), [1.0, 0.0, 0.0], 0.1, 5)

    def test_non_finite_x0(self):
        with pytest.raises(ValueError, match="non-finite"):
            systems.simulate(MassSpring(), [np.nan, 0.0], 0.1, 5)

    def test_negative_steps(self):
        with pytest.raises(ValueError, match="steps"):
            systems.simulate(MassSpring(), [1.0, 0.0], 0.1, -1)

    def test_bad_dt(self):
        with pytest.raises(ValueError, match="dt"):
            systems.simulate(MassSpring(), [1.0, 0.0], 0.0, 5)

    def test_state_dims(self):
        assert systems.state_dim(NBody()) == 12
        assert systems.state_dim(NBody(masses=(1.0, 1.0), spatial_dim=3)) == 12
        assert systems.state_dim(Kepler()) == 4
        assert systems.state_dim(MassSpring()) == 2
        assert systems.state_dim(Kdv(grid_points=80)) == 80


class TestAddNoise:
    def test_zero_variance_is_exact_copy(self):
        traj = systems.simulate(MassSpring(), [1.0, 0.0], 0.1, 20)
        noisy = systems.add_noise(traj, 0.0, seed=5)
        assert np.array_equal(noisy.states, traj.states)
        assert noisy.states is not traj.states

    def test_same_seed_bit_identical(self):
        traj = systems.simulate(MassSpring(), [1.0, 0.0], 0.1, 20)
        a = systems.add_noise(traj, 0.01, seed=42)
        b = systems.add_noise(traj, 0.01, seed=42)
        assert np.array_equal(a.states, b.states)

    def test_different_seeds_differ(self):
        traj = systems.simulate(MassSpring(), [1.0, 0.0], 0.1, 20)
        a = systems.add_noise(traj, 0.01, seed=1)
        b = systems.add_noise(traj, 0.01, seed=2)
        assert not np.array_equal(a.states, b.states)

    def test_empirical_variance(self):
        traj = systems.Trajectory(np.zeros((100, 100)), dt=1.0)
        noisy = systems.add_noise(traj, 0.03, seed=7)
        assert abs(np.var(noisy.states) - 0.03) < 0.003

    def test_negative_variance_rejected(self):
        traj = systems.simulate(MassSpring(), [1.0, 0.0], 0.1, 2)
        with pytest.raises(ValueError, match="variance"):
            systems.add_noise(traj, -0.1, seed=0)

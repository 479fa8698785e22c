"""DMD/EDMD behavior: exact recovery, min-norm structure, dictionary algebra."""

import numpy as np
import pytest

from hnko import baselines
from hnko.baselines import HermiteDict


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def orbit(matrix, x0, steps):
    out = [np.asarray(x0, dtype=np.float64)]
    for _ in range(steps):
        out.append(matrix @ out[-1])
    return np.array(out)


class TestDmd:
    def test_recovers_rotation_exactly(self):
        r = rotation(0.37)
        states = orbit(r, [1.0, 0.2], 50)
        lm = baselines.dmd_fit(states)
        assert np.max(np.abs(lm.matrix - r)) < 1e-10

    def test_rollout_tracks_linear_truth(self):
        r = rotation(0.37)
        states = orbit(r, [1.0, 0.2], 50)
        lm = baselines.dmd_fit(states)
        pred = baselines.linear_predict(lm, states[0], 100)
        truth = orbit(r, states[0], 100)
        assert np.max(np.abs(pred.states - truth)) < 1e-6

    def test_constant_trajectory_is_fixed_point(self):
        c = np.array([1.0, -2.0, 0.5])
        states = np.tile(c, (10, 1))
        lm = baselines.dmd_fit(states)
        assert np.allclose(lm.matrix @ c, c, atol=1e-12)

    def test_minimum_norm_on_rank_deficient_data(self):
        """Data confined to a plane: K must annihilate the orthogonal complement."""
        rng = np.random.default_rng(0)
        basis = np.linalg.qr(rng.standard_normal((4, 2)))[0]  # (4, 2)
        plane_states = rng.standard_normal((20, 2)) @ basis.T  # rank-2 rows in R^4
        lm = baselines.dmd_fit(plane_states)
        normal_space = np.linalg.qr(rng.standard_normal((4, 4)))[0][:, 2:]
        perp = normal_space - basis @ (basis.T @ normal_space)
        assert np.max(np.abs(lm.matrix @ perp)) < 1e-8

    def test_residual_matches_lstsq(self):
        rng = np.random.default_rng(1)
        states = rng.standard_normal((15, 3))
        lm = baselines.dmd_fit(states)
        x, xp = states[:-1].T, states[1:].T
        best, *_ = np.linalg.lstsq(x.T, xp.T, rcond=None)
        assert abs(
            np.linalg.norm(lm.matrix @ x - xp) - np.linalg.norm(best.T @ x - xp)
        ) < 1e-9

    def test_noisy_conservative_data_leaves_unit_circle(self):
        rng = np.random.default_rng(2)
        states = orbit(rotation(0.3), [1.0, 0.0], 80)
        states = states + 0.05 * rng.standard_normal(states.shape)
        lm = baselines.dmd_fit(states)
        assert abs(baselines.spectral_radius(lm) - 1.0) > 1e-5

    def test_spectral_radius_of_rotation_is_one(self):
        lm = baselines.dmd_fit(orbit(rotation(0.3), [1.0, 0.0], 30))
        assert abs(baselines.spectral_radius(lm) - 1.0) < 1e-10

    def test_too_few_snapshots(self):
        with pytest.raises(ValueError, match="num_snapshots"):
            baselines.dmd_fit(np.ones((1, 3)))


class TestHermiteDictionary:
    def test_sizes_match_binomial(self):
        assert baselines.dictionary_size(1, 2) == 3
        assert baselines.dictionary_size(4, 2) == 15
        assert baselines.dictionary_size(2, 3) == 10
        assert baselines.dictionary_size(64, 2) == 2145

    def test_univariate_values(self):
        # He_0..He_3 at x = 2: 1, 2, 3, 2
        vals = baselines.hermite_values(np.array([2.0]), 3)[:, 0]
        assert np.array_equal(vals, [1.0, 2.0, 3.0, 2.0])

    def test_recurrence_against_explicit_he4(self):
        x = np.linspace(-2, 2, 9)
        vals = baselines.hermite_values(x, 4)
        assert np.allclose(vals[4], x**4 - 6 * x**2 + 3, atol=1e-12)

    def test_lift_rows_start_with_constant_then_state(self):
        d = HermiteDict(2, 2)
        states = np.array([[1.5, -0.5], [0.0, 2.0]])
        lifted = baselines.lift(d, states)
        assert lifted.shape == (6, 2)
        assert np.array_equal(lifted[0], [1.0, 1.0])
        assert np.array_equal(lifted[1], states[:, 0])
        assert np.array_equal(lifted[2], states[:, 1])

    def test_lift_cross_term(self):
        d = HermiteDict(2, 2)
        # multi-indices: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2)
        lifted = baselines.lift(d, np.array([[3.0, 4.0]]))
        assert np.allclose(
            lifted[:, 0], [1.0, 3.0, 4.0, 8.0, 12.0, 15.0], atol=1e-12
        )

    def test_cap_enforced_with_count_in_message(self):
        with pytest.raises(ValueError, match="91881"):
            HermiteDict(80, 3)

    def test_degree_zero_rejected(self):
        with pytest.raises(ValueError, match="degree"):
            HermiteDict(3, 0)


class TestEdmd:
    def test_linear_system_matches_dmd_predictions(self):
        states = orbit(rotation(0.25), [0.8, -0.3], 40)
        dmd = baselines.dmd_fit(states)
        edmd = baselines.edmd_fit(states, degree=1)
        pred_dmd = baselines.linear_predict(dmd, states[0], 60)
        pred_edmd = baselines.linear_predict(edmd, states[0], 60)
        assert np.max(np.abs(pred_dmd.states - pred_edmd.states)) < 1e-8

    def test_quadratic_map_beyond_plain_dmd(self):
        """x' = x^2 - 0.5 is linear in Hermite features but not in x."""

        def step(x):
            return x * x - 0.5

        xs = [0.9]
        for _ in range(30):
            xs.append(step(xs[-1]))
        states = np.array(xs).reshape(-1, 1)
        edmd = baselines.edmd_fit(states, degree=2)
        dmd = baselines.dmd_fit(states)
        x0 = states[0]
        truth = states[:11, 0]
        pred_e = baselines.linear_predict(edmd, x0, 10).states[:, 0]
        pred_d = baselines.linear_predict(dmd, x0, 10).states[:, 0]
        assert np.max(np.abs(pred_e - truth)) < 1e-8
        assert np.max(np.abs(pred_d - truth)) > 1e-3

    def test_relift_each_step(self):
        """Predictions must re-lift the projected state, not power the matrix."""
        rng = np.random.default_rng(3)
        states = rng.standard_normal((12, 2))
        edmd = baselines.edmd_fit(states, degree=2)
        pred = baselines.linear_predict(edmd, states[0], 3)
        x = states[0]
        for _ in range(3):
            x = (edmd.matrix @ baselines.lift(edmd.dictionary, x)[:, 0])[1:3]
        assert np.allclose(pred.states[-1], x, atol=1e-12)

    def test_dictionary_attached(self):
        states = np.random.default_rng(4).standard_normal((8, 3))
        lm = baselines.edmd_fit(states, degree=2)
        assert lm.dictionary == HermiteDict(3, 2)
        assert lm.matrix.shape == (10, 10)


class TestLinearPredict:
    def test_identity_constant(self):
        lm = baselines.LinearModel(np.eye(3))
        pred = baselines.linear_predict(lm, [1.0, 2.0, 3.0], 5, dt=0.5, t0=1.0)
        assert np.allclose(pred.states, pred.states[0], atol=1e-15)
        assert pred.dt == 0.5 and pred.t0 == 1.0

    def test_dimension_mismatch(self):
        lm = baselines.LinearModel(np.eye(3))
        with pytest.raises(ValueError, match="length"):
            baselines.linear_predict(lm, [1.0, 2.0], 5)

    def test_decaying_matrix_decays(self):
        lm = baselines.LinearModel(0.9 * np.eye(2))
        pred = baselines.linear_predict(lm, [1.0, 1.0], 50)
        assert np.linalg.norm(pred.states[-1]) < 1e-2

"""Loss-term oracles on a hand-built linear model, plus init and tape checks."""

import math

import numpy as np
import pytest

from hnko import autodiff as ad
from hnko import model as hm
from hnko import orthogonal


def linear_model(q_cols, log_radius=0.0):
    """n=2 -> p=4 embedding (x1, x2, 0, 0), exact linear reconstruction, K = I."""
    enc = hm.MlpParams(
        [np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])], [np.zeros(4)]
    )
    dec = hm.MlpParams([np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])], [np.zeros(2)])
    koop = orthogonal.OrthogonalKoopman("full", [orthogonal.SkewParams(4, np.zeros((6, 1)))])
    return hm.HnkoModel(enc, dec, koop, log_radius, np.asarray(q_cols, dtype=np.float64))


E1 = [[1.0], [0.0], [0.0], [0.0]]
E3 = [[0.0], [0.0], [1.0], [0.0]]
CIRCLE = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])  # three unit-circle states


class TestQRange:
    def test_bounds(self):
        assert hm.q_range(4) == (1, 2)
        assert hm.q_range(6) == (2, 4)
        assert hm.q_range(16) == (7, 14)
        assert hm.q_range(80) == (39, 78)

    @pytest.mark.parametrize("q", [0, 3])
    def test_out_of_range_rejected(self, q):
        with pytest.raises(ValueError, match="hyperplane count"):
            linear_model(np.zeros((4, q)) + np.eye(4)[:, :q])

    def test_zero_q_allowed_for_p2(self):
        enc = hm.MlpParams([np.eye(2)], [np.zeros(2)])
        dec = hm.MlpParams([np.eye(2)], [np.zeros(2)])
        koop = orthogonal.OrthogonalKoopman("full", [orthogonal.SkewParams(2, np.zeros((1, 1)))])
        m = hm.HnkoModel(enc, dec, koop, 0.0, np.zeros((2, 0)))
        assert hm.loss_deg(m, CIRCLE) == 0.0
        assert hm.loss_ind(m) == 0.0


class TestLossOracles:
    def test_dict_zero_for_exact_reconstruction(self):
        assert hm.loss_dict(linear_model(E3), CIRCLE) == 0.0

    def test_dict_hand_value(self):
        m = linear_model(E3)
        m.decoder.weights[0] = np.zeros((2, 4))  # decoder outputs 0
        # sum of ||x_i||^2 over the three snapshots
        assert hm.loss_dict(m, CIRCLE) == 3.0

    def test_koop_identity_map_hand_value(self):
        # K = I: sum ||y_i - y_{i+1}||^2 = |(1,0)-(0,1)|^2 + |(0,1)-(-1,0)|^2
        assert hm.loss_koop(linear_model(E3), CIRCLE) == 4.0

    def test_koop_zero_when_latents_fixed(self):
        m = linear_model(E3)
        states = np.array([[0.5, 0.5], [0.5, 0.5]])
        assert hm.loss_koop(m, states) == 0.0

    def test_sphere_zero_on_unit_circle(self):
        assert hm.loss_sphere(linear_model(E3, log_radius=0.0), CIRCLE) == 0.0

    def test_sphere_hand_value(self):
        # r = e^0 = 1, data at norm sqrt(2): (2 - 1)^2 per snapshot
        m = linear_model(E3)
        states = np.array([[1.0, 1.0], [1.0, -1.0]])
        assert hm.loss_sphere(m, states) == 2.0

    def test_deg_zero_for_orthogonal_hyperplane(self):
        assert hm.loss_deg(linear_model(E3), CIRCLE) == 0.0

    def test_deg_hand_value(self):
        # <e1, y_i>^2 sums to 1 + 0 + 1
        assert hm.loss_deg(linear_model(E1), CIRCLE) == 2.0

    def test_deg_invariant_under_column_scaling(self):
        scaled = linear_model(np.asarray(E1) * 7.5)
        assert abs(hm.loss_deg(scaled, CIRCLE) - 2.0) < 1e-12

    def test_deg_rejects_zero_column(self):
        m = linear_model(np.zeros((4, 1)))
        with pytest.raises(ValueError, match="near-zero norm"):
            hm.loss_deg(m, CIRCLE)

    def test_ind_identical_unit_columns(self):
        m = linear_model(np.hstack([E1, E1]))
        assert hm.loss_ind(m) == 2.0

    def test_ind_orthonormal_columns(self):
        m = linear_model(np.hstack([E1, E3]))
        assert hm.loss_ind(m) == 0.0

    def test_total_is_weighted_sum(self):
        m = linear_model(E1)
        weights = (1.0, 2.0, 3.0, 4.0, 5.0)
        breakdown = hm.total_loss(m, CIRCLE, weights)
        expected = (
            1.0 * hm.loss_dict(m, CIRCLE)
            + 2.0 * hm.loss_koop(m, CIRCLE)
            + 3.0 * hm.loss_sphere(m, CIRCLE)
            + 4.0 * hm.loss_deg(m, CIRCLE)
            + 5.0 * hm.loss_ind(m)
        )
        assert breakdown.total == expected
        assert breakdown.weights == weights

    def test_zero_weights_zero_total(self):
        breakdown = hm.total_loss(linear_model(E1), CIRCLE, (0.0,) * 5)
        assert breakdown.total == 0.0

    def test_single_snapshot_rejected(self):
        with pytest.raises(ValueError, match="two snapshots"):
            hm.total_loss(linear_model(E3), CIRCLE[:1])


def random_model(seed=0, n=3, p=4, q=2, hidden=None):
    rng = np.random.default_rng(seed)
    states = rng.standard_normal((6, n))
    m = hm.init_model(n, p, q, hidden=hidden or [6], seed=seed, train_states=states)
    return m, states


class TestLossGraph:
    def test_terms_match_plain_losses(self):
        m, states = random_model(seed=1)
        _, terms, _ = hm.loss_graph(m, states)
        assert abs(float(terms["dict"].value) - hm.loss_dict(m, states)) < 1e-12
        assert abs(float(terms["koop"].value) - hm.loss_koop(m, states)) < 1e-10
        assert abs(float(terms["sphere"].value) - hm.loss_sphere(m, states)) < 1e-12
        assert abs(float(terms["deg"].value) - hm.loss_deg(m, states)) < 1e-12
        assert abs(float(terms["ind"].value) - hm.loss_ind(m)) < 1e-12

    def test_total_matches_breakdown(self):
        m, states = random_model(seed=2)
        weights = (1.0, 0.5, 2.0, 0.25, 4.0)
        total, _, _ = hm.loss_graph(m, states, weights)
        assert abs(float(total.value) - hm.total_loss(m, states, weights).total) < 1e-10

    def test_gradients_match_finite_differences(self):
        m, states = random_model(seed=3)
        total, _, leaves = hm.loss_graph(m, states)
        grads = ad.backward(total, list(leaves.values()))
        params = hm.params_of(m)
        h = 1e-5
        for name, leaf in leaves.items():
            grad = grads[leaf]
            flat_fd = np.zeros(grad.size)
            base = params[name]
            for idx in range(base.size):
                for sign, store in ((+1, 0), (-1, 1)):
                    shifted = dict(params)
                    arr = base.copy().reshape(-1)
                    arr[idx] += sign * h
                    shifted[name] = arr.reshape(base.shape)
                    val = hm.total_loss(hm.with_params(m, shifted), states).total
                    if store == 0:
                        plus = val
                    else:
                        flat_fd[idx] = (plus - val) / (2 * h)
            denom = max(np.linalg.norm(flat_fd), 1e-12)
            rel = np.linalg.norm(grad.reshape(-1) - flat_fd) / denom
            assert rel < 1e-4, f"{name}: rel err {rel:.2e}"

    def test_repeated_graph_build_deterministic(self):
        m, states = random_model(seed=4)
        t1, _, l1 = hm.loss_graph(m, states)
        t2, _, l2 = hm.loss_graph(m, states)
        assert float(t1.value) == float(t2.value)
        g1 = ad.backward(t1, list(l1.values()))
        g2 = ad.backward(t2, list(l2.values()))
        for leaf1, leaf2 in zip(l1.values(), l2.values()):
            assert np.array_equal(g1[leaf1], g2[leaf2])


class TestInit:
    def test_default_architecture(self):
        m = hm.init_model(4, 6, 2)
        assert [w.shape for w in m.encoder.weights] == [(64, 4), (64, 64), (6, 64)]
        assert [w.shape for w in m.decoder.weights] == [(64, 6), (64, 64), (4, 64)]
        assert m.koopman.param_count == 15
        assert m.hyperplanes.shape == (6, 2)

    def test_width_scales_with_latent_dim(self):
        assert hm.default_width(80) == 320
        assert hm.default_width(6) == 64

    def test_same_seed_bit_identical(self):
        a = hm.init_model(4, 6, 2, seed=9)
        b = hm.init_model(4, 6, 2, seed=9)
        for wa, wb in zip(a.encoder.weights, b.encoder.weights):
            assert np.array_equal(wa, wb)
        assert np.array_equal(a.hyperplanes, b.hyperplanes)
        assert np.array_equal(a.koopman.factors[0].values, b.koopman.factors[0].values)

    def test_init_mlp_xavier_bounds(self):
        rng = np.random.Generator(np.random.PCG64(1))
        mlp = hm.init_mlp([4, 32, 6], rng)
        for w in mlp.weights:
            bound = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            assert np.max(np.abs(w)) <= bound
            assert np.max(np.abs(w)) > 0.1 * bound

    def test_init_model_warm_start_is_near_identity(self):
        m = hm.init_model(4, 6, 2, seed=1)
        x = np.random.default_rng(7).uniform(-1.5, 1.5, size=(30, 4))
        y = hm.encode(m, x)
        assert np.max(np.abs(y[:, :4] - x)) < 0.05
        assert np.max(np.abs(hm.decode(m, y) - x)) < 0.08

    def test_init_model_single_hidden_warm_start(self):
        m = hm.init_model(2, 4, 1, hidden=[16], seed=3)
        x = np.random.default_rng(8).uniform(-1.0, 1.0, size=(10, 2))
        assert np.max(np.abs(hm.decode(m, hm.encode(m, x)) - x)) < 0.05

    def test_biases_start_at_zero(self):
        m = hm.init_model(4, 6, 2, seed=1)
        for b in m.encoder.biases + m.decoder.biases:
            assert np.array_equal(b, np.zeros_like(b))

    def test_radius_from_data(self):
        states = np.array([[3.0, 4.0], [0.1, 0.1]])  # max norm 5
        m = hm.init_model(2, 4, 1, train_states=states)
        assert abs(m.radius - 5.5) < 1e-12
        assert m.radius**2 >= np.max(np.sum(states**2, axis=1))

    def test_hyperplanes_orthonormal(self):
        m = hm.init_model(4, 8, 3, seed=2)
        gram = m.hyperplanes.T @ m.hyperplanes
        assert np.allclose(gram, np.eye(3), atol=1e-12)

    def test_kronecker_variant(self):
        m = hm.init_model(4, 16, 7, variant="kronecker", seed=3)
        assert m.koopman.variant == "kronecker"
        assert m.koopman.param_count == 12  # 2 * C(4, 2)

    def test_params_roundtrip(self):
        m, _ = random_model(seed=5)
        rebuilt = hm.with_params(m, hm.params_of(m))
        assert np.array_equal(rebuilt.encoder.weights[0], m.encoder.weights[0])
        assert rebuilt.log_radius == m.log_radius
        assert np.array_equal(rebuilt.hyperplanes, m.hyperplanes)

    def test_data_warm_start_opens_on_the_sphere(self):
        # planar orbit: the principal-component start puts every encoded
        # state near the sphere and inside the hyperplane kernel
        t = np.linspace(0.0, 2 * np.pi, 120, endpoint=False)
        states = np.stack([np.cos(t), np.sin(t), -np.sin(t), np.cos(t)], axis=1)
        m = hm.init_model(4, 5, 3, seed=2, train_states=states)
        y = hm.encode(m, states)
        norms = np.linalg.norm(y, axis=1)
        assert np.max(np.abs(norms - m.radius)) < 0.05 * m.radius
        # kernel alignment is exact for the affine target; tanh curvature
        # leaks a little of the signal back into the hyperplane span
        assert np.max(np.abs(y @ m.hyperplanes)) < 1e-3 * m.radius
        assert np.max(np.abs(hm.decode(m, y) - states)) < 0.02

    def test_data_warm_start_handles_large_offsets(self):
        # field-like data far from the origin: the warm start must linearize
        # around the data mean, not the origin
        t = np.linspace(0.0, 2 * np.pi, 90, endpoint=False)
        grid = np.arange(12)
        states = 5.0 + 0.4 * np.cos(t[:, None] + 2 * np.pi * grid[None, :] / 12)
        m = hm.init_model(12, 5, 3, seed=4, train_states=states)
        y = hm.encode(m, states)
        norms = np.linalg.norm(y, axis=1)
        assert np.max(np.abs(norms - m.radius)) < 0.1 * m.radius
        assert np.max(np.abs(hm.decode(m, y) - states)) < 0.05

    def test_data_warm_start_same_seed_identical(self):
        states = np.random.default_rng(11).standard_normal((20, 3))
        a = hm.init_model(3, 5, 2, seed=6, train_states=states)
        b = hm.init_model(3, 5, 2, seed=6, train_states=states)
        for wa, wb in zip(a.encoder.weights + a.decoder.weights,
                          b.encoder.weights + b.decoder.weights):
            assert np.array_equal(wa, wb)


class TestPredict:
    def test_identity_map_constant_prediction(self):
        m = linear_model(E3)
        traj = hm.predict(m, [0.3, -0.2], steps=5, dt=0.1, t0=2.0)
        assert traj.states.shape == (6, 2)
        assert np.allclose(traj.states, traj.states[0], atol=1e-14)
        assert traj.dt == 0.1 and traj.t0 == 2.0

    def test_zero_steps_is_reconstruction(self):
        m, states = random_model(seed=6)
        traj = hm.predict(m, states[0], steps=0)
        recon = hm.decode(m, hm.encode(m, states[0]))
        assert np.allclose(traj.states[0], recon, atol=1e-14)

    def test_latent_norm_preserved_over_long_rollout(self):
        m, states = random_model(seed=7)
        y0 = hm.encode(m, states[0])
        latents = orthogonal.rollout(m.koopman, y0, 10_000)
        norms = np.linalg.norm(latents, axis=0)
        assert np.max(np.abs(norms - norms[0])) < 1e-6

    def test_projected_rollout_differs_from_bare_only_off_manifold(self):
        m, states = random_model(seed=10)
        bare = hm.predict(m, states[0], steps=4, dt=0.5)
        proj = hm.predict(m, states[0], steps=4, dt=0.5, project=True)
        assert bare.states.shape == proj.states.shape
        assert bare.dt == proj.dt and bare.t0 == proj.t0
        # the start state is generic, so projection must actually move it
        assert not np.allclose(bare.states, proj.states)
        # a start already on the constraint set rolls out identically
        y0 = hm.project_manifold(m, hm.encode(m, states[0]))
        on_manifold = hm.decode(m, y0)
        again = hm.project_manifold(m, hm.encode(m, on_manifold))
        assert np.allclose(again, hm.project_manifold(m, again), atol=1e-12)


class TestProjectManifold:
    def test_result_satisfies_both_constraints(self):
        m, states = random_model(seed=12)
        y = hm.encode(m, states[0]) + 0.3  # knock it off the manifold
        z = hm.project_manifold(m, y)
        assert abs(np.linalg.norm(z) - m.radius) < 1e-12 * m.radius
        assert np.max(np.abs(m.hyperplanes.T @ z)) < 1e-12

    def test_idempotent(self):
        m, states = random_model(seed=13)
        z = hm.project_manifold(m, hm.encode(m, states[1]))
        assert np.allclose(hm.project_manifold(m, z), z, atol=1e-12)

    def test_no_hyperplanes_is_pure_rescale(self):
        m = hm.init_model(2, 2, 0, seed=1)  # p=2 admits q=0
        y = np.array([3.0, 4.0])
        z = hm.project_manifold(m, y)
        assert np.allclose(z, y / 5.0 * m.radius, atol=1e-14)

    def test_degenerate_point_returned_unchanged(self):
        m, _ = random_model(seed=14)
        # a point inside every hyperplane kills the projection direction
        y = np.zeros(m.p)
        assert np.array_equal(hm.project_manifold(m, y), y)


class TestForwardShapes:
    def test_single_and_batch_consistent(self):
        m, states = random_model(seed=8)
        batch = hm.encode(m, states)
        single = hm.encode(m, states[0])
        assert batch.shape == (6, 4)
        assert np.allclose(batch[0], single, atol=1e-15)

    def test_wrong_input_dim(self):
        m, _ = random_model(seed=9)
        with pytest.raises(ValueError, match="dimension"):
            hm.encode(m, np.ones(5))

"""Model container checks: Glorot init bounds, forward values, classifier
clamping, categorical softmax, snapshot immutability, checkpoint round-trip."""

import numpy as np
import pytest

from vargan import autodiff as ad
from vargan import nets


GEN_SPEC = nets.MlpSpec(2, (64, 64), 2)
CRITIC_SPEC = nets.MlpSpec(2, (64, 64), 1)


class TestSpecs:
    def test_classifier_is_critic_plus_sigmoid(self):
        cls = CRITIC_SPEC.with_sigmoid_output()
        assert cls.widths == CRITIC_SPEC.widths
        assert cls.out_activation == "sigmoid"

    def test_sigmoid_head_requires_scalar_output(self):
        with pytest.raises(ValueError):
            nets.MlpSpec(2, (8,), 2, out_activation="sigmoid")

    def test_hidden_layer_required(self):
        with pytest.raises(ValueError):
            nets.MlpSpec(2, (), 1)

    def test_param_count(self):
        assert nets.MlpSpec(2, (64, 64), 1).n_params == (2 + 1) * 64 + (64 + 1) * 64 + 65


class TestInit:
    def test_deterministic_per_seed(self):
        a = nets.init_params(GEN_SPEC, 7)
        b = nets.init_params(GEN_SPEC, 7)
        assert a.flat.tobytes() == b.flat.tobytes()
        c = nets.init_params(GEN_SPEC, 8)
        assert a.flat.tobytes() != c.flat.tobytes()

    def test_biases_zero_and_weights_bounded(self):
        params = nets.init_params(CRITIC_SPEC, 3)
        offset = 0
        for fan_in, fan_out in zip(CRITIC_SPEC.widths[:-1], CRITIC_SPEC.widths[1:]):
            w = params.flat[offset:offset + fan_in * fan_out]
            offset += fan_in * fan_out
            b = params.flat[offset:offset + fan_out]
            offset += fan_out
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            assert np.abs(w).max() <= bound
            np.testing.assert_array_equal(b, 0.0)

    def test_length_validation(self):
        with pytest.raises(ValueError):
            nets.ModelParams(np.zeros(10), CRITIC_SPEC)

    def test_non_finite_rejected(self):
        with pytest.raises(ad.NonFiniteError):
            nets.ModelParams(np.array([1.0, np.inf]), None)


class TestForward:
    def test_zero_params_zero_critic(self):
        params = nets.ModelParams(np.zeros(CRITIC_SPEC.n_params), CRITIC_SPEC)
        out = nets.mlp_forward_values(params, np.array([[0.3, -1.2], [5.0, 2.0]]))
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_zero_params_classifier_at_half(self):
        spec = CRITIC_SPEC.with_sigmoid_output()
        params = nets.ModelParams(np.zeros(spec.n_params), spec)
        out = nets.classifier_prob_values(params, np.array([[0.3, -1.2]]))
        np.testing.assert_array_equal(out, [0.5])

    def test_single_linearish_layer(self):
        # hidden of width 2 carrying the identity, then sum of the two units
        spec = nets.MlpSpec(2, (2,), 1, activation="leaky-relu")
        flat = np.concatenate([
            np.eye(2).ravel(), np.zeros(2),      # hidden = x (for x > 0)
            np.array([1.0, 1.0]), np.zeros(1),   # out = h0 + h1
        ])
        params = nets.ModelParams(flat, spec)
        out = nets.mlp_forward_values(params, np.array([[1.0, 2.0], [0.25, 0.5]]))
        np.testing.assert_allclose(out, [3.0, 0.75])

    def test_finite_on_input_grid(self):
        params = nets.init_params(CRITIC_SPEC, 11)
        g = np.linspace(-10.0, 10.0, 21)
        pts = np.array([[a, b] for a in g for b in g])
        out = nets.mlp_forward_values(params, pts)
        assert np.all(np.isfinite(out))

    def test_input_dim_mismatch(self):
        params = nets.init_params(CRITIC_SPEC, 0)
        with pytest.raises(ad.ShapeMismatchError):
            nets.mlp_forward_values(params, np.zeros((4, 3)))


class TestClassifierClamp:
    def test_saturated_positive_clamped(self):
        # single hidden unit forced to a huge pre-activation
        spec = nets.MlpSpec(1, (1,), 1, out_activation="sigmoid")
        flat = np.array([1.0, 0.0, 1.0, 40.0])  # w1, b1, w2, b2=+40
        params = nets.ModelParams(flat, spec)
        out = nets.classifier_prob_values(params, np.array([[0.0]]))
        np.testing.assert_array_equal(out, [1.0 - 1e-7])

    def test_saturated_negative_clamped(self):
        spec = nets.MlpSpec(1, (1,), 1, out_activation="sigmoid")
        params = nets.ModelParams(np.array([1.0, 0.0, 1.0, -40.0]), spec)
        out = nets.classifier_prob_values(params, np.array([[0.0]]))
        np.testing.assert_array_equal(out, [1e-7])

    def test_never_exactly_zero_or_one(self):
        spec = nets.MlpSpec(2, (8,), 1, out_activation="sigmoid")
        params = nets.init_params(spec, 5)
        x = np.random.default_rng(1).uniform(-50, 50, size=(256, 2))
        out = nets.classifier_prob_values(params, x)
        assert np.all(out > 0.0) and np.all(out < 1.0)


class TestCategorical:
    def test_uniform_logits(self):
        np.testing.assert_allclose(
            nets.categorical_probs(np.zeros(4)), [0.25] * 4, rtol=1e-15)

    def test_hand_softmax(self):
        np.testing.assert_allclose(
            nets.categorical_probs(np.array([0.0, np.log(3.0)])),
            [0.25, 0.75], rtol=1e-12)

    def test_shift_invariance_no_overflow(self):
        np.testing.assert_allclose(
            nets.categorical_probs(np.array([1000.0, 1000.0])), [0.5, 0.5])

    def test_valid_pmf_for_random_logits(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            p = nets.categorical_probs(rng.uniform(-300, 300, size=rng.integers(2, 12)))
            assert abs(p.sum() - 1.0) <= 1e-12
            assert np.all(p > 0.0)


class TestSnapshot:
    def test_digest_stable_under_reads(self):
        params = nets.init_params(GEN_SPEC, 2)
        snap = nets.Snapshot(params)
        _ = params.flat * 2.0  # reads must not disturb the frozen copy
        assert snap.verify_unchanged()

    def test_flat_vector_is_read_only(self):
        params = nets.init_params(GEN_SPEC, 2)
        with pytest.raises(ValueError):
            params.flat[0] = 1.0


class TestCheckpoint:
    def test_mlp_round_trip(self, tmp_path):
        params = nets.init_params(CRITIC_SPEC, 17)
        path = tmp_path / "critic.ckpt"
        nets.save_checkpoint(path, params, seed=17)
        loaded, seed = nets.load_checkpoint(path)
        assert seed == 17
        assert loaded.spec == CRITIC_SPEC
        assert loaded.flat.tobytes() == params.flat.tobytes()

    def test_categorical_round_trip(self, tmp_path):
        params = nets.ModelParams(np.array([0.1, -0.4, 2.0]), None)
        path = tmp_path / "logits.ckpt"
        nets.save_checkpoint(path, params, seed=3)
        loaded, seed = nets.load_checkpoint(path)
        assert loaded.spec is None and seed == 3
        np.testing.assert_array_equal(loaded.flat, params.flat)

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(ValueError):
            nets.load_checkpoint(path)

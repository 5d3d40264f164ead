"""Checks for the reverse-mode engine: recorded forward values, gradients
against hand results and central finite differences, double-backprop
through the input-gradient norm penalty, and the deterministic subgradient
conventions."""

import numpy as np
import pytest

from vargan import autodiff as ad


def _manual_mlp(tape, flat, x, widths=(2, 3, 1), slope=0.2):
    """Tiny leaky-relu MLP built directly on a tape from a flat vector."""
    offset = 0
    h = tape.leaf(x)
    params = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        w = tape.leaf(flat[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
        b = tape.leaf(flat[offset:offset + fan_out])
        offset += fan_out
        params.extend([w, b])
        h = ad.affine(h, w, b)
        if i < len(widths) - 2:
            h = ad.leaky_relu(h, slope)
    return h, params


def _n_params(widths):
    return sum((i + 1) * o for i, o in zip(widths[:-1], widths[1:]))


class TestForward:
    def test_affine_identity(self):
        tape = ad.Tape()
        x = tape.leaf([[1.0, 2.0]])
        w = tape.leaf(np.eye(2))
        b = tape.leaf(np.zeros(2))
        out = ad.affine(x, w, b)
        np.testing.assert_array_equal(out.value, [[1.0, 2.0]])

    def test_exp_zero(self):
        tape = ad.Tape()
        np.testing.assert_array_equal(tape.leaf([0.0]).exp().value, [1.0])

    def test_leaky_relu_piecewise(self):
        tape = ad.Tape()
        out = ad.leaky_relu(tape.leaf([-1.0, 3.0]), 0.2)
        np.testing.assert_allclose(out.value, [-0.2, 3.0], rtol=0, atol=0)

    def test_shape_mismatch_rejected(self):
        tape = ad.Tape()
        a = tape.leaf([1.0, 2.0])
        b = tape.leaf([1.0, 2.0, 3.0])
        with pytest.raises(ad.ShapeMismatchError):
            _ = a + b

    def test_non_finite_leaf_rejected(self):
        tape = ad.Tape()
        with pytest.raises(ad.NonFiniteError):
            tape.leaf([np.nan])

    def test_strict_mode_catches_non_finite_intermediate(self):
        tape = ad.Tape(strict=True)
        x = tape.leaf([1000.0])
        with pytest.raises(ad.NonFiniteError):
            x.exp().exp()

    def test_replay_reproduces_cached_values(self):
        tape = ad.Tape()
        rng = np.random.default_rng(3)
        x = tape.leaf(rng.standard_normal((4, 3)))
        w = tape.leaf(rng.standard_normal((3, 2)))
        out = ad.leaky_relu(ad.matmul(x, w)).square().mean()
        ad.grad(out, [w])
        tape.replay()  # raises on any bitwise mismatch


class TestGrad:
    def test_square_scalar(self):
        tape = ad.Tape()
        x = tape.leaf(3.0)
        (g,) = ad.grad(x.square(), [x])
        assert g == 6.0

    def test_matvec_weight_gradient(self):
        # d/dW of sum(x @ W) with x=[1,2] puts x in every output column
        tape = ad.Tape()
        x = tape.leaf([[1.0, 2.0]])
        w = tape.leaf(np.zeros((2, 1)))
        (g,) = ad.grad(ad.matmul(x, w).sum(), [w])
        np.testing.assert_array_equal(g, [[1.0], [2.0]])

    def test_mlp_matches_finite_differences(self):
        widths = (2, 3, 1)
        rng = np.random.default_rng(11)
        x = rng.standard_normal((5, 2))

        def loss_fn(flat):
            tape = ad.Tape()
            out, params = _manual_mlp(tape, flat, x, widths)
            loss = out.mean()
            gs = ad.grad(loss, params)
            flat_g = np.concatenate([g.ravel() for g in gs])
            return float(loss.value), flat_g

        flat = rng.standard_normal(_n_params(widths))
        assert ad.finite_diff_check(loss_fn, flat, h=1e-5) < 1e-6

    def test_gradient_linearity(self):
        # grad of (f + g) equals grad f + grad g on a random tape
        rng = np.random.default_rng(7)
        xv = rng.standard_normal(6)
        tape = ad.Tape()
        x = tape.leaf(xv)
        f = (x.square() * 0.5).sum()
        g = x.tanh().mean()
        (gf,) = ad.grad(f, [x])
        (gg,) = ad.grad(g, [x])
        (gsum,) = ad.grad(f + g, [x])
        np.testing.assert_allclose(gsum, gf + gg, rtol=1e-12)

    def test_determinism_bit_identical(self):
        def run():
            tape = ad.Tape()
            rng = np.random.default_rng(0)
            x = tape.leaf(rng.standard_normal((8, 2)))
            w = tape.leaf(rng.standard_normal((2, 4)))
            b = tape.leaf(rng.standard_normal(4))
            out = ad.leaky_relu(ad.affine(x, w, b)).square().mean()
            return out.value.tobytes(), ad.grad(out, [w])[0].tobytes()

        assert run() == run()

    def test_non_scalar_output_rejected(self):
        tape = ad.Tape()
        x = tape.leaf([1.0, 2.0])
        with pytest.raises(ad.NonScalarOutputError):
            ad.grad(x.square(), [x])

    def test_detached_parameter_rejected(self):
        tape = ad.Tape()
        x = tape.leaf(2.0)
        y = tape.leaf(4.0)
        with pytest.raises(ad.DetachedParameterError):
            ad.grad(x.square(), [y])
        (g,) = ad.grad(x.square(), [y], allow_unused=True)
        assert g == 0.0


class TestSubgradientConventions:
    def test_clip_boundary_passes_gradient(self):
        tape = ad.Tape()
        x = tape.leaf([0.8, 1.2, 0.5, 1.5])
        (g,) = ad.grad(ad.clip(x, 0.8, 1.2).sum(), [x])
        np.testing.assert_array_equal(g, [1.0, 1.0, 0.0, 0.0])

    def test_minimum_tie_first_argument_wins(self):
        tape = ad.Tape()
        a = tape.leaf([1.0, 2.0])
        b = tape.leaf([1.0, 1.0])
        ga, gb = ad.grad(ad.minimum(a, b).sum(), [a, b])
        np.testing.assert_array_equal(ga, [1.0, 0.0])
        np.testing.assert_array_equal(gb, [0.0, 1.0])


class TestDoubleBackprop:
    def test_linear_critic_penalty_gradient(self):
        # f(x) = w*x has input gradient w everywhere, so the penalty is
        # (w-1)^2 and its w-derivative at w=2 is 2 (up to norm smoothing).
        tape = ad.Tape()
        x = tape.leaf([[0.7]])
        w = tape.leaf([[2.0]])
        scores = ad.matmul(x, w).reshape((1,))
        pen = ad.gradient_norm_penalty(scores, x, smooth_eps=1e-12)
        (g,) = ad.grad(pen, [w])
        np.testing.assert_allclose(g, [[2.0]], rtol=1e-9)

    def test_unit_gradient_critic_has_zero_penalty_gradient(self):
        tape = ad.Tape()
        x = tape.leaf([[0.3], [1.7]])
        w = tape.leaf([[1.0]])
        scores = ad.matmul(x, w).reshape((2,))
        pen = ad.gradient_norm_penalty(scores, x, smooth_eps=1e-12)
        assert pen.value < 1e-24
        (g,) = ad.grad(pen, [w])
        np.testing.assert_allclose(g, [[0.0]], atol=1e-6)

    def test_zero_norm_signals_degenerate_gradient(self):
        tape = ad.Tape()
        x = tape.leaf([[0.5, 0.5]])
        w = tape.leaf(np.zeros((2, 1)))
        scores = ad.matmul(x, w).reshape((1,))
        with pytest.raises(ad.DegenerateGradientError):
            ad.gradient_norm_penalty(scores, x, smooth_eps=0.0)

    def test_mlp_penalty_matches_finite_differences(self):
        widths = (2, 4, 1)
        rng = np.random.default_rng(23)
        x = rng.standard_normal((6, 2))

        def loss_fn(flat):
            tape = ad.Tape()
            xn = tape.leaf(x)
            offset = 0
            params = []
            h = xn
            for i, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
                w = tape.leaf(flat[offset:offset + fi * fo].reshape(fi, fo))
                offset += fi * fo
                b = tape.leaf(flat[offset:offset + fo])
                offset += fo
                params.extend([w, b])
                h = ad.affine(h, w, b)
                if i < len(widths) - 2:
                    h = ad.leaky_relu(h, 0.2)
            pen = ad.gradient_norm_penalty(h.reshape((x.shape[0],)), xn,
                                           smooth_eps=1e-12)
            # biases only reach the input gradient through piecewise-constant
            # activation masks, so their a.e. derivative is exactly zero
            gs = ad.grad(pen, params, allow_unused=True)
            return float(pen.value), np.concatenate([g.ravel() for g in gs])

        flat = rng.standard_normal(_n_params(widths)) * 0.7
        assert ad.finite_diff_check(loss_fn, flat, h=1e-5) < 1e-4


class TestFiniteDiffCheck:
    def test_quadratic_is_exact_to_rounding(self):
        a = np.array([0.5, -1.5, 2.0])

        def loss_fn(p):
            return float(np.sum(a * p * p)), 2.0 * a * p

        assert ad.finite_diff_check(loss_fn, np.array([1.0, 2.0, -0.5])) < 1e-9

    def test_non_finite_probe_rejected(self):
        def loss_fn(p):
            with np.errstate(divide="ignore"):
                v = np.divide(1.0, p[0])
            return float(v), np.array([0.0])

        # the center is fine but the lower probe lands exactly on the pole
        with pytest.raises(ad.NonFiniteError):
            ad.finite_diff_check(loss_fn, np.array([1e-5]), h=1e-5)

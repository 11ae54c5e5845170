"""Tensor op unit tests: spec'd values, brute-force oracles, gradients."""

import math

import numpy as np
import pytest

from comment_classifier.tensor import (Tensor, backward, cross_entropy_logits, dropout,
                                       embedding, gelu, layer_norm, matmul, parameter,
                                       select, softmax)
from comment_classifier.errors import ShapeError

from gradcheck import check_gradient, finite_difference_grad, relative_error


def brute_force_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 3))
        out = matmul(Tensor(np.eye(3)), Tensor(a))
        np.testing.assert_allclose(out.data, a)

    def test_scalar_case(self):
        out = matmul(Tensor([[2.0]]), Tensor([[3.0]]))
        assert out.data[0, 0] == pytest.approx(6.0)

    def test_against_triple_loop(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(5, 4))
        b = rng.normal(size=(4, 3))
        out = matmul(Tensor(a), Tensor(b))
        assert np.max(np.abs(out.data - brute_force_matmul(a, b))) < 1e-12

    def test_all_small_shapes_match_loops(self):
        rng = np.random.default_rng(2)
        for m in range(1, 7):
            for k in range(1, 7):
                for n in range(1, 7):
                    a = rng.normal(size=(m, k))
                    b = rng.normal(size=(k, n))
                    out = matmul(Tensor(a), Tensor(b))
                    assert np.max(np.abs(out.data - brute_force_matmul(a, b))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_requires_2d(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.zeros(3)), Tensor(np.zeros((3, 2))))


class TestSoftmax:
    def test_uniform(self):
        out = softmax(Tensor([0.0, 0.0]), axis=-1)
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 5))
        a = softmax(Tensor(x), axis=-1).data
        b = softmax(Tensor(x + 37.5), axis=-1).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_hand_value(self):
        out = softmax(Tensor([0.0, math.log(3.0)]), axis=-1)
        np.testing.assert_allclose(out.data, [0.25, 0.75], atol=1e-12)

    def test_rows_sum_to_one_for_large_inputs(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            x = rng.uniform(-100.0, 100.0, size=(3, 7))
            p = softmax(Tensor(x), axis=-1).data
            assert np.all(p >= 0)
            np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-9)


class TestLayerNorm:
    def test_constant_row_is_zero(self):
        x = Tensor(np.full((2, 4), 3.7))
        out = layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-6)

    def test_two_point_row(self):
        out = layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-5)
        np.testing.assert_allclose(out.data, [[0.999995, -0.999995]], atol=1e-9)

    def test_zero_gain_returns_bias(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 6))
        beta = rng.normal(size=6)
        out = layer_norm(Tensor(x), Tensor(np.zeros(6)), Tensor(beta))
        np.testing.assert_allclose(out.data, np.broadcast_to(beta, (3, 6)), atol=1e-12)

    def test_normalizes_mean_and_variance(self):
        rng = np.random.default_rng(6)
        x = rng.normal(2.0, 5.0, size=(4, 16))
        out = layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=1e-12).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-9)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-6)

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            layer_norm(Tensor([[1.0, 2.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)


class TestGelu:
    def test_zero(self):
        assert gelu(Tensor([0.0])).data[0] == 0.0

    def test_asymptote(self):
        assert abs(gelu(Tensor([10.0], dtype=np.float64)).data[0] - 10.0) < 1e-6

    def test_at_one(self):
        # 1 * Phi(1) with Phi the standard normal CDF
        expected = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
        assert gelu(Tensor([1.0], dtype=np.float64)).data[0] == pytest.approx(expected, abs=1e-12)
        assert gelu(Tensor([1.0], dtype=np.float64)).data[0] == pytest.approx(0.84134, abs=1e-5)


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss = cross_entropy_logits(Tensor([[0.0, 0.0]]), np.array([0]))
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-7)

    def test_confident_correct(self):
        loss = cross_entropy_logits(Tensor([[10.0, -10.0]], dtype=np.float64), np.array([0]))
        assert loss.item() == pytest.approx(math.log(1.0 + math.exp(-20.0)), rel=1e-9)

    def test_gradient_closed_form(self):
        rng = np.random.default_rng(7)
        z = rng.normal(size=(6, 4))
        y = rng.integers(0, 4, size=6)
        zt = Tensor(z, requires_grad=True, dtype=np.float64)
        loss = cross_entropy_logits(zt, y)
        backward(loss)
        e = np.exp(z - z.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        p[np.arange(6), y] -= 1.0
        np.testing.assert_allclose(zt.grad, p / 6.0, atol=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy_logits(Tensor([[0.0, 0.0]]), np.array([2]))


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = parameter(np.arange(12.0).reshape(3, 4))
        backward(x.sum())
        np.testing.assert_allclose(x.grad, np.ones((3, 4)))

    def test_accumulation_double_use(self):
        x = parameter(np.ones((2, 3)))
        f = x.sum() + x.sum()
        backward(f)
        np.testing.assert_allclose(x.grad, 2.0 * np.ones((2, 3)))

    def test_non_scalar_loss_rejected(self):
        x = parameter(np.ones(3))
        with pytest.raises(ValueError):
            backward(x * 2.0)

    def test_composite_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 5))

        def make_loss(tensors):
            xt, wt = tensors
            logits = matmul(xt, wt)
            probs = softmax(logits, axis=-1)
            return cross_entropy_logits(probs * 3.0, np.array([0, 2, 4]))

        assert check_gradient(make_loss, [x, w]) < 1e-4


class TestNonFinite:
    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            Tensor([1.0, float("nan")])

    def test_inf_rejected(self):
        with pytest.raises(ValueError):
            Tensor([float("inf")])


class TestGradientSuite:
    """Every differentiable op vs central finite differences, 20+ random shapes."""

    N_TRIALS = 20

    def test_matmul_grads(self):
        rng = np.random.default_rng(10)
        for _ in range(self.N_TRIALS):
            m, k, n = rng.integers(1, 5, size=3)
            a = rng.normal(size=(m, k))
            b = rng.normal(size=(k, n))
            err = check_gradient(lambda ts: matmul(ts[0], ts[1]).sum(), [a, b])
            assert err < 1e-4

    def test_softmax_grads(self):
        rng = np.random.default_rng(11)
        for _ in range(self.N_TRIALS):
            shape = tuple(rng.integers(1, 5, size=2))
            x = rng.normal(size=shape)
            weights = rng.normal(size=shape)

            def make_loss(ts):
                return (softmax(ts[0], axis=-1) * weights).sum()

            assert check_gradient(make_loss, [x]) < 1e-4

    def test_layer_norm_grads(self):
        rng = np.random.default_rng(12)
        for _ in range(self.N_TRIALS):
            rows = int(rng.integers(1, 5))
            d = int(rng.integers(2, 6))
            x = rng.normal(size=(rows, d))
            g = rng.normal(size=d)
            b = rng.normal(size=d)
            weights = rng.normal(size=(rows, d))

            def make_loss(ts):
                return (layer_norm(ts[0], ts[1], ts[2], eps=1e-5) * weights).sum()

            assert check_gradient(make_loss, [x, g, b]) < 1e-4

    def test_gelu_grads(self):
        rng = np.random.default_rng(13)
        for _ in range(self.N_TRIALS):
            shape = tuple(rng.integers(1, 6, size=2))
            x = rng.normal(size=shape) * 2.0
            weights = rng.normal(size=shape)

            def make_loss(ts):
                return (gelu(ts[0]) * weights).sum()

            assert check_gradient(make_loss, [x]) < 1e-4

    def test_cross_entropy_grads(self):
        rng = np.random.default_rng(14)
        for _ in range(self.N_TRIALS):
            b = int(rng.integers(1, 6))
            c = int(rng.integers(2, 6))
            z = rng.normal(size=(b, c))
            y = rng.integers(0, c, size=b)

            def make_loss(ts):
                return cross_entropy_logits(ts[0], y)

            assert check_gradient(make_loss, [z]) < 1e-4

    def test_add_mul_broadcast_grads(self):
        rng = np.random.default_rng(15)
        for _ in range(self.N_TRIALS):
            b = int(rng.integers(1, 4))
            d = int(rng.integers(1, 5))
            x = rng.normal(size=(b, d))
            bias = rng.normal(size=d)
            scale = rng.normal(size=d)

            def make_loss(ts):
                return ((ts[0] + ts[1]) * ts[2]).sum()

            assert check_gradient(make_loss, [x, bias, scale]) < 1e-4

    def test_embedding_grads(self):
        rng = np.random.default_rng(16)
        for _ in range(self.N_TRIALS):
            v = int(rng.integers(3, 8))
            d = int(rng.integers(1, 5))
            table = rng.normal(size=(v, d))
            ids = rng.integers(0, v, size=(2, 3))
            weights = rng.normal(size=(2, 3, d))

            def make_loss(ts):
                return (embedding(ts[0], ids) * weights).sum()

            assert check_gradient(make_loss, [table]) < 1e-4

    def test_select_reshape_transpose_mean_grads(self):
        rng = np.random.default_rng(17)
        for _ in range(self.N_TRIALS):
            x = rng.normal(size=(3, 4, 2))

            def make_loss(ts):
                y = ts[0].transpose((1, 0, 2)).reshape((4, 6))
                return select(y, 1, axis=0).mean() + y.sum() * 0.25

            assert check_gradient(make_loss, [x]) < 1e-4

    def test_float32_grads_within_loose_tolerance(self):
        rng = np.random.default_rng(18)
        for _ in range(self.N_TRIALS):
            x32 = rng.normal(size=(3, 4)).astype(np.float32)
            w32 = rng.normal(size=(4, 2)).astype(np.float32)
            y = rng.integers(0, 2, size=3)

            def make_loss(ts):
                return cross_entropy_logits(matmul(ts[0], ts[1]), y)

            assert check_gradient(make_loss, [x32, w32], h=1e-2) < 1e-2


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = Tensor(np.ones((4, 4)))
        out = dropout(x, 0.0, np.random.default_rng(0))
        assert out is x

    def test_scaling_preserves_expectation(self):
        rng = np.random.default_rng(19)
        x = Tensor(np.ones((200, 200)))
        out = dropout(x, 0.25, rng)
        assert out.data.mean() == pytest.approx(1.0, abs=0.02)

    def test_gradient_is_applied_mask(self):
        x = parameter(np.ones((8, 8)))
        out = dropout(x, 0.5, np.random.default_rng(20))
        backward(out.sum())
        np.testing.assert_allclose(x.grad, out.data)

"""Tests for the reverse-mode autodiff core."""

import numpy as np
import pytest

from moa_ffn.activations import GELU, RELU, RELU2, SILU, TANH
from moa_ffn.base import ContractError, DimensionError
from moa_ffn.tensor import (
    Tape,
    Tensor,
    activation,
    backward,
    cross_entropy,
    embedding,
    grad_check,
    hadamard,
    matmul,
    mix,
    rms_norm,
    rope,
    softmax,
    stack,
    tensor_sum,
    zero_grads,
)


class TestElementwise:
    def test_hadamard_values(self):
        out = hadamard(Tensor([1.0, 2.0, 3.0]), Tensor([4.0, 5.0, 6.0]))
        np.testing.assert_array_equal(out.data, [4.0, 10.0, 18.0])

    def test_hadamard_shape_mismatch(self):
        with pytest.raises(DimensionError):
            hadamard(Tensor(np.ones(3)), Tensor(np.ones(4)))

    def test_hadamard_gradient_is_other_operand(self):
        a = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        b = Tensor([4.0, 5.0, 6.0], requires_grad=True)
        backward(hadamard(a, b).sum())
        np.testing.assert_array_equal(a.grad, b.data)
        np.testing.assert_array_equal(b.grad, a.data)

    def test_row_broadcast_add_reduces_gradient(self):
        x = Tensor(np.ones((4, 3)), requires_grad=True)
        bias = Tensor(np.zeros(3), requires_grad=True)
        backward((x + bias).sum())
        np.testing.assert_array_equal(bias.grad, [4.0, 4.0, 4.0])

    def test_incompatible_add(self):
        with pytest.raises(DimensionError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))


class TestMatmul:
    def test_values(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, a @ b)

    def test_inner_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))

    def test_batched_lhs_gradient(self, rng):
        w = rng.standard_normal((4, 3))
        point = rng.standard_normal((2, 5, 4))
        error = grad_check(lambda t: (t @ Tensor(w)).sum(), point)
        assert error < 1e-7


class TestBackward:
    def test_non_scalar_root_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError):
            backward(x * 2.0)

    def test_root_without_grad_rejected(self):
        with pytest.raises(ContractError):
            backward(Tensor(1.0))

    def test_shared_subexpression_accumulates(self):
        x = Tensor(3.0, requires_grad=True)
        y = x * x
        backward(y + y)
        assert x.grad == pytest.approx(12.0)

    def test_gradients_accumulate_until_zeroed(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(x.sum())
        backward(x.sum())
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])
        zero_grads([x])
        assert x.grad is None

    def test_tape_is_topologically_ordered(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        root = (x * 2.0 + 1.0).sum()
        tape = Tape.from_root(root)
        assert len(tape) == 3

    def test_constants_do_not_record(self):
        out = Tensor([1.0]) * 2.0
        assert out.node is None


class TestActivationOp:
    @pytest.mark.parametrize("kind", [GELU, SILU, TANH, RELU2])
    def test_first_order_gradient(self, kind, rng):
        point = rng.uniform(0.2, 2.0, size=5) * rng.choice([-1, 1], size=5)
        assert grad_check(lambda t: activation(kind, t).sum(), point) < 1e-6

    @pytest.mark.parametrize("kind", [GELU, SILU, TANH])
    def test_derivative_form_is_differentiable(self, kind, rng):
        point = rng.standard_normal(4)
        assert grad_check(lambda t: activation(kind, t, order=1).sum(), point) < 1e-6

    def test_relu_gradient_away_from_kink(self):
        point = np.array([-1.0, 0.5, 2.0])
        assert grad_check(lambda t: activation(RELU, t).sum(), point) < 1e-9

    def test_bad_order(self):
        with pytest.raises(ContractError):
            activation(RELU, Tensor([1.0]), order=2)


class TestSoftmaxAndMix:
    def test_softmax_rows_sum_to_one(self, rng):
        probs = softmax(Tensor(rng.standard_normal((3, 5)))).data
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0)

    def test_softmax_mask_zeroes_entries(self):
        mask = np.array([[True, False, True]])
        probs = softmax(Tensor(np.zeros((1, 3))), mask).data
        np.testing.assert_allclose(probs, [[0.5, 0.0, 0.5]])

    def test_softmax_gradient(self, rng):
        target = rng.standard_normal((2, 4))
        error = grad_check(lambda t: (softmax(t) * Tensor(target)).sum(), rng.standard_normal((2, 4)))
        assert error < 1e-7

    def test_mix_shared_weights(self):
        branches = [Tensor(np.ones((2, 3))), Tensor(2.0 * np.ones((2, 3)))]
        out = mix(Tensor([0.5, 0.25]), branches)
        np.testing.assert_allclose(out.data, np.ones((2, 3)))

    def test_mix_per_row_weights_gradient(self, rng):
        branches = [Tensor(rng.standard_normal((3, 2))) for _ in range(4)]
        error = grad_check(lambda w: mix(w, branches).sum(), rng.standard_normal((3, 4)))
        assert error < 1e-7

    def test_mix_weight_shape_checked(self):
        with pytest.raises(DimensionError):
            mix(Tensor([1.0, 2.0, 3.0]), [Tensor(np.ones((2, 2)))] * 2)


class TestTransformerOps:
    def test_embedding_scatters_repeated_ids(self):
        table = Tensor(np.zeros((5, 2)), requires_grad=True)
        backward(embedding(table, np.array([1, 1, 3])).sum())
        np.testing.assert_array_equal(table.grad[:, 0], [0.0, 2.0, 0.0, 1.0, 0.0])

    def test_rms_norm_gradient(self, rng):
        scale = Tensor(rng.uniform(0.5, 1.5, size=4))
        weights = Tensor(rng.standard_normal((3, 4)))
        error = grad_check(lambda t: (rms_norm(t, scale) * weights).sum(), rng.standard_normal((3, 4)))
        assert error < 1e-7

    def test_rope_preserves_norm(self, rng):
        seq, dim = 5, 4
        angles = np.arange(seq)[:, None] * np.array([1.0, 0.1])[None, :]
        cos = np.cos(np.concatenate([angles, angles], axis=-1))
        sin = np.sin(np.concatenate([angles, angles], axis=-1))
        x = rng.standard_normal((seq, dim))
        out = rope(Tensor(x), cos, sin).data
        np.testing.assert_allclose(np.linalg.norm(out, axis=-1), np.linalg.norm(x, axis=-1))

    def test_cross_entropy_of_uniform_logits(self):
        loss = cross_entropy(Tensor(np.zeros((4, 8))), np.array([0, 1, 2, 3]))
        assert loss.item() == pytest.approx(np.log(8.0))

    def test_cross_entropy_gradient(self, rng):
        targets = np.array([2, 0, 1])
        assert grad_check(lambda t: cross_entropy(t, targets), rng.standard_normal((3, 4))) < 1e-7

    def test_stack_and_sum(self):
        a = Tensor([1.0, 2.0], requires_grad=True)
        b = Tensor([3.0, 4.0], requires_grad=True)
        backward(tensor_sum(stack([a, b], axis=0) * 2.0))
        np.testing.assert_array_equal(b.grad, [2.0, 2.0])

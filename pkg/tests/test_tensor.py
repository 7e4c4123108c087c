import numpy as np
import pytest

from advmt import tensor
from advmt.errors import ContractError, DimensionError
from advmt.gradcheck import central_difference, relative_error
from advmt.tensor import Tensor, concat, layer_norm, matmul, softmax, stack


def grad_of(forward, *arrays):
    """Analytic grads of a scalar-valued forward over leaf inputs."""
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    forward(*leaves).backward()
    return [t.grad for t in leaves]


def fd_of(forward, arrays, i):
    def f(probe):
        args = [Tensor(a) for a in arrays]
        args[i] = Tensor(probe)
        return forward(*args).item()

    return central_difference(f, arrays[i])


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[3.0, 4.0], [5.0, 6.0]]))
        assert np.array_equal(out.data, [[3.0, 4.0], [5.0, 6.0]])

    def test_dot_product(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        assert np.array_equal(out.data, [[11.0]])

    def test_inner_mismatch_names_shapes(self):
        with pytest.raises(DimensionError, match=r"\(4, 5\).*\(3, 2\)"):
            matmul(Tensor(np.zeros((4, 5))), Tensor(np.zeros((3, 2))))

    def test_gradcheck_sum_of_output(self, rng):
        for _ in range(10):
            a = rng.standard_normal((4, 5))
            b = rng.standard_normal((5, 3))
            forward = lambda x, y: (x @ y).sum()
            ga, gb = grad_of(forward, a, b)
            assert relative_error(ga, fd_of(forward, [a, b], 0)) < 1e-6
            assert relative_error(gb, fd_of(forward, [a, b], 1)) < 1e-6

    def test_batched_broadcast(self, rng):
        a = rng.standard_normal((2, 3, 4, 5))
        b = rng.standard_normal((5, 3))
        out = Tensor(a) @ Tensor(b)
        assert out.shape == (2, 3, 4, 3)
        assert np.allclose(out.data, a @ b)

    def test_batched_gradcheck(self, rng):
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((4, 2))
        forward = lambda x, y: ((x @ y) * c).sum()
        c = rng.standard_normal((2, 3, 2))
        ga, gb = grad_of(forward, a, b)
        assert relative_error(ga, fd_of(forward, [a, b], 0)) < 1e-6
        assert relative_error(gb, fd_of(forward, [a, b], 1)) < 1e-6


class TestElementwise:
    def test_add(self):
        assert np.array_equal((Tensor([1.0, 2.0]) + Tensor([3.0, 4.0])).data, [4.0, 6.0])

    def test_relu(self):
        assert np.array_equal(tensor.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_relu_gates_zero_gradient_at_zero(self):
        x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
        tensor.relu(x).sum().backward()
        assert np.array_equal(x.grad, [0.0, 0.0, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError, match=r"\(2,\).*\(3,\)"):
            Tensor([1.0, 2.0]) + Tensor([1.0, 2.0, 3.0])

    def test_scalar_broadcast(self):
        assert np.array_equal((Tensor([1.0, 2.0]) * 3.0).data, [3.0, 6.0])

    @pytest.mark.parametrize("seed", range(10))
    def test_mul_gradcheck(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal((3, 3)), r.standard_normal((3, 3))
        forward = lambda x, y: (x * y).sum()
        ga, gb = grad_of(forward, a, b)
        assert relative_error(ga, fd_of(forward, [a, b], 0)) < 1e-6
        assert relative_error(gb, fd_of(forward, [a, b], 1)) < 1e-6


class TestSoftmax:
    def test_symmetry(self):
        out = softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
        assert np.allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_large_inputs_stable(self):
        out = softmax(Tensor([1000.0, 0.0]), axis=0)
        assert np.isfinite(out.data).all()
        assert out.data[0] == pytest.approx(1.0)
        assert out.data[1] == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_rows_sum_to_one(self, seed):
        r = np.random.default_rng(seed)
        x = r.uniform(-1e3, 1e3, size=(4, 7))
        out = softmax(Tensor(x), axis=-1)
        assert (out.data >= 0).all()
        assert np.abs(out.data.sum(axis=-1) - 1.0).max() < 1e-12

    def test_gradcheck(self, rng):
        for _ in range(10):
            x = rng.standard_normal((2, 4))
            c = rng.standard_normal((2, 4))
            forward = lambda t: (softmax(t, axis=1) * c).sum()
            (g,) = grad_of(forward, x)
            assert relative_error(g, fd_of(forward, [x], 0)) < 1e-6


class TestLayerNorm:
    def test_constant_input_is_bias(self, rng):
        x = np.full((4,), 7.3)
        gain = rng.standard_normal(4)
        bias = rng.standard_normal(4)
        out = layer_norm(Tensor(x), Tensor(gain), Tensor(bias))
        assert np.allclose(out.data, bias, atol=1e-12)

    def test_hand_computed(self):
        out = layer_norm(Tensor([1.0, 2.0, 3.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        assert np.allclose(out.data, [-1.2247, 0.0, 1.2247], atol=1e-3)

    def test_mismatched_gain(self):
        with pytest.raises(DimensionError):
            layer_norm(Tensor(np.zeros((2, 4))), Tensor(np.ones(3)), Tensor(np.zeros(4)))

    def test_gradcheck(self, rng):
        for _ in range(10):
            x = rng.standard_normal((3, 5))
            gain = rng.standard_normal(5)
            bias = rng.standard_normal(5)
            c = rng.standard_normal((3, 5))
            forward = lambda a, g, b: (layer_norm(a, g, b) * c).sum()
            grads = grad_of(forward, x, gain, bias)
            for i, g in enumerate(grads):
                assert relative_error(g, fd_of(forward, [x, gain, bias], i)) < 1e-5


class TestBackward:
    def test_sum_gradient_is_ones(self):
        w = Tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)
        w.sum().backward()
        assert np.array_equal(w.grad, np.ones((2, 2)))

    def test_square_gradient(self):
        w = Tensor([1.0, -2.0], requires_grad=True)
        (w * w).sum().backward()
        assert np.array_equal(w.grad, [2.0, -4.0])

    def test_non_scalar_rejected(self):
        with pytest.raises(ContractError):
            Tensor([1.0, 2.0], requires_grad=True).backward()

    def test_double_backward_doubles_exactly(self, rng):
        w = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal(3), requires_grad=True)
        loss = ((w @ b.reshape((3, 1))).relu() * 2.0).sum()
        loss.backward()
        gw, gb = w.grad.copy(), b.grad.copy()
        loss.backward()
        assert np.array_equal(w.grad, 2.0 * gw)
        assert np.array_equal(b.grad, 2.0 * gb)

    def test_mlp_composite_gradcheck(self, rng):
        for _ in range(10):
            x = rng.standard_normal((2, 6))
            w1 = rng.standard_normal((6, 8)) * 0.5
            b1 = rng.standard_normal(8) * 0.1
            w2 = rng.standard_normal((8, 1)) * 0.5
            y = rng.standard_normal((2, 1))

            def forward(xx, ww1, bb1, ww2):
                h = tensor.relu(xx @ ww1 + bb1)
                d = h @ ww2 - y
                return (d * d).mean()

            grads = grad_of(forward, x, w1, b1, w2)
            for i, g in enumerate(grads):
                assert relative_error(g, fd_of(forward, [x, w1, b1, w2], i)) < 1e-5

    def test_zero_grad_resets(self):
        w = Tensor([2.0], requires_grad=True)
        (w * w).sum().backward()
        w.zero_grad()
        assert w.grad is None


class TestShapeOps:
    def test_reshape_swap_take_roundtrip_grads(self, rng):
        x = rng.standard_normal((2, 3, 4))
        c = rng.standard_normal((4, 3))
        forward = lambda t: (t.reshape((2, 3, 4)).swapaxes(-1, -2)[0] * c).sum()
        (g,) = grad_of(forward, x)
        assert relative_error(g, fd_of(forward, [x], 0)) < 1e-6

    def test_stack_concat_grads(self, rng):
        a = rng.standard_normal((2, 3))
        b = rng.standard_normal((2, 3))
        c = rng.standard_normal((2, 2, 3))
        forward = lambda x, y: (stack([x, y], axis=0) * c).sum()
        ga, gb = grad_of(forward, a, b)
        assert relative_error(ga, fd_of(forward, [a, b], 0)) < 1e-6
        assert relative_error(gb, fd_of(forward, [a, b], 1)) < 1e-6

        d = rng.standard_normal((4, 3))
        forward2 = lambda x, y: (concat([x, y], axis=0) * d).sum()
        ga, gb = grad_of(forward2, a, b)
        assert relative_error(ga, fd_of(forward2, [a, b], 0)) < 1e-6

    def test_detach_blocks_gradients(self):
        w = Tensor([3.0], requires_grad=True)
        (w.detach() * w).sum().backward()
        assert np.array_equal(w.grad, [3.0])  # only the live path contributes

    def test_no_grad_skips_graph(self):
        w = Tensor([1.0], requires_grad=True)
        with tensor.no_grad():
            out = w * 2.0
        assert out._parents == ()
        assert not out.requires_grad

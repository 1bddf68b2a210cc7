from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from nusg.errors import GradientError, ShapeError
from nusg.tensor import (
    Function,
    Graph,
    Tensor,
    add,
    backward,
    batchnorm2d,
    check_finite,
    concat_channels,
    conv2d,
    get_dtype,
    grad_check,
    is_grad_enabled,
    maxpool2d,
    mean,
    no_grad,
    precision,
    project,
    reduce_sum,
    relu,
    reset_grads,
    scale,
    sigmoid,
    upsample_bilinear,
)


def _t(data, grad: bool = False) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad, dtype=np.float64)


class _Tripled(Function):
    # Forward triples, backward claims doubling
    def forward(self, x):
        return 3.0 * x

    def backward(self, grad):
        return (2.0 * grad,)


class TestConv2d:
    def test_identity_kernel(self, rng):
        x = _t(rng.standard_normal((1, 1, 4, 4)))
        out = conv2d(x, _t(np.ones((1, 1, 1, 1))), _t([0.0]))
        np.testing.assert_array_equal(out.data, x.data)

    def test_all_ones(self):
        out = conv2d(_t(np.ones((1, 1, 3, 3))), _t(np.ones((1, 1, 2, 2))), _t([0.0]))
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 4.0))

    def test_dilated_impulse(self):
        x = np.zeros((1, 1, 5, 5))
        x[0, 0, 2, 2] = 1.0
        out = conv2d(_t(x), _t(np.ones((1, 1, 3, 3))), _t([0.0]), stride=1, padding=2, dilation=2)

        expected = np.zeros((5, 5))
        for i in (0, 2, 4):
            for j in (0, 2, 4):
                expected[i, j] = 1.0
        np.testing.assert_array_equal(out.data[0, 0], expected)

    @pytest.mark.parametrize("kernel,dilation", [(3, 1), (3, 2), (3, 8), (1, 1)])
    def test_same_padding_preserves_size(self, rng, kernel, dilation):
        x = _t(rng.standard_normal((1, 2, 17, 17)))
        w = _t(rng.standard_normal((3, 2, kernel, kernel)))
        padding = dilation * (kernel - 1) // 2
        out = conv2d(x, w, _t(np.zeros(3)), 1, padding, dilation)
        assert out.shape == (1, 3, 17, 17)

    def test_output_size_formula(self, rng):
        x = _t(rng.standard_normal((2, 3, 9, 7)))
        w = _t(rng.standard_normal((4, 3, 3, 3)))
        out = conv2d(x, w, _t(np.zeros(4)), stride=2, padding=1, dilation=1)
        assert out.shape == (2, 4, 5, 4)

    def test_channel_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError) as e:
            conv2d(_t(np.zeros((1, 2, 4, 4))), _t(np.zeros((1, 3, 3, 3))), _t([0.0]))
        assert "(1, 2, 4, 4)" in str(e.value)
        assert "(1, 3, 3, 3)" in str(e.value)

    @pytest.mark.parametrize("stride,dilation", [(0, 1), (1, 0), (-1, 1)])
    def test_non_positive_stride_or_dilation(self, stride, dilation):
        with pytest.raises(ShapeError):
            conv2d(_t(np.zeros((1, 1, 4, 4))), _t(np.zeros((1, 1, 3, 3))), _t([0.0]), stride, 1, dilation)

    def test_kernel_larger_than_input(self):
        with pytest.raises(ShapeError):
            conv2d(_t(np.zeros((1, 1, 2, 2))), _t(np.zeros((1, 1, 3, 3))), _t([0.0]))


class TestMaxPool:
    def test_single_window(self):
        out = maxpool2d(_t([[[[1, 2], [3, 4]]]]), 2, 2)
        np.testing.assert_array_equal(out.data, [[[[4]]]])

    def test_row_major_values(self):
        x = np.arange(1, 17, dtype=np.float64).reshape(1, 1, 4, 4)
        out = maxpool2d(_t(x), 2, 2)
        np.testing.assert_array_equal(out.data[0, 0], [[6, 8], [14, 16]])

    @pytest.mark.parametrize("kernel,stride,padding", [(2, 2, 0), (3, 1, 1), (3, 2, 1)])
    def test_constant_input(self, kernel, stride, padding):
        out = maxpool2d(_t(np.full((1, 2, 6, 6), 2.5)), kernel, stride, padding)
        assert np.all(out.data == 2.5)

    def test_ties_route_to_first_cell(self):
        x = _t(np.ones((1, 1, 2, 2)), grad=True)
        backward(reduce_sum(maxpool2d(x, 2, 2)))
        np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])

    def test_window_larger_than_input(self):
        with pytest.raises(ShapeError):
            maxpool2d(_t(np.zeros((1, 1, 2, 2))), 3, 1, 0)


class TestUpsample:
    def test_identity_resize(self, rng):
        x = _t(rng.standard_normal((1, 2, 3, 5)))
        np.testing.assert_allclose(upsample_bilinear(x, 3, 5).data, x.data)

    def test_half_pixel_doubling(self):
        a, b = 2.0, 6.0
        out = upsample_bilinear(_t([[[[a, b]]]]), 1, 4)
        np.testing.assert_allclose(out.data[0, 0, 0], [a, 0.75 * a + 0.25 * b, 0.25 * a + 0.75 * b, b])

    @pytest.mark.parametrize("size", [(1, 1), (7, 3), (16, 16)])
    def test_constant_input(self, size):
        out = upsample_bilinear(_t(np.full((1, 1, 4, 4), -1.5)), *size)
        np.testing.assert_allclose(out.data, -1.5)


class TestConcat:
    def test_single_operand(self, rng):
        x = _t(rng.standard_normal((1, 2, 3, 3)))
        np.testing.assert_array_equal(concat_channels([x]).data, x.data)

    def test_order_preserved(self, rng):
        a = _t(rng.standard_normal((1, 1, 3, 3)))
        b = _t(rng.standard_normal((1, 1, 3, 3)))
        out = concat_channels([a, b])
        np.testing.assert_array_equal(out.data[:, 0], a.data[:, 0])
        np.testing.assert_array_equal(out.data[:, 1], b.data[:, 0])

    def test_sum_gradient_is_ones(self, rng):
        a = _t(rng.standard_normal((2, 1, 3, 3)), grad=True)
        b = _t(rng.standard_normal((2, 2, 3, 3)), grad=True)
        backward(reduce_sum(concat_channels([a, b])))
        np.testing.assert_array_equal(a.grad, np.ones_like(a.data))

    def test_spatial_mismatch(self):
        with pytest.raises(ShapeError):
            concat_channels([_t(np.zeros((1, 1, 3, 3))), _t(np.zeros((1, 1, 3, 4)))])


class TestElementwise:
    def test_sigmoid_symmetry(self):
        assert sigmoid(_t([0.0])).data[0] == 0.5

    def test_sigmoid_open_range(self):
        out = sigmoid(_t([-50.0, -5.0, 0.0, 5.0, 50.0]))
        assert np.all(out.data > 0) and np.all(out.data < 1)

    def test_relu_definition(self):
        np.testing.assert_array_equal(relu(_t([-3.0, 3.0])).data, [0.0, 3.0])

    def test_relu_subgradient_zero_at_kink(self):
        x = _t([0.0, 1.0], grad=True)
        backward(reduce_sum(relu(x)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])

    def test_add_rejects_broadcast(self):
        with pytest.raises(ShapeError):
            add(_t(np.zeros((1, 2, 3, 3))), _t(np.zeros((1, 1, 3, 3))))

    def test_sigmoid_slope_at_zero(self, float64):
        x = _t([0.0], grad=True)
        backward(reduce_sum(sigmoid(x)))
        assert x.grad[0] == pytest.approx(0.25)


class TestBatchNorm:
    def test_normalized_input_passes_through(self, rng):
        x = rng.standard_normal((4, 3, 5, 5))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)

        out = batchnorm2d(_t(x), _t(np.ones(3)), _t(np.zeros(3)), np.zeros(3), np.ones(3), True)
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_zero_gamma_gives_beta(self, rng):
        beta = np.array([0.5, -1.0, 2.0])
        x = _t(rng.standard_normal((2, 3, 4, 4)))
        out = batchnorm2d(x, _t(np.zeros(3)), _t(beta), np.zeros(3), np.ones(3), True)
        np.testing.assert_allclose(out.data, np.broadcast_to(beta[None, :, None, None], out.shape))

    def test_running_stats_update(self, rng):
        x = rng.standard_normal((2, 3, 4, 4)) + 5.0
        running_mean, running_var = np.zeros(3), np.ones(3)
        batchnorm2d(_t(x), _t(np.ones(3)), _t(np.zeros(3)), running_mean, running_var, True, momentum=0.1)

        np.testing.assert_allclose(running_mean, 0.1 * x.mean(axis=(0, 2, 3)))
        unbiased = x.var(axis=(0, 2, 3), ddof=1)
        np.testing.assert_allclose(running_var, 0.9 + 0.1 * unbiased)

    def test_eval_uses_running_stats(self, rng):
        x = rng.standard_normal((1, 2, 3, 3))
        mean_, var = np.array([1.0, -1.0]), np.array([4.0, 0.25])
        out = batchnorm2d(_t(x), _t(np.ones(2)), _t(np.zeros(2)), mean_, var, False, eps=1e-5)
        expected = (x - mean_[None, :, None, None]) / np.sqrt(var[None, :, None, None] + 1e-5)
        np.testing.assert_allclose(out.data, expected)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            batchnorm2d(_t(np.zeros((1, 2, 3, 3))), _t(np.ones(3)), _t(np.zeros(3)), np.zeros(3), np.ones(3), True)

    def test_gradient(self, rng, float64):
        x, gamma, beta = _t(rng.standard_normal((2, 3, 4, 4)), True), _t(rng.standard_normal(3), True), _t(rng.standard_normal(3), True)
        weights = rng.standard_normal((2, 3, 4, 4))

        def f(x, gamma, beta):
            return project(batchnorm2d(x, gamma, beta, np.zeros(3), np.ones(3), True), weights)

        assert grad_check(f, [x, gamma, beta]) < 1e-4


class TestBackward:
    def test_mean_gradient(self):
        x = _t(np.ones((2, 2)), grad=True)
        backward(mean(x))
        np.testing.assert_array_equal(x.grad, np.full((2, 2), 0.25))

    def test_sum_of_sigmoid_at_zero(self):
        x = _t(np.zeros((3, 3)), grad=True)
        backward(reduce_sum(sigmoid(x)))
        np.testing.assert_allclose(x.grad, 0.25)

    def test_accumulates_until_reset(self, rng):
        x = _t(rng.standard_normal((2, 2)), grad=True)
        backward(reduce_sum(scale(x, 3.0)))
        backward(reduce_sum(scale(x, 3.0)))
        np.testing.assert_array_equal(x.grad, np.full((2, 2), 6.0))

        reset_grads([x])
        assert x.grad is None

    def test_non_scalar_rejected(self):
        x = _t(np.ones((2, 2)), grad=True)
        with pytest.raises(GradientError):
            backward(relu(x))

    def test_linearity(self, rng, float64):
        x = _t(rng.standard_normal((1, 2, 6, 6)), grad=True)
        w = _t(rng.standard_normal((3, 2, 3, 3)), grad=True)
        b = _t(rng.standard_normal(3), grad=True)

        def first():
            return mean(relu(conv2d(x, w, b, 1, 1)))

        def second():
            return reduce_sum(sigmoid(maxpool2d(conv2d(x, w, b), 2, 2)))

        backward(first())
        g1 = [x.grad.copy(), w.grad.copy(), b.grad.copy()]
        reset_grads([x, w, b])
        backward(second())
        g2 = [x.grad.copy(), w.grad.copy(), b.grad.copy()]
        reset_grads([x, w, b])

        backward(add(first(), second()))
        for total, a, c in zip([x.grad, w.grad, b.grad], g1, g2):
            np.testing.assert_allclose(total, a + c, rtol=1e-12, atol=1e-12)

    def test_graph_is_topological(self, rng):
        x = _t(rng.standard_normal((1, 1, 4, 4)), grad=True)
        hidden = relu(x)
        loss = mean(add(hidden, sigmoid(hidden)))

        order = Graph.from_root(loss).nodes
        position = {id(n): i for i, n in enumerate(order)}
        for node in order:
            if node._ctx is None:
                continue
            for operand in node._ctx.inputs:
                if operand.requires_grad:
                    assert position[id(operand)] < position[id(node)]

    def test_no_grad_records_nothing(self):
        x = _t(np.ones((2, 2)), grad=True)
        with no_grad():
            y = relu(x)
        assert not y.requires_grad and y.is_leaf

    def test_no_grad_stays_in_its_thread(self):
        with no_grad():
            assert not is_grad_enabled()
            with ThreadPoolExecutor(max_workers=1) as pool:
                assert pool.submit(is_grad_enabled).result()
        assert is_grad_enabled()


class TestCheckFinite:
    def test_off_by_default(self):
        y = add(_t([np.inf, 1.0]), _t([-np.inf, 1.0]))
        assert np.isnan(y.data[0])

    def test_raises_on_nan(self):
        with check_finite():
            with pytest.raises(GradientError):
                add(_t([np.inf, 1.0]), _t([-np.inf, 1.0]))

    def test_raises_on_inf(self):
        with check_finite():
            with pytest.raises(GradientError):
                scale(_t([1e308, 1.0]), 10.0)

    def test_finite_values_pass(self, rng):
        with check_finite():
            y = sigmoid(_t(rng.standard_normal((2, 3))))
        assert np.all(np.isfinite(y.data))


class TestGradCheck:
    def test_linear_is_exact(self, float64):
        x = _t([[0.5, -0.25], [0.75, 0.125]], grad=True)
        weights = np.array([[1.0, 2.0], [-1.5, 3.0]])
        assert grad_check(lambda x: project(scale(x, 2.0), weights), [x]) < 1e-9

    def test_conv2d(self, rng, float64):
        x = _t(rng.standard_normal((1, 2, 6, 6)), grad=True)
        w = _t(rng.standard_normal((3, 2, 3, 3)), grad=True)
        b = _t(rng.standard_normal(3), grad=True)
        weights = rng.standard_normal((1, 3, 6, 6))

        def f(x, w, b):
            return project(conv2d(x, w, b, 1, 1), weights)

        assert grad_check(f, [x, w, b]) < 1e-4

    def test_relu_away_from_kink(self, rng, float64):
        raw = rng.standard_normal((2, 3, 4, 4))
        x = _t(np.sign(raw) * (np.abs(raw) + 1e-4), grad=True)
        weights = rng.standard_normal(raw.shape)
        assert grad_check(lambda x: project(relu(x), weights), [x]) < 1e-4

    def test_rejects_float32(self):
        x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True, dtype=np.float32)
        with pytest.raises(GradientError):
            grad_check(reduce_sum, [x])

    def test_detects_wrong_gradient(self, float64):
        x = _t([1.0, 2.0], grad=True)
        assert grad_check(lambda x: reduce_sum(_Tripled.apply(x)), [x]) > 0.1


class TestPrecision:
    def test_default_is_float32(self):
        assert get_dtype() == np.float32
        assert Tensor([1.0]).dtype == np.float32

    def test_context_restores(self):
        with precision(np.float64):
            assert Tensor([1.0]).dtype == np.float64
        assert get_dtype() == np.float32

    def test_context_stays_in_its_thread(self):
        with precision(np.float64):
            with ThreadPoolExecutor(max_workers=1) as pool:
                assert pool.submit(get_dtype).result() == np.float32
            assert get_dtype() == np.float64

    def test_rejects_other_dtypes(self):
        with pytest.raises(ValueError):
            with precision(np.float16):
                pass

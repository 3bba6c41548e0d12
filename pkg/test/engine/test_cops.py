import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from crpmnet.engine.cops import (
    CConvLayer,
    Columns,
    cconv2d,
    cconv2d_backward,
    cconv2d_stride2,
    cmaxpool2d,
    cmaxpool2d_backward,
    cmaxpool2d_values,
    crelu,
    crelu_backward,
    ctransconv2d,
    real_conv2d,
    riap_head,
    softmax_probs,
)
from crpmnet.engine.ctensor import CTensor
from crpmnet.shared.exceptions import DimensionError


def random_tensor(rng, shape):
    return CTensor(rng.standard_normal(shape), rng.standard_normal(shape))


def random_layer(rng, c_out, c_in, k, **geometry):
    return CConvLayer(random_tensor(rng, (c_out, c_in, k, k)), random_tensor(rng, (c_out,)), **geometry)


def nested_loop_cconv(x, w, b):
    """Every output element summed term by term with Python complex arithmetic"""
    c_out, c_in, k, _ = w.shape
    _, h, wd = x.shape
    out = np.zeros((c_out, h - k + 1, wd - k + 1), dtype=complex)
    for o in range(c_out):
        for y in range(h - k + 1):
            for z in range(wd - k + 1):
                total = complex(b[o])
                for c in range(c_in):
                    for a in range(k):
                        for e in range(k):
                            total += complex(x[c, y + a, z + e]) * complex(w[o, c, a, e])
                out[o, y, z] = total
    return out


class CConvTestCase(unittest.TestCase):
    def test_single_element_complex_product(self):
        layer = CConvLayer(CTensor.from_complex(np.full((1, 1, 1, 1), 3 + 4j)), CTensor.zeros((1,)))
        out = cconv2d(CTensor.from_complex(np.full((1, 1, 1), 1 + 2j)), layer)
        self.assertEqual(out.to_complex()[0, 0, 0], -5 + 10j)

    def test_real_inputs_reduce_to_real_convolution(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 7, 7))
        w = rng.standard_normal((3, 2, 3, 3))
        layer = CConvLayer(CTensor.from_real(w), CTensor.zeros((3,)))
        out = cconv2d(CTensor.from_real(x), layer)
        assert_array_equal(out.imag, np.zeros_like(out.imag))
        assert_array_equal(out.real, real_conv2d(x[None], w)[0])

    def test_matches_nested_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = random_tensor(rng, (6, 10, 10))
        layer = random_layer(rng, 4, 6, 3)
        out = cconv2d(x, layer)
        self.assertEqual(out.shape, (4, 8, 8))
        expected = nested_loop_cconv(x.to_complex(), layer.weights.to_complex(), layer.bias.to_complex())
        assert_allclose(out.to_complex(), expected, rtol=0, atol=1e-12)

    def test_four_real_convolutions(self):
        rng = np.random.default_rng(2)
        x = random_tensor(rng, (3, 9, 9))
        layer = random_layer(rng, 5, 3, 3, dilation=2, padding=(1, 2, 0, 1))
        out = cconv2d(x, layer)
        geometry = dict(dilation=2, padding=(1, 2, 0, 1))
        rr = real_conv2d(x.real[None], layer.weights.real, **geometry)[0]
        ii = real_conv2d(x.imag[None], layer.weights.imag, **geometry)[0]
        ri = real_conv2d(x.real[None], layer.weights.imag, **geometry)[0]
        ir = real_conv2d(x.imag[None], layer.weights.real, **geometry)[0]
        assert_array_equal(out.real, rr - ii + layer.bias.real[:, None, None])
        assert_array_equal(out.imag, ri + ir + layer.bias.imag[:, None, None])

    def test_linear_in_the_input(self):
        rng = np.random.default_rng(8)
        x = random_tensor(rng, (2, 7, 7))
        y = random_tensor(rng, (2, 7, 7))
        layer = CConvLayer(random_tensor(rng, (3, 2, 3, 3)), CTensor.zeros((3,)), dilation=2, padding=(2, 2, 2, 2))
        for theta in rng.uniform(-np.pi, np.pi, 4):
            alpha, beta = np.exp(1j * theta), complex(rng.standard_normal(), rng.standard_normal())
            combined = CTensor.from_complex(alpha * x.to_complex() + beta * y.to_complex())
            expected = alpha * cconv2d(x, layer).to_complex() + beta * cconv2d(y, layer).to_complex()
            assert_allclose(cconv2d(combined, layer).to_complex(), expected, rtol=0, atol=1e-10)

    def test_columns_match_window_sums(self):
        rng = np.random.default_rng(9)
        xp = rng.standard_normal((2, 3, 8, 9))
        w = rng.standard_normal((4, 3, 3, 3))
        grad = rng.standard_normal((2, 4, 2, 3))
        columns = Columns.gather(xp, 3, 2, 2)
        windows = np.lib.stride_tricks.sliding_window_view(xp, (5, 5), axis=(2, 3))[:, :, ::2, ::2, ::2, ::2]
        assert_allclose(columns.contract(w), np.einsum("ncyxab,ocab->noyx", windows, w), rtol=0, atol=1e-12)
        assert_allclose(columns.weight_grad(grad), np.einsum("noyx,ncyxab->ocab", grad, windows), rtol=0, atol=1e-12)

    def test_batched_equals_per_item(self):
        rng = np.random.default_rng(3)
        batch = random_tensor(rng, (3, 2, 6, 6))
        layer = random_layer(rng, 4, 2, 3, stride=2)
        out = cconv2d(batch, layer)
        for i in range(3):
            assert_allclose(out.real[i], cconv2d(batch[i], layer).real, rtol=0, atol=1e-12)

    def test_channel_mismatch(self):
        rng = np.random.default_rng(4)
        with self.assertRaises(DimensionError):
            cconv2d(random_tensor(rng, (2, 5, 5)), random_layer(rng, 1, 3, 3))

    def test_even_kernel_refused(self):
        rng = np.random.default_rng(5)
        with self.assertRaises(DimensionError):
            random_layer(rng, 1, 1, 2)

    def test_zero_upstream_gradient(self):
        rng = np.random.default_rng(6)
        x = random_tensor(rng, (2, 6, 6))
        layer = random_layer(rng, 3, 2, 3)
        bundle = cconv2d_backward(CTensor.zeros((3, 4, 4)), x, layer)
        for value in (bundle.grad_input, bundle.grad_weights, bundle.grad_bias):
            self.assertFalse(value.real.any() or value.imag.any())


class CReLUTestCase(unittest.TestCase):
    def test_planes_rectified_independently(self):
        x = CTensor.from_complex(np.array([[[-1 + 2j, 3 - 4j]]]))
        assert_array_equal(crelu(x).to_complex(), [[[2j, 3 + 0j]]])

    def test_positive_tensor_is_identity(self):
        rng = np.random.default_rng(7)
        x = CTensor(rng.uniform(0.1, 1, (2, 3, 3)), rng.uniform(0.1, 1, (2, 3, 3)))
        grad = random_tensor(rng, (2, 3, 3))
        assert_array_equal(crelu(x).real, x.real)
        assert_array_equal(crelu_backward(grad, x).imag, grad.imag)


class CMaxPoolTestCase(unittest.TestCase):
    def test_planes_pool_independently(self):
        x = CTensor(np.array([[[1.0, 3.0], [2.0, 0.0]]]), np.array([[[0.0, 5.0], [1.0, -2.0]]]))
        record = cmaxpool2d(x)
        self.assertEqual(record.output.real[0, 0, 0], 3.0)
        self.assertEqual(record.output.imag[0, 0, 0], 5.0)

    def test_independent_argmax_positions(self):
        x = CTensor(np.array([[[4.0, 3.0], [2.0, 0.0]]]), np.array([[[0.0, 1.0], [7.0, -2.0]]]))
        record = cmaxpool2d(x)
        grad = cmaxpool2d_backward(CTensor(np.ones((1, 1, 1)), np.ones((1, 1, 1))), record)
        assert_array_equal(grad.real[0], [[1.0, 0.0], [0.0, 0.0]])
        assert_array_equal(grad.imag[0], [[0.0, 0.0], [1.0, 0.0]])

    def test_ties_go_to_first_position(self):
        record = cmaxpool2d(CTensor(np.full((1, 4, 4), 2.0), np.full((1, 4, 4), -1.0)))
        assert_array_equal(record.output.real, np.full((1, 2, 2), 2.0))
        grad = cmaxpool2d_backward(CTensor(np.ones((1, 2, 2)), np.ones((1, 2, 2))), record)
        expected = np.zeros((4, 4))
        expected[::2, ::2] = 1.0
        assert_array_equal(grad.real[0], expected)
        assert_array_equal(grad.imag[0], expected)

    def test_stride_one_keeps_extent(self):
        rng = np.random.default_rng(8)
        x = random_tensor(rng, (3, 7, 9))
        record = cmaxpool2d(x, stride=1, dilation=2)
        self.assertEqual(record.output.shape, (3, 7, 9))

    def test_stride_one_dilated_window(self):
        plane = np.arange(25, dtype=float).reshape(1, 5, 5)
        record = cmaxpool2d(CTensor.from_real(plane), stride=1, dilation=2)
        # window {(0,0),(0,2),(2,0),(2,2)} around the top-left pixel
        self.assertEqual(record.output.real[0, 0, 0], plane[0, 2, 2])
        # bottom-right pixels read replicated edges
        self.assertEqual(record.output.real[0, 4, 4], plane[0, 4, 4])

    def test_stride_two_drops_partial_window(self):
        record = cmaxpool2d(CTensor.zeros((1, 7, 7)))
        self.assertEqual(record.output.shape, (1, 3, 3))

    def test_values_match_recorded_output(self):
        rng = np.random.default_rng(10)
        # integer planes so windows hold ties
        x = CTensor(rng.integers(0, 3, (2, 3, 9, 8)).astype(float), rng.integers(0, 3, (2, 3, 9, 8)).astype(float))
        for stride, dilation in ((2, 1), (1, 1), (1, 2)):
            record = cmaxpool2d(x, stride=stride, dilation=dilation)
            values = cmaxpool2d_values(x, stride=stride, dilation=dilation)
            assert_array_equal(values.real, record.output.real)
            assert_array_equal(values.imag, record.output.imag)

    def test_argmax_is_first_maximum_in_scan_order(self):
        rng = np.random.default_rng(11)
        plane = rng.integers(0, 2, (1, 1, 6, 6)).astype(float)
        record = cmaxpool2d(CTensor.from_real(plane))
        for row in range(3):
            for col in range(3):
                window = plane[0, 0, 2 * row : 2 * row + 2, 2 * col : 2 * col + 2]
                a, b = divmod(int(window.argmax()), 2)
                self.assertEqual(record.argmax_real[0, 0, row, col], (2 * row + a) * 6 + 2 * col + b)

    def test_collisions_accumulate(self):
        plane = np.zeros((1, 3, 3))
        plane[0, 1, 1] = 5.0
        record = cmaxpool2d(CTensor.from_real(plane), stride=1)
        grad = cmaxpool2d_backward(CTensor(np.ones((1, 3, 3)), np.zeros((1, 3, 3))), record)
        # (0,0), (0,1), (1,0), (1,1) all select the center
        self.assertEqual(grad.real[0, 1, 1], 4.0)
        self.assertEqual(grad.real.sum(), 9.0)


class CTransConvTestCase(unittest.TestCase):
    def test_single_value_spreads_complex_products(self):
        rng = np.random.default_rng(9)
        kernel = random_tensor(rng, (1, 1, 2, 2))
        layer = CConvLayer(kernel, CTensor.zeros((1,)), transposed=True)
        v = 0.5 - 1.5j
        out = ctransconv2d(CTensor.from_complex(np.full((1, 1, 1), v)), layer)
        assert_allclose(out.to_complex()[0], v * kernel.to_complex()[0, 0], rtol=0, atol=1e-14)

    def test_zero_input(self):
        rng = np.random.default_rng(10)
        layer = CConvLayer(random_tensor(rng, (3, 2, 2, 2)), CTensor.zeros((2,)), transposed=True)
        out = ctransconv2d(CTensor.zeros((3, 4, 4)), layer)
        self.assertEqual(out.shape, (2, 8, 8))
        self.assertFalse(out.real.any() or out.imag.any())

    def _adjoint_case(self, seed):
        rng = np.random.default_rng(seed)
        layer = CConvLayer(random_tensor(rng, (24, 24, 2, 2)), CTensor.zeros((24,)), transposed=True)
        b = random_tensor(rng, (24, 32, 32))
        a = random_tensor(rng, (24, 64, 64))
        return layer, a, b

    def test_adjoint_identity_complex_pairing(self):
        for seed in range(3):
            layer, a, b = self._adjoint_case(seed)
            up = ctransconv2d(b, layer)
            self.assertEqual(up.shape, (24, 64, 64))
            left = np.sum(cconv2d_stride2(a, layer).to_complex() * b.to_complex())
            right = np.sum(a.to_complex() * up.to_complex())
            self.assertLess(abs(left - right), 1e-10 * abs(left))

    def test_adjoint_identity_real_pairing_uses_conjugate_kernel(self):
        for seed in range(3, 6):
            layer, a, b = self._adjoint_case(seed)
            conjugate = CConvLayer(
                CTensor(layer.weights.real, -layer.weights.imag), layer.bias, transposed=True
            )
            down = cconv2d_stride2(a, layer)
            up = ctransconv2d(b, conjugate)
            left = np.sum(down.real * b.real + down.imag * b.imag)
            right = np.sum(a.real * up.real + a.imag * up.imag)
            self.assertLess(abs(left - right), 1e-10 * abs(left))

    def test_kernel_must_be_two_by_two(self):
        rng = np.random.default_rng(11)
        with self.assertRaises(DimensionError):
            CConvLayer(random_tensor(rng, (1, 1, 3, 3)), CTensor.zeros((1,)), transposed=True)


class HeadTestCase(unittest.TestCase):
    def test_real_projection(self):
        rng = np.random.default_rng(12)
        z = random_tensor(rng, (3, 4, 4))
        assert_array_equal(riap_head(z, np.array([1.0, 0, 0, 0, 0])), z.real)

    def test_magnitude_weight(self):
        z = CTensor.from_complex(np.full((1, 1, 1), 3 + 4j))
        self.assertAlmostEqual(riap_head(z, np.array([0, 0, 1.0, 0, 0]))[0, 0, 0], 5.0, places=12)

    def test_bias_shared_by_channels(self):
        scores = riap_head(CTensor.zeros((3, 2, 2)), np.array([0.3, -0.2, 0.1, 0.4, 1.5]))
        assert_array_equal(scores, np.full((3, 2, 2), 1.5))


class SoftmaxTestCase(unittest.TestCase):
    def test_uniform(self):
        assert_allclose(softmax_probs(np.zeros(3)), np.full(3, 1 / 3), rtol=0, atol=1e-15)

    def test_hand_value(self):
        assert_allclose(softmax_probs(np.array([0.0, np.log(3.0)])), [0.25, 0.75], rtol=0, atol=1e-15)

    def test_large_scores_are_stable(self):
        probs = softmax_probs(np.array([1000.0, 1000.0]))
        assert_allclose(probs, [0.5, 0.5])

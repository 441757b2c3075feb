import numpy as np
import pytest

from freqattn import tensor as tz
from freqattn.errors import DimensionError


def conv2d_naive(x, w, stride, pad):
    """Independent triple-loop cross-correlation oracle."""
    c_in, f, t = x.shape
    c_out, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    fo = (f + 2 * pad - kh) // stride + 1
    to = (t + 2 * pad - kw) // stride + 1
    y = np.zeros((c_out, fo, to))
    for co in range(c_out):
        for i in range(fo):
            for j in range(to):
                patch = xp[:, i * stride:i * stride + kh, j * stride:j * stride + kw]
                y[co, i, j] = np.sum(patch * w[co])
    return y


class TestMatmul:
    def test_identity(self):
        a = tz.tensor([[1.0, 2.0], [3.0, 4.0]])
        eye = np.eye(2)
        assert np.array_equal(tz.matmul(eye, a), a)
        assert np.array_equal(tz.matmul(a, eye), a)

    def test_hand_product(self):
        a = tz.tensor([[1.0, 2.0]])
        b = tz.tensor([[3.0], [4.0]])
        assert np.array_equal(tz.matmul(a, b), [[11.0]])

    def test_zeros_annihilate(self):
        z = np.zeros((2, 3))
        b = np.arange(6.0).reshape(3, 2)
        assert np.array_equal(tz.matmul(z, b), np.zeros((2, 2)))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            tz.matmul(np.zeros((2, 3)), np.zeros((2, 2)))


class TestConv2d:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((3, 5, 7))
        w = np.zeros((3, 3, 1, 1))
        for c in range(3):
            w[c, c, 0, 0] = 1.0
        assert np.allclose(tz.conv2d(x, w), x)

    def test_sum_kernel(self):
        x = tz.tensor([[[1.0, 2.0], [3.0, 4.0]]])
        w = np.ones((1, 1, 2, 2))
        assert np.array_equal(tz.conv2d(x, w), [[[10.0]]])

    def test_same_shape_3x3_pad1(self):
        x = np.zeros((1, 3, 3))
        w = np.zeros((2, 1, 3, 3))
        assert tz.conv2d(x, w, stride=1, pad=1).shape == (2, 3, 3)

    def test_shape_formula_sweep(self):
        rng = np.random.default_rng(1)
        for f in (3, 4, 7):
            for t in (3, 5, 8):
                for kh in (1, 2, 3):
                    for kw in (1, 3):
                        for stride in (1, 2, 3):
                            for pad in (0, 1, 2):
                                if f + 2 * pad < kh or t + 2 * pad < kw:
                                    continue
                                x = rng.standard_normal((2, f, t))
                                w = rng.standard_normal((3, 2, kh, kw))
                                y = tz.conv2d(x, w, stride, pad)
                                fo = (f + 2 * pad - kh) // stride + 1
                                to = (t + 2 * pad - kw) // stride + 1
                                assert y.shape == (3, fo, to)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(2)
        for stride, pad in [(1, 0), (2, 1), (3, 2)]:
            x = rng.standard_normal((2, 6, 7))
            w = rng.standard_normal((4, 2, 3, 3))
            assert np.allclose(tz.conv2d(x, w, stride, pad),
                               conv2d_naive(x, w, stride, pad), atol=1e-12)

    def test_kernel_too_large(self):
        with pytest.raises(DimensionError, match="kernel"):
            tz.conv2d(np.zeros((1, 2, 2)), np.zeros((1, 1, 4, 4)), pad=0)


class TestElementwise:
    def test_sigmoid_at_zero(self):
        assert tz.sigmoid(np.array(0.0)) == 0.5

    def test_sigmoid_saturation_is_finite(self):
        s = tz.sigmoid(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(s))
        assert s[0] == 0.0 and s[1] == 1.0

    def test_relu_values(self):
        assert tz.relu(np.array(-3.5)) == 0.0
        assert tz.relu(np.array(2.0)) == 2.0

    def test_relu_grad_zero_at_kink(self):
        assert tz.relu_backward(np.array(0.0), np.array(5.0)) == 0.0

    def test_channel_scale_identity(self):
        x = np.random.default_rng(3).standard_normal((4, 3, 2))
        assert np.array_equal(tz.channel_scale(x, np.ones(4)), x)

    def test_channel_scale_bad_length(self):
        with pytest.raises(DimensionError):
            tz.channel_scale(np.zeros((4, 3, 2)), np.ones(3))

    def test_add_mul_shape_errors(self):
        with pytest.raises(DimensionError):
            tz.add(np.zeros(3), np.zeros(4))
        with pytest.raises(DimensionError):
            tz.mul_elementwise(np.zeros((2, 2)), np.zeros(4))

    def test_add_mul_scale_values(self):
        a = tz.tensor([1.0, -2.0])
        b = tz.tensor([3.0, 5.0])
        assert np.array_equal(tz.add(a, b), [4.0, 3.0])
        assert np.array_equal(tz.mul_elementwise(a, b), [3.0, -10.0])
        assert np.array_equal(tz.scale(a, -0.5), [-0.5, 1.0])


class TestGradCheck:
    def test_sigmoid_analytic(self):
        def f(x):
            s = tz.sigmoid(x)
            return s, lambda dy: tz.sigmoid_backward(s, dy)
        rep = tz.grad_check(f, np.array([0.3]))
        assert rep.passed, rep

    def test_relu_away_from_kink(self):
        def f(x):
            return tz.relu(x), lambda dy: tz.relu_backward(x, dy)
        rep = tz.grad_check(f, np.array([1.0]))
        assert rep.passed, rep

    @pytest.mark.parametrize("seed", range(10))
    def test_core_ops_random_seeds(self, seed):
        rng = np.random.default_rng(seed)
        b = rng.standard_normal((4, 3))

        def f_matmul(a):
            return tz.matmul(a, b), lambda dc: tz.matmul_backward(a, b, dc)[0]
        assert tz.grad_check(f_matmul, rng.standard_normal((2, 4)), rng=rng).passed

        def f_matmul_b(bv):
            return tz.matmul(a_fixed, bv), lambda dc: tz.matmul_backward(a_fixed, bv, dc)[1]
        a_fixed = rng.standard_normal((2, 4))
        assert tz.grad_check(f_matmul_b, rng.standard_normal((4, 3)), rng=rng).passed

        w = rng.standard_normal((2, 3, 2, 2))

        def f_conv_x(x):
            return tz.conv2d(x, w, 2, 1), lambda dy: tz.conv2d_backward(x, w, dy, 2, 1)[0]
        assert tz.grad_check(f_conv_x, rng.standard_normal((3, 5, 6)), rng=rng).passed

        x_fixed = rng.standard_normal((3, 5, 6))

        def f_conv_w(wv):
            return tz.conv2d(x_fixed, wv, 2, 1), \
                lambda dy: tz.conv2d_backward(x_fixed, wv, dy, 2, 1)[1]
        assert tz.grad_check(f_conv_w, rng.standard_normal((2, 3, 2, 2)), rng=rng).passed

        s_fixed = rng.standard_normal(3)

        def f_cs(x):
            return tz.channel_scale(x, s_fixed), \
                lambda dy: tz.channel_scale_backward(x, s_fixed, dy)[0]
        assert tz.grad_check(f_cs, rng.standard_normal((3, 2, 4)), rng=rng).passed

        def f_sig(x):
            s = tz.sigmoid(x)
            return s, lambda dy: tz.sigmoid_backward(s, dy)
        assert tz.grad_check(f_sig, rng.standard_normal((3, 3)), rng=rng).passed

        # keep relu probe points off the kink
        pts = rng.standard_normal((4, 4))
        pts = np.where(np.abs(pts) < 1e-3, 0.5, pts)

        def f_relu(x):
            return tz.relu(x), lambda dy: tz.relu_backward(x, dy)
        assert tz.grad_check(f_relu, pts, rng=rng).passed

        other = rng.standard_normal((3, 2))

        def f_add(x):
            return tz.add(x, other), lambda dy: tz.add_backward(dy)[0]
        assert tz.grad_check(f_add, rng.standard_normal((3, 2)), rng=rng).passed

        def f_mul(x):
            return tz.mul_elementwise(x, other), \
                lambda dy: tz.mul_elementwise_backward(x, other, dy)[0]
        assert tz.grad_check(f_mul, rng.standard_normal((3, 2)), rng=rng).passed

        def f_scale(x):
            return tz.scale(x, -1.7), lambda dy: tz.scale_backward(-1.7, dy)
        assert tz.grad_check(f_scale, rng.standard_normal(4), rng=rng).passed

    def test_parameter_shape_invariant(self):
        p = tz.Parameter(np.zeros((2, 3)), "w")
        assert p.value.shape == p.grad.shape
        p.grad += 1.0
        p.zero_grad()
        assert np.array_equal(p.grad, np.zeros((2, 3)))

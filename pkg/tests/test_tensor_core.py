import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firedanger.errors import DimensionError, NumericError, ParameterError
from firedanger.tensor_core import (
    Adam,
    AdamState,
    Parameter,
    Tensor,
    adam_step,
    backward,
    conv2d,
    dropout,
    linear,
    max_pool2d,
    precision,
    relu,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    tanh,
)
from firedanger.tensor_core import functional as F
from firedanger.tensor_core.gradcheck import numerical_gradient, relative_error


def conv_oracle(x, k, b, pad, stride):
    c, h, w = x.shape
    o, _, kh, kw = k.shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    xp[:, pad : pad + h, pad : pad + w] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((o, ho, wo))
    for oc in range(o):
        for i in range(ho):
            for j in range(wo):
                acc = b[oc]
                for ic in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            acc += xp[ic, i * stride + u, j * stride + v] * k[oc, ic, u, v]
                out[oc, i, j] = acc
    return out


def pool_oracle(x):
    c, h, w = x.shape
    out = np.zeros((c, h // 2, w // 2))
    for ch in range(c):
        for i in range(h // 2):
            for j in range(w // 2):
                out[ch, i, j] = max(x[ch, 2 * i + u, 2 * j + v] for u in range(2) for v in range(2))
    return out


class TestConv2d:
    def test_worked_example(self):
        x = Tensor(np.arange(1, 10).reshape(1, 3, 3))
        k = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]).reshape(1, 1, 2, 2))
        out = conv2d(x, k, Tensor([0.0]))
        expected = conv_oracle(x.data.astype(float), k.data.astype(float), [0.0], 0, 1)
        np.testing.assert_array_equal(expected, [[[6, 8], [12, 14]]])
        np.testing.assert_array_equal(out.data, expected)

    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((1, 6, 7)).astype(np.float32)
        out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
        np.testing.assert_array_equal(out.data, x)

    def test_reference_shape(self):
        x = Tensor(np.zeros((18, 25, 25)))
        k = Tensor(np.zeros((16, 18, 3, 3)))
        assert conv2d(x, k, Tensor(np.zeros(16)), padding=1, stride=1).shape == (16, 25, 25)

    @pytest.mark.parametrize("pad,stride", [(0, 1), (1, 1), (1, 2), (2, 3)])
    def test_matches_loop_oracle(self, pad, stride):
        rng = np.random.default_rng(pad * 10 + stride)
        x = rng.standard_normal((3, 7, 6))
        k = rng.standard_normal((4, 3, 3, 2))
        b = rng.standard_normal(4)
        with precision(np.float64):
            out = conv2d(Tensor(x), Tensor(k), Tensor(b), padding=pad, stride=stride)
        np.testing.assert_allclose(out.data, conv_oracle(x, k, b, pad, stride), rtol=1e-12, atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            conv2d(Tensor(np.zeros((2, 5, 5))), Tensor(np.zeros((1, 3, 3, 3))))

    @settings(max_examples=25, deadline=None)
    @given(h=st.integers(1, 9), w=st.integers(1, 9), k=st.sampled_from([1, 3, 5]))
    def test_same_padding_preserves_shape(self, h, w, k):
        out = conv2d(Tensor(np.ones((2, h, w))), Tensor(np.ones((3, 2, k, k))), padding=(k - 1) // 2)
        assert out.shape == (3, h, w)


class TestMaxPool:
    def test_single_window(self):
        np.testing.assert_array_equal(max_pool2d(Tensor([[[1, 2], [3, 4]]])).data, [[[4]]])

    def test_constant(self):
        out = max_pool2d(Tensor(np.full((2, 6, 4), 3.5)))
        assert np.all(out.data == 3.5)

    def test_odd_size_matches_oracle(self):
        x = np.random.default_rng(1).standard_normal((16, 25, 25)).astype(np.float32)
        out = max_pool2d(Tensor(x))
        assert out.shape == (16, 12, 12)
        np.testing.assert_array_equal(out.data, pool_oracle(x).astype(np.float32))

    def test_too_small(self):
        with pytest.raises(DimensionError):
            max_pool2d(Tensor(np.zeros((1, 1, 5))))

    def test_tie_routes_to_first(self):
        x = Parameter(np.ones((1, 2, 2)))
        backward(max_pool2d(x).sum())
        np.testing.assert_array_equal(x.grad, [[[1, 0], [0, 0]]])

    @settings(max_examples=25, deadline=None)
    @given(h=st.integers(2, 9), w=st.integers(2, 9), seed=st.integers(0, 1000))
    def test_gradient_mass_conserved(self, h, w, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            x = Parameter(rng.standard_normal((2, h, w)))
            up = rng.standard_normal((2, h // 2, w // 2))
            backward((max_pool2d(x) * Tensor(up)).sum())
        assert math.isclose(x.grad.sum(), up.sum(), rel_tol=1e-12, abs_tol=1e-12)


class TestDropout:
    def test_p_zero_identity(self):
        x = Tensor(np.arange(5.0))
        assert dropout(x, 0.0, True, np.random.default_rng(0)) is x

    def test_eval_identity(self):
        x = Tensor(np.random.default_rng(0).standard_normal(100))
        out = dropout(x, 0.5, False)
        assert out.data.tobytes() == x.data.tobytes()

    def test_expectation_preserved(self):
        n = 10**5
        out = dropout(Tensor(np.ones(n)), 0.5, True, np.random.default_rng(123)).data.astype(np.float64)
        stderr = out.std() / math.sqrt(n)
        assert abs(out.mean() - 1.0) < 3 * stderr
        assert set(np.unique(out)) <= {0.0, 2.0}

    def test_seeded_reproducible(self):
        x = Tensor(np.ones(1000))
        a = dropout(x, 0.3, True, np.random.default_rng(5)).data
        b = dropout(x, 0.3, True, np.random.default_rng(5)).data
        assert a.tobytes() == b.tobytes()

    def test_bad_probability(self):
        with pytest.raises(ParameterError):
            dropout(Tensor(np.ones(3)), 1.0, True, np.random.default_rng(0))


class TestSoftmaxCrossEntropy:
    @pytest.mark.parametrize("label", [0, 1])
    def test_symmetric(self, label):
        loss = softmax_cross_entropy(Tensor([0.0, 0.0]), label)
        assert loss.item() == pytest.approx(math.log(2), abs=1e-6)

    def test_saturated(self):
        assert softmax_cross_entropy(Tensor([20.0, -20.0]), 0).item() < 1e-8

    def test_gradient_matches_finite_differences(self):
        with precision(np.float64):
            z = Parameter([0.3, -0.1])
            backward(softmax_cross_entropy(z, 1))
            num = numerical_gradient(lambda: softmax_cross_entropy(Tensor(z.data), 1).item(), z.data)
        np.testing.assert_allclose(z.grad, num, rtol=1e-6)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            softmax_cross_entropy(Tensor([np.inf, 0.0]), 0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=2), st.integers(0, 1))
    def test_nonnegative_and_normalised(self, logits, label):
        with precision(np.float64):
            loss = softmax_cross_entropy(Tensor(logits), label).item()
        assert loss >= 0.0
        assert abs(softmax(np.array(logits)).sum() - 1.0) < 1e-6


class TestBackward:
    def test_square(self):
        x = Parameter(3.0)
        backward(x * x)
        assert x.grad == pytest.approx(6.0)

    def test_power(self):
        x = Parameter(3.0)
        backward(x**2)
        assert x.grad == pytest.approx(6.0)

    def test_relu_subgradient(self):
        x = Parameter([-1.0, 2.0])
        backward(relu(x).sum())
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])

    def test_accumulates(self):
        x = Parameter(2.0)
        backward(x * x)
        backward(x * x)
        assert x.grad == pytest.approx(8.0)

    def test_non_scalar_rejected(self):
        with pytest.raises(DimensionError):
            backward(Parameter([1.0, 2.0]) * 2.0)

    def test_three_layer_network(self):
        rng = np.random.default_rng(7)
        with precision(np.float64):
            x = Tensor(rng.standard_normal((5, 4)))
            params = [
                Parameter(rng.standard_normal((4, 6))),
                Parameter(rng.standard_normal(6)),
                Parameter(rng.standard_normal((6, 3))),
                Parameter(rng.standard_normal(3)),
                Parameter(rng.standard_normal((3, 2))),
                Parameter(rng.standard_normal(2)),
            ]
            labels = np.array([0, 1, 1, 0, 1])

            def loss():
                h = tanh(linear(x, params[0], params[1]))
                h = sigmoid(linear(h, params[2], params[3]))
                return softmax_cross_entropy(linear(h, params[4], params[5]), labels)

            backward(loss())
            for p in params:
                num = numerical_gradient(lambda: loss().item(), p.data)
                assert relative_error(p.grad, num) < 1e-5


class TestAdam:
    def test_first_step_closed_form(self):
        state = AdamState.zeros_like(np.array([1.0]))
        new = adam_step(np.array([1.0]), np.array([0.5]), state, lr=0.001)
        # bias-corrected m_hat = 0.5, v_hat = 0.25 -> step = lr * 0.5 / (0.5 + eps)
        assert new[0] == pytest.approx(1.0 - 0.001 * 0.5 / (0.5 + 1e-8), abs=1e-15)
        assert new[0] == pytest.approx(0.999, abs=1e-9)
        assert state.step_count == 1

    def test_zero_gradient(self):
        state = AdamState.zeros_like(np.array([2.0, -1.0]))
        new = adam_step(np.array([2.0, -1.0]), np.zeros(2), state, lr=0.1)
        np.testing.assert_array_equal(new, [2.0, -1.0])

    def test_quadratic_convergence(self):
        # independent scalar simulation of Adam on f(w) = w^2
        w, m, v = 1.0, 0.0, 0.0
        oracle = []
        for t in range(1, 201):
            g = 2 * w
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            w -= 0.01 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
            oracle.append(w)
        with precision(np.float64):
            p = Parameter(1.0)
            opt = Adam([p], lr=0.01)
            traj = []
            for _ in range(200):
                opt.zero_grad()
                backward(p * p)
                opt.step()
                traj.append(float(p.data))
        np.testing.assert_allclose(traj, oracle, rtol=1e-12)
        mags = np.abs(traj)
        assert np.all(np.diff(mags) < 0)
        assert mags[-1] < 0.1

    def test_weight_decay_only_on_weights(self):
        w = Parameter(np.array([1.0]), decay=True)
        b = Parameter(np.array([1.0]), decay=False)
        w.grad = np.zeros(1)
        b.grad = np.zeros(1)
        opt = Adam([w, b], lr=0.01, weight_decay=0.5)
        opt.step()
        assert w.data[0] < 1.0
        assert b.data[0] == 1.0

    def test_deterministic(self):
        s1, s2 = AdamState.zeros_like(np.ones(3)), AdamState.zeros_like(np.ones(3))
        g = np.array([0.1, -0.2, 0.3])
        a = adam_step(np.ones(3), g, s1, 0.01, 0.02)
        b = adam_step(np.ones(3), g, s2, 0.01, 0.02)
        assert a.tobytes() == b.tobytes()


class TestPrimitiveGradients:
    """Finite-difference checks for every primitive, 64-bit."""

    @pytest.mark.parametrize("seed", range(3))
    def test_conv_pool_chain(self, seed):
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            x = Parameter(rng.standard_normal((2, 3, 6, 5)))
            k = Parameter(rng.standard_normal((4, 3, 3, 3)))
            b = Parameter(rng.standard_normal(4))
            w = Tensor(rng.standard_normal((4, 3, 2)))

            def f():
                return (max_pool2d(relu(conv2d(x, k, b, padding=1))) * w).sum()

            backward(f())
            for p in (x, k, b):
                num = numerical_gradient(lambda: f().item(), p.data)
                assert relative_error(p.grad, num) < 1e-4

    def test_concat_getitem_reshape(self):
        rng = np.random.default_rng(3)
        with precision(np.float64):
            a = Parameter(rng.standard_normal((2, 3)))
            b = Parameter(rng.standard_normal((2, 2)))
            w = Tensor(rng.standard_normal((2, 4)))

            def f():
                c = F.concat([a, b], axis=1)
                return (F.reshape(c[:, 1:], (2, 4)) * w).sum()

            backward(f())
            for p in (a, b):
                assert relative_error(p.grad, numerical_gradient(lambda: f().item(), p.data)) < 1e-6

"""Forward, backward, and Jacobian of the fully-connected score net."""

import numpy as np
import pytest

from mtdem.scorenet import (
    MlpScoreNet,
    backward,
    forward,
    init_mlp,
    input_jacobian,
    sigmoid,
    softplus,
)


def reference_forward(net, x, t=None):
    """Independent scalar re-implementation of the forward pass."""
    h = list(x) + ([float(t)] if net.time_conditioned else [])
    for n, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = [sum(w[r][c] * h[c] for c in range(len(h))) + b[r] for r in range(w.shape[0])]
        if n < len(net.weights) - 1:
            z = [float(np.log1p(np.exp(-abs(v))) + max(v, 0.0)) for v in z]
        h = z
    return np.array(h)


class TestActivations:
    def test_softplus_values(self):
        assert softplus(np.array([0.0]))[0] == pytest.approx(np.log(2.0))
        assert softplus(np.array([100.0]))[0] == pytest.approx(100.0)
        assert softplus(np.array([-100.0]))[0] == pytest.approx(0.0, abs=1e-40)

    def test_sigmoid_is_softplus_derivative(self):
        x = np.linspace(-8, 8, 101)
        h = 1e-6
        fd = (softplus(x + h) - softplus(x - h)) / (2 * h)
        np.testing.assert_allclose(sigmoid(x), fd, atol=1e-8)


class TestForward:
    def test_zero_net_zero_output(self):
        net = init_mlp([4, 6, 6, 4], seed=0)
        for w in net.weights:
            w[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
        # zero weights, zero biases: hidden softplus(0)=log 2 but the final
        # affine layer has zero weights, so the output is exactly zero
        out = forward(net, np.ones(4))
        np.testing.assert_array_equal(out, np.zeros(4))

    def test_output_shape_contract(self):
        net = init_mlp([9, 12, 12, 9], time_conditioned=True, seed=1)
        x = np.random.default_rng(2).standard_normal(9)
        assert forward(net, x, 0.3).shape == (9,)
        xb = np.random.default_rng(3).standard_normal((7, 9))
        assert forward(net, xb, 0.3).shape == (7, 9)

    def test_matches_scalar_reference(self):
        rng = np.random.default_rng(4)
        net = init_mlp([3, 5, 5, 3], seed=5)
        x = rng.standard_normal(3)
        np.testing.assert_allclose(forward(net, x), reference_forward(net, x), atol=1e-12)

    def test_matches_scalar_reference_time_conditioned(self):
        rng = np.random.default_rng(6)
        net = init_mlp([3, 4, 4, 3], time_conditioned=True, seed=7)
        x = rng.standard_normal(3)
        np.testing.assert_allclose(
            forward(net, x, 0.25), reference_forward(net, x, 0.25), atol=1e-12
        )

    def test_time_argument_discipline(self):
        plain = init_mlp([3, 4, 4, 3], seed=8)
        cond = init_mlp([3, 4, 4, 3], time_conditioned=True, seed=9)
        x = np.zeros(3)
        with pytest.raises(ValueError):
            forward(plain, x, 0.5)
        with pytest.raises(ValueError):
            forward(cond, x)

    def test_init_is_deterministic(self):
        a = init_mlp([5, 8, 8, 5], seed=42)
        b = init_mlp([5, 8, 8, 5], seed=42)
        for wa, wb in zip(a.weights, b.weights):
            assert wa.tobytes() == wb.tobytes()


class TestBackward:
    def test_param_gradients_match_finite_differences(self):
        rng = np.random.default_rng(10)
        net = init_mlp([4, 6, 6, 4], time_conditioned=True, seed=11)
        x = rng.standard_normal((3, 4))
        t = rng.uniform(0.1, 1.0, size=3)
        target = rng.standard_normal((3, 4))

        def loss_of(n):
            out = forward(n, x, t)
            return float(((out - target) ** 2).sum())

        cache = []
        out = forward(net, x, t, cache=cache)
        gw, gb, _ = backward(net, cache, 2.0 * (out - target))

        step = 1e-6
        for layer in range(3):
            for arr, grad in ((net.weights[layer], gw[layer]), (net.biases[layer], gb[layer])):
                flat = arr.reshape(-1)
                for idx in range(0, flat.size, max(1, flat.size // 5)):
                    orig = flat[idx]
                    flat[idx] = orig + step
                    hi = loss_of(net)
                    flat[idx] = orig - step
                    lo = loss_of(net)
                    flat[idx] = orig
                    fd = (hi - lo) / (2 * step)
                    assert grad.reshape(-1)[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        net = init_mlp([3, 5, 5, 3], seed=13)
        x = rng.standard_normal((1, 3))

        cache = []
        out = forward(net, x, cache=cache)
        _, _, dinput = backward(net, cache, np.ones_like(out))
        step = 1e-6
        for i in range(3):
            hi = x.copy()
            lo = x.copy()
            hi[0, i] += step
            lo[0, i] -= step
            fd = (forward(net, hi).sum() - forward(net, lo).sum()) / (2 * step)
            assert dinput[0, i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestJacobian:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        net = init_mlp([4, 7, 7, 4], seed=15)
        x = rng.standard_normal(4)
        jac = input_jacobian(net, x)
        step = 1e-6
        for j in range(4):
            hi = x.copy()
            lo = x.copy()
            hi[j] += step
            lo[j] -= step
            fd = (forward(net, hi) - forward(net, lo)) / (2 * step)
            np.testing.assert_allclose(jac[:, j], fd, atol=1e-7)

    def test_time_column_excluded(self):
        net = init_mlp([4, 6, 6, 4], time_conditioned=True, seed=16)
        x = np.random.default_rng(17).standard_normal(4)
        assert input_jacobian(net, x, 0.5).shape == (4, 4)

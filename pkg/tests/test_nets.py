import json

import numpy as np
import pytest

from atoshield.drl.nets import Adam, Mlp, soft_update

from oracles import flatten_grads, max_rel_error, numeric_gradient, relu_kink_margin


def sample_clear_of_kinks(seed, sizes, activation, batch, margin=1e-4):
    """Net and inputs where no hidden unit sits near its ReLU kink, so central
    differences cannot straddle a nondifferentiability."""
    rng = np.random.default_rng(seed)
    while True:
        net = Mlp(list(sizes), activation, rng, final_init_scale=0.5)
        x = rng.normal(0, 1, (batch, sizes[0]))
        if relu_kink_margin(net, x) > margin:
            return net, x, rng


class TestForward:
    def test_zero_weights_give_zero_command(self):
        net = Mlp([3, 4, 1], "tanh", np.random.default_rng(0))
        for w in net.weights:
            w[...] = 0.0
        assert net.forward(np.zeros(3))[0, 0] == 0.0

    def test_tanh_output_bounded(self, rng):
        # float tanh saturates to exactly +-1.0 for huge inputs
        net = Mlp([3, 16, 1], "tanh", rng, final_init_scale=5.0)
        for _ in range(50):
            y = net.forward(rng.normal(0, 3, 3))
            assert -1.0 <= y[0, 0] <= 1.0

    def test_seeded_reproducibility(self):
        a = Mlp([3, 8, 1], "tanh", np.random.default_rng(42))
        b = Mlp([3, 8, 1], "tanh", np.random.default_rng(42))
        x = np.array([0.3, -0.1, 0.7])
        assert a.forward(x)[0, 0] == b.forward(x)[0, 0]

    def test_non_finite_output_faults(self):
        net = Mlp([2, 2, 1], "identity", np.random.default_rng(0))
        net.weights[0][...] = 1e308
        net.weights[1][...] = 1e308
        with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
            net.forward(np.array([1e30, 1e30]))


class TestGradients:
    def test_mse_loss_gradient_matches_finite_differences(self):
        for trial in range(20):
            net, x, rng = sample_clear_of_kinks(100 + trial, (4, 8, 6, 1), "identity", 5)
            target = rng.normal(0, 1, 5)

            def loss():
                out = net.forward(x)[:, 0]
                return float(np.mean((out - target) ** 2))

            out, cache = net.forward_cached(x)
            err = out[:, 0] - target
            grads, _ = net.backward(cache, (2.0 * err / err.size)[:, None])
            assert max_rel_error(flatten_grads(grads), numeric_gradient(loss, net)) < 1e-4

    def test_tanh_head_gradient_matches_finite_differences(self):
        for trial in range(10):
            net, x, _ = sample_clear_of_kinks(200 + trial, (3, 6, 1), "tanh", 4)

            def loss():
                return float(np.sum(net.forward(x)))

            _, cache = net.forward_cached(x)
            grads, _ = net.backward(cache, np.ones((4, 1)))
            assert max_rel_error(flatten_grads(grads), numeric_gradient(loss, net)) < 1e-4

    def test_input_gradient(self):
        net, x, _ = sample_clear_of_kinks(7, (3, 5, 1), "identity", 1)
        _, cache = net.forward_cached(x)
        _, grad_in = net.backward(cache, np.ones((1, 1)))
        eps = 1e-6
        for i in range(3):
            up = x.copy()
            up[0, i] += eps
            down = x.copy()
            down[0, i] -= eps
            numeric = (net.forward(up)[0, 0] - net.forward(down)[0, 0]) / (2 * eps)
            assert grad_in[0, i] == pytest.approx(numeric, rel=1e-5, abs=1e-8)


class TestSoftUpdate:
    def test_tau_one_copies_online(self, rng):
        online = Mlp([2, 3, 1], "tanh", rng)
        target = Mlp([2, 3, 1], "tanh", rng)
        soft_update(target, online, 1.0)
        for t, o in zip(target.parameters(), online.parameters()):
            assert np.array_equal(t, o)

    def test_tau_zero_keeps_target(self, rng):
        online = Mlp([2, 3, 1], "tanh", rng)
        target = Mlp([2, 3, 1], "tanh", rng)
        before = [p.copy() for p in target.parameters()]
        soft_update(target, online, 0.0)
        for t, b in zip(target.parameters(), before):
            assert np.array_equal(t, b)

    def test_halfway_blend_on_scalars(self):
        online = Mlp([1, 1], "identity", np.random.default_rng(0))
        target = Mlp([1, 1], "identity", np.random.default_rng(0))
        online.weights[0][...] = 2.0
        target.weights[0][...] = 0.0
        soft_update(target, online, 0.5)
        assert target.weights[0][0, 0] == 1.0

    def test_geometric_convergence(self):
        online = Mlp([1, 1], "identity", np.random.default_rng(0))
        target = Mlp([1, 1], "identity", np.random.default_rng(0))
        online.weights[0][...] = 1.0
        target.weights[0][...] = 0.0
        tau = 0.25
        for k in range(1, 30):
            soft_update(target, online, tau)
            assert target.weights[0][0, 0] == pytest.approx(1.0 - (1.0 - tau) ** k)

    def test_shape_mismatch_faults(self, rng):
        with pytest.raises(ValueError):
            soft_update(Mlp([2, 1], "tanh", rng), Mlp([3, 1], "tanh", rng), 0.5)


class TestAdam:
    def test_zero_gradient_leaves_params(self, rng):
        net = Mlp([2, 3, 1], "tanh", rng)
        adam = Adam(net, lr=0.1)
        before = [p.copy() for p in net.parameters()]
        zero = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        adam.step(net, zero)
        for p, b in zip(net.parameters(), before):
            assert np.array_equal(p, b)

    def test_descends_a_quadratic(self):
        net = Mlp([1, 1], "identity", np.random.default_rng(0))
        net.weights[0][...] = 4.0
        net.biases[0][...] = 0.0
        adam = Adam(net, lr=0.05)
        for _ in range(500):
            w = net.weights[0][0, 0]
            adam.step(net, [(np.array([[2.0 * w]]), np.array([0.0]))])
        assert abs(net.weights[0][0, 0]) < 1e-2


class TestSerialization:
    def test_round_trip(self, rng, tmp_path):
        net = Mlp([3, 8, 1], "tanh", rng)
        blob = json.dumps(net.to_dict())
        twin = Mlp.from_dict(json.loads(blob))
        x = rng.normal(0, 1, (4, 3))
        assert np.array_equal(net.forward(x), twin.forward(x))

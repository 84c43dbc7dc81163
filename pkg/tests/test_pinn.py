import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hmcompress.nn import Layer, Network, TrainConfig, forward, init_network
from hmcompress.pinn import (
    PINN_FIXTURE,
    PoissonProblem,
    evaluate_compressed_pinn,
    forward_with_input_derivatives,
    input_derivatives,
    physics_loss,
    physics_loss_and_grad,
    poisson_sine,
    relative_l2_error,
    train_pinn,
)


def linear_problem(ua=0.0, ub=0.0):
    return PoissonProblem(forcing=lambda x: np.zeros_like(x), domain=(0.0, 1.0),
                          boundary_values=(ua, ub), collocation_points=np.linspace(0.1, 0.9, 9),
                          exact=lambda x: ua + (ub - ua) * x)


class TestProblem:
    def test_builtin(self):
        prob = poisson_sine()
        x = prob.collocation_points
        assert x.size == 64 and x.min() > 0 and x.max() < 1
        assert prob.boundary_weight == 10.0
        assert_allclose(prob.forcing(np.array([0.5])), [-np.pi ** 2])

    @pytest.mark.parametrize("kwargs", [dict(domain=(1.0, 0.0)), dict(collocation_points=np.array([0.0, 0.5])),
                                        dict(collocation_points=np.array([0.6, 0.4])),
                                        dict(boundary_weight=0.0)])
    def test_validation(self, kwargs):
        base = dict(forcing=np.sin, domain=(0.0, 1.0), boundary_values=(0.0, 0.0),
                    collocation_points=np.array([0.5]))
        base.update(kwargs)
        with pytest.raises(ValueError):
            PoissonProblem(**base)


class TestInputDerivatives:
    def test_identity_net(self):
        net = Network([Layer(np.array([[1.0]]), np.zeros(1), "identity")])
        d = forward_with_input_derivatives(net, 0.7)
        assert (d.u, d.du_dx, d.d2u_dx2) == (0.7, 1.0, 0.0)

    def test_single_tanh_neuron(self):
        w, b = 1.7, -0.3
        net = Network([Layer(np.array([[w]]), np.array([b]), "tanh"),
                       Layer(np.array([[1.0]]), np.zeros(1), "identity")])
        x = 0.4
        t = np.tanh(w * x + b)
        d = forward_with_input_derivatives(net, x)
        assert abs(d.u - t) <= 1e-12
        assert abs(d.du_dx - w * (1 - t * t)) <= 1e-12
        assert abs(d.d2u_dx2 - w * w * (-2 * t * (1 - t * t))) <= 1e-12

    @pytest.mark.parametrize("seed", range(50))
    def test_finite_differences(self, seed):
        net = init_network([1, 8, 8, 1], seed=seed)
        x = np.random.default_rng(seed).uniform(-1, 1)
        h = 1e-4
        f = lambda s: forward(net, np.array([s]))[0]
        d = forward_with_input_derivatives(net, x)
        du = (f(x + h) - f(x - h)) / (2 * h)
        d2u = (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2
        assert abs(d.du_dx - du) <= 1e-5 * max(abs(du), 1.0)
        assert abs(d.d2u_dx2 - d2u) <= 1e-5 * max(abs(d2u), 1.0)

    def test_vectorised_matches_scalar(self):
        net = init_network([1, 6, 6, 1], seed=2)
        xs = np.linspace(-1, 1, 7)
        u, du, d2u = input_derivatives(net, xs)
        for i, x in enumerate(xs):
            d = forward_with_input_derivatives(net, x)
            assert_allclose([u[i], du[i], d2u[i]], [d.u, d.du_dx, d.d2u_dx2], rtol=1e-14, atol=1e-15)


class TestPhysicsLoss:
    def test_linear_exact_solution(self):
        prob = linear_problem(0.5, 2.0)
        net = Network([Layer(np.array([[1.5]]), np.array([0.5]), "identity")])
        assert physics_loss(net, prob) <= 1e-20

    def test_zero_net_on_homogeneous(self):
        net = Network([Layer(np.zeros((1, 1)), np.zeros(1), "identity")])
        assert physics_loss(net, linear_problem()) == 0.0

    def test_scalar_recomputation(self):
        prob = poisson_sine()
        net = init_network([1, 8, 8, 1], seed=5)
        total = 0.0
        for x in prob.collocation_points:
            d = forward_with_input_derivatives(net, x)
            total += (d.d2u_dx2 - prob.forcing(x)) ** 2
        bc = forward_with_input_derivatives(net, 0.0).u ** 2 + forward_with_input_derivatives(net, 1.0).u ** 2
        assert_allclose(physics_loss(net, prob), total / prob.collocation_points.size + 10.0 * bc, rtol=1e-13)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_finite_differences(self, seed):
        prob = poisson_sine(16)
        net = init_network([1, 6, 6, 1], seed=seed)
        value, g = physics_loss_and_grad(net, prob)
        assert value == physics_loss(net, prob)
        theta = net.flat_params()
        h = 1e-6
        for i in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += h
            tm[i] -= h
            fd = (physics_loss(net.with_params(tp), prob) - physics_loss(net.with_params(tm), prob)) / (2 * h)
            assert abs(g[i] - fd) <= 1e-5 * max(abs(fd), 1.0)


class TestTraining:
    def test_zero_steps(self):
        prob = poisson_sine()
        res = train_pinn(prob, (1, 8, 1), TrainConfig(1e-3, 0))
        net0 = init_network([1, 8, 1], seed=0)
        assert_array_equal(res.net.flat_params(), net0.flat_params())
        assert res.rel_l2 == relative_l2_error(net0, prob)
        assert len(res.losses) == 1

    def test_deterministic(self):
        prob = poisson_sine()
        a = train_pinn(prob, (1, 8, 8, 1), TrainConfig(1e-3, 50))
        b = train_pinn(prob, (1, 8, 8, 1), TrainConfig(1e-3, 50))
        assert_array_equal(a.losses, b.losses)

    def test_solution_table(self):
        prob = poisson_sine()
        res = train_pinn(prob, (1, 4, 1), TrainConfig(1e-3, 0))
        table = res.solution_table(prob)
        assert table.shape == (512, 4)
        assert_allclose(table[:, 3], np.abs(table[:, 1] - table[:, 2]))

    def test_fixture_accuracy(self, trained_pinn):
        _, res = trained_pinn
        assert PINN_FIXTURE == dict(arch=(1, 32, 32, 1), learning_rate=1e-3, steps=20000, seed=0)
        assert res.rel_l2 < 1e-2

    def test_fixture_checkpoints_decrease(self, trained_pinn):
        _, res = trained_pinn
        checkpoints = res.losses[::100]
        assert np.all(np.diff(checkpoints) < 0)


class TestCompressedEvaluation:
    def test_near_exact(self, trained_pinn):
        prob, res = trained_pinn
        rec = evaluate_compressed_pinn(res.net, [1e-12], prob)[0]
        assert abs(rec["rel_l2"] - res.rel_l2) <= 1e-8

    def test_ladder(self, trained_pinn):
        prob, res = trained_pinn
        ladder = [3.0, 2.0, 1e-1, 1e-3, 1e-12]
        recs = evaluate_compressed_pinn(res.net, ladder, prob, min_block=4)
        errs = [r["rel_l2"] for r in recs]
        assert all(a >= b - 1e-15 for a, b in zip(errs, errs[1:]))
        assert recs[0]["ratio"] < recs[-1]["ratio"]
        assert len(recs[0]["ratios"]) == 3

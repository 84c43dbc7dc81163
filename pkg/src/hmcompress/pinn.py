"""
1-D Poisson problem ``u'' = f`` on ``[a, b]`` solved by a physics-informed
network.

Input derivatives are propagated exactly in forward mode as the jet
``(u, du/dx, d2u/dx2)``; the parameter gradient of the physics loss is the
reverse-mode adjoint of that jet propagation.
"""
from dataclasses import dataclass, field

import numpy as np

from .nn import TrainConfig, _require_dense, _train, compress_network, densify, forward, init_network

__all__ = [
    "PoissonProblem",
    "DerivativeBundle",
    "PinnResult",
    "poisson_sine",
    "forward_with_input_derivatives",
    "input_derivatives",
    "physics_loss",
    "physics_loss_and_grad",
    "relative_l2_error",
    "train_pinn",
    "evaluate_compressed_pinn",
    "PINN_FIXTURE",
]


@dataclass(frozen=True, eq=False)
class PoissonProblem:
    forcing: object
    domain: tuple
    boundary_values: tuple
    collocation_points: np.ndarray
    boundary_weight: float = 10.0
    exact: object = None

    def __post_init__(self):
        a, b = self.domain
        if not a < b:
            raise ValueError("domain must satisfy a < b")
        x = np.asarray(self.collocation_points, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("collocation points must be a nonempty 1-D array")
        if np.any(x <= a) or np.any(x >= b):
            raise ValueError("collocation points must lie strictly inside the domain")
        if np.any(np.diff(x) < 0):
            raise ValueError("collocation points must be sorted")
        if self.boundary_weight <= 0:
            raise ValueError("boundary_weight must be positive")
        object.__setattr__(self, "collocation_points", x)

    def grid(self, n=512):
        return np.linspace(self.domain[0], self.domain[1], n)


def poisson_sine(n_collocation=64, boundary_weight=10.0):
    """``u'' = -pi^2 sin(pi x)`` on ``[0, 1]``, ``u(0) = u(1) = 0``; solution ``sin(pi x)``."""
    x = np.linspace(0.0, 1.0, n_collocation + 2)[1:-1]
    return PoissonProblem(
        forcing=lambda t: -np.pi ** 2 * np.sin(np.pi * t),
        domain=(0.0, 1.0),
        boundary_values=(0.0, 0.0),
        collocation_points=x,
        boundary_weight=boundary_weight,
        exact=lambda t: np.sin(np.pi * t),
    )


@dataclass(frozen=True)
class DerivativeBundle:
    u: float
    du_dx: float
    d2u_dx2: float


def _check_scalar_net(net):
    if net.sizes[0] != 1 or net.sizes[-1] != 1:
        raise ValueError("physics-informed networks here map a scalar to a scalar")
    for layer in net.layers:
        if layer.activation not in ("tanh", "identity"):
            raise ValueError(f"unsupported activation {layer.activation!r}")


def _jet_forward(net, x):
    """Propagate value, first and second input derivative for a batch of scalars."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    a0, a1, a2 = x, np.ones_like(x), np.zeros_like(x)
    cache = []
    for layer in net.layers:
        z0 = layer.apply_weight(a0) + layer.bias
        z1 = layer.apply_weight(a1)
        z2 = layer.apply_weight(a2)
        if layer.activation == "tanh":
            t = np.tanh(z0)
            s1 = 1.0 - t * t
            s2 = -2.0 * t * s1
            h0, h1, h2 = t, s1 * z1, s2 * z1 * z1 + s1 * z2
        else:
            t = s1 = s2 = None
            h0, h1, h2 = z0, z1, z2
        cache.append((a0, a1, a2, z1, z2, t, s1, s2))
        a0, a1, a2 = h0, h1, h2
    return (a0[:, 0], a1[:, 0], a2[:, 0]), cache


def _jet_backward(net, cache, g0, g1, g2):
    """Adjoint of :func:`_jet_forward`; returns the flat parameter gradient."""
    g0, g1, g2 = (np.asarray(g, dtype=np.float64).reshape(-1, 1) for g in (g0, g1, g2))
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        a0, a1, a2, z1, z2, t, s1, s2 = cache[i]
        if layer.activation == "tanh":
            s3 = -2.0 * s1 * s1 + 4.0 * t * t * s1
            d2 = g2 * s1
            d1 = g1 * s1 + g2 * 2.0 * s2 * z1
            d0 = g0 * s1 + g1 * s2 * z1 + g2 * (s3 * z1 * z1 + s2 * z2)
        else:
            d0, d1, d2 = g0, g1, g2
        gW = d0.T @ a0 + d1.T @ a1 + d2.T @ a2
        grads[i] = np.concatenate([gW.ravel(), d0.sum(axis=0)])
        W = layer.weight
        g0, g1, g2 = d0 @ W, d1 @ W, d2 @ W
    return np.concatenate(grads)


def input_derivatives(net, x):
    """Vectorised ``(u, u', u'')`` at the points ``x``."""
    _check_scalar_net(net)
    (u, du, d2u), _ = _jet_forward(net, x)
    return u, du, d2u


def forward_with_input_derivatives(net, x):
    u, du, d2u = input_derivatives(net, np.array([float(x)]))
    return DerivativeBundle(float(u[0]), float(du[0]), float(d2u[0]))


def _points(prob):
    a, b = prob.domain
    return np.concatenate([prob.collocation_points, [a, b]])


def physics_loss(net, prob):
    """
    ``mean((u'' - f)^2)`` over the collocation points plus
    ``boundary_weight * ((u(a) - u_a)^2 + (u(b) - u_b)^2)``.
    """
    u, _, d2u = input_derivatives(net, _points(prob))
    n = prob.collocation_points.size
    r = d2u[:n] - prob.forcing(prob.collocation_points)
    ua, ub = prob.boundary_values
    bc = (u[n] - ua) ** 2 + (u[n + 1] - ub) ** 2
    return float(np.mean(r * r) + prob.boundary_weight * bc)


def physics_loss_and_grad(net, prob):
    _check_scalar_net(net)
    _require_dense(net)
    x = _points(prob)
    (u, _, d2u), cache = _jet_forward(net, x)
    n = prob.collocation_points.size
    r = d2u[:n] - prob.forcing(prob.collocation_points)
    ua, ub = prob.boundary_values
    eb = np.array([u[n] - ua, u[n + 1] - ub])
    value = float(np.mean(r * r) + prob.boundary_weight * np.sum(eb * eb))
    g0 = np.zeros_like(x)
    g1 = np.zeros_like(x)
    g2 = np.zeros_like(x)
    g2[:n] = 2.0 * r / n
    g0[n:] = 2.0 * prob.boundary_weight * eb
    return value, _jet_backward(net, cache, g0, g1, g2)


class _PhysicsLoss:
    def __init__(self, prob):
        self.prob = prob

    def value(self, net):
        return physics_loss(net, self.prob)

    def __call__(self, net):
        return physics_loss_and_grad(net, self.prob)


def relative_l2_error(net, prob, n_grid=512):
    x = prob.grid(n_grid)
    pred = forward(net, x[:, None])[:, 0]
    exact = prob.exact(x)
    return float(np.linalg.norm(pred - exact) / np.linalg.norm(exact))


@dataclass
class PinnResult:
    net: object
    losses: np.ndarray
    rel_l2: float
    projections: list = field(default_factory=list)

    def solution_table(self, prob, n_grid=512):
        """Rows ``(x, u_pred, u_exact, abs_err)`` on the evaluation grid."""
        x = prob.grid(n_grid)
        pred = forward(self.net, x[:, None])[:, 0]
        exact = prob.exact(x)
        return np.column_stack([x, pred, exact, np.abs(pred - exact)])


# frozen training fixture for the built-in problem (see tests/test_pinn.py)
PINN_FIXTURE = dict(arch=(1, 32, 32, 1), learning_rate=1e-3, steps=20000, seed=0)


def train_pinn(prob, arch=(1, 32, 32, 1), cfg=None, projected=False):
    """
    Train a physics-informed network on ``prob`` by full-batch gradient
    descent (or its projected variant).
    """
    cfg = cfg or TrainConfig(PINN_FIXTURE["learning_rate"], PINN_FIXTURE["steps"],
                             seed=PINN_FIXTURE["seed"])
    net = init_network(arch, seed=cfg.seed)
    _check_scalar_net(net)
    result = _train(net, _PhysicsLoss(prob), cfg, project=projected)
    return PinnResult(result.net, result.losses, relative_l2_error(result.net, prob),
                      result.projections)


def evaluate_compressed_pinn(trained, epsilon_ladder, prob, min_block=16):
    """
    Compress a trained network at each tolerance and evaluate it.

    Returns a list of dicts with keys ``epsilon``, ``rel_l2``,
    ``physics_loss``, ``ratios`` (per layer) and ``ratio`` (all weights).
    """
    net = densify(trained)
    rows = []
    for eps in epsilon_ladder:
        compressed, reports = compress_network(net, eps, min_block=min_block)
        stored = sum(r.stored_scalars for r in reports)
        total = sum(r.rows * r.cols for r in reports)
        rows.append(dict(
            epsilon=float(eps),
            rel_l2=relative_l2_error(compressed, prob),
            physics_loss=physics_loss(densify(compressed), prob),
            ratios=tuple(r.compression_ratio for r in reports),
            ratio=stored / total,
        ))
    return rows

"""
Small fully connected networks in plain numpy: forward pass, reverse-mode
parameter gradients, empirical NTK Gram matrices, H-matrix compression of
the weights and (projected) full-batch gradient descent.

Inputs are batched along the first axis: ``X`` has shape ``(batch, in)``.
A single sample may be passed as a 1-D vector.
"""
from dataclasses import dataclass, field

import numpy as np

from .hmatrix import (
    BuildConfig,
    HMatrix,
    build_adaptive,
    measured_error,
    rank_sum,
    reconstruct,
    storage_stats,
)

__all__ = [
    "ACTIVATIONS",
    "Layer",
    "Network",
    "NTKGram",
    "TrainConfig",
    "TrainResult",
    "ProjectionEvent",
    "NTKDeviation",
    "init_network",
    "forward",
    "param_gradient",
    "batch_param_gradient",
    "jacobian",
    "ntk_gram",
    "compress_network",
    "densify",
    "ntk_deviation",
    "MSELoss",
    "train_gd",
    "train_projected",
]

ACTIVATIONS = ("identity", "tanh")


@dataclass(frozen=True, eq=False)
class Layer:
    """Affine map ``W a + b`` followed by ``activation``; ``W`` is dense or an HMatrix."""

    weight: object
    bias: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def shape(self):
        return self.weight.shape

    @property
    def is_dense(self):
        return not isinstance(self.weight, HMatrix)

    def dense_weight(self):
        return self.weight if self.is_dense else reconstruct(self.weight)

    def apply_weight(self, A):
        """``A @ W.T`` for a batch ``A`` of shape ``(batch, in)``."""
        if self.is_dense:
            return A @ self.weight.T
        return self.weight.matvec(A.T).T


@dataclass(frozen=True, eq=False)
class Network:
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.shape[1] != prev.shape[0]:
                raise ValueError(f"layer dimensions do not chain: {prev.shape} -> {nxt.shape}")
        if self.layers[-1].activation != "identity":
            raise ValueError("output layer must use the identity activation")

    @property
    def sizes(self):
        return [self.layers[0].shape[1]] + [layer.shape[0] for layer in self.layers]

    @property
    def param_count(self):
        return sum(l.shape[0] * l.shape[1] + l.shape[0] for l in self.layers)

    @property
    def is_dense(self):
        return all(l.is_dense for l in self.layers)

    def flat_params(self):
        """Weights (row-major) then bias, layer by layer."""
        parts = []
        for layer in self.layers:
            parts.append(layer.dense_weight().ravel())
            parts.append(layer.bias)
        return np.concatenate(parts)

    def with_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got {theta.shape}")
        layers, pos = [], 0
        for layer in self.layers:
            m, n = layer.shape
            W = theta[pos:pos + m * n].reshape(m, n).copy()
            pos += m * n
            b = theta[pos:pos + m].copy()
            pos += m
            layers.append(Layer(W, b, layer.activation))
        return Network(layers)

    def with_weights(self, weights):
        return Network(Layer(w, l.bias, l.activation) for w, l in zip(weights, self.layers))


@dataclass(frozen=True, eq=False)
class NTKGram:
    sample_inputs: np.ndarray
    gram: np.ndarray

    @property
    def is_symmetric(self):
        return bool(np.max(np.abs(self.gram - self.gram.T), initial=0.0) <= 1e-10)

    @property
    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(0.5 * (self.gram + self.gram.T))[0])

    @property
    def is_psd(self):
        m = self.gram.shape[0]
        return self.min_eigenvalue >= -1e-8 * np.trace(self.gram) / m


def _act(name, z):
    return np.tanh(z) if name == "tanh" else z


def _act_deriv(name, z, h):
    return 1.0 - h * h if name == "tanh" else np.ones_like(z)


def init_network(layer_sizes, seed=0, activation="tanh"):
    """
    Random network with weights ``N(0, 1/fan_in)`` and zero biases.

    Hidden layers use ``activation``; the output layer is linear.
    """
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        W = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in))
        act = "identity" if i == len(layer_sizes) - 2 else activation
        layers.append(Layer(W, np.zeros(n_out), act))
    return Network(layers)


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != net.layers[0].shape[1]:
        raise ValueError(f"input has {X.shape[1]} features, network expects {net.layers[0].shape[1]}")
    return X, single


def _forward_cache(net, X):
    acts, pre = [X], []
    for layer in net.layers:
        Z = layer.apply_weight(acts[-1]) + layer.bias
        pre.append(Z)
        acts.append(_act(layer.activation, Z))
    return acts, pre


def forward(net, x):
    X, single = _as_batch(net, x)
    out = _forward_cache(net, X)[0][-1]
    return out[0] if single else out


def _require_dense(net):
    if not net.is_dense:
        raise ValueError("gradients are defined for dense weights only; "
                         "call densify() on a compressed network first")


def batch_param_gradient(net, X, G, per_sample=False):
    """
    Reverse-mode gradient of ``sum_b G[b] . f(X[b])`` with respect to the
    flat parameter vector. With ``per_sample`` the result has one row per
    sample (the rows of the parameter Jacobian when ``G`` is all ones).
    """
    _require_dense(net)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    G = np.atleast_2d(np.asarray(G, dtype=np.float64))
    acts, pre = _forward_cache(net, X)
    grads = [None] * len(net.layers)
    delta = G
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        dz = delta * _act_deriv(layer.activation, pre[i], acts[i + 1])
        a = acts[i]
        if per_sample:
            gW = np.einsum("bi,bj->bij", dz, a).reshape(len(X), -1)
            grads[i] = np.concatenate([gW, dz], axis=1)
        else:
            grads[i] = np.concatenate([(dz.T @ a).ravel(), dz.sum(axis=0)])
        delta = dz @ layer.weight
    return np.concatenate(grads, axis=-1)


def param_gradient(net, x, upstream):
    """Gradient of ``upstream . f(x)`` with respect to all parameters."""
    X, _ = _as_batch(net, x)
    G = np.asarray(upstream, dtype=np.float64).reshape(1, -1)
    if G.shape[1] != net.layers[-1].shape[0]:
        raise ValueError("upstream cotangent does not match the output width")
    return batch_param_gradient(net, X, G)


def jacobian(net, samples):
    """Parameter Jacobian of a scalar-output network, one row per sample."""
    if net.layers[-1].shape[0] != 1:
        raise ValueError("the NTK is defined here for scalar-output networks only")
    X, _ = _as_batch(net, samples)
    return batch_param_gradient(net, X, np.ones((X.shape[0], 1)), per_sample=True)


def ntk_gram(net, samples):
    """Empirical NTK ``Theta[a, b] = grad f(x_a) . grad f(x_b)``."""
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None] if net.sizes[0] == 1 else X[None, :]
    J = jacobian(net, X)
    gram = J @ J.T
    return NTKGram(X, 0.5 * (gram + gram.T))


def densify(net):
    """Replace every H-matrix weight by its dense reconstruction."""
    return net.with_weights([l.dense_weight() for l in net.layers])


def compress_network(net, epsilon_tol, min_block=16, max_depth=32):
    """
    Compress every weight matrix of a dense network with
    :func:`~hmcompress.hmatrix.build_adaptive`.

    Returns
    -------
    (Network, list of CompressionReport)
        ``report[k].measured_error`` is ``||W_k - H(W_k)||_F``.
    """
    _require_dense(net)
    cfg = BuildConfig(epsilon_tol, min_block=min_block, max_depth=max_depth)
    weights, reports = [], []
    for layer in net.layers:
        H = build_adaptive(layer.weight, cfg)
        weights.append(H)
        reports.append(storage_stats(H, layer.weight))
    return net.with_weights(weights), reports


@dataclass(frozen=True)
class NTKDeviation:
    epsilon: float
    deviation: float
    relative: float
    layer_errors: tuple = ()


def ntk_deviation(net, samples, epsilon_ladder, min_block=16):
    """
    ``||Theta - Theta_H||_F`` for each tolerance, where ``Theta_H`` is the
    NTK of the densified compressed network.
    """
    _require_dense(net)
    theta = ntk_gram(net, samples).gram
    norm = np.linalg.norm(theta)
    out = []
    for eps in epsilon_ladder:
        compressed, reports = compress_network(net, eps, min_block=min_block)
        theta_h = ntk_gram(densify(compressed), samples).gram
        dev = float(np.linalg.norm(theta - theta_h))
        out.append(NTKDeviation(float(eps), dev, dev / norm,
                                tuple(r.measured_error for r in reports)))
    return out


class MSELoss:
    """Mean squared error ``mean((f(X) - Y)**2)`` over a fixed batch."""

    def __init__(self, X, Y):
        self.X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        self.Y = np.asarray(Y, dtype=np.float64).reshape(len(self.X), -1)

    def value(self, net):
        R = forward(net, self.X) - self.Y
        return float(np.mean(R * R))

    def __call__(self, net):
        R = forward(net, self.X) - self.Y
        G = 2.0 * R / R.size
        return float(np.mean(R * R)), batch_param_gradient(net, self.X, G)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    steps: int = 1000
    lam: float = 0.0
    projection_period: int = 100
    epsilon_tol: float = 1e-3
    seed: int = 0
    min_block: int = 16

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.projection_period < 1 or not self.epsilon_tol > 0:
            raise ValueError("projection_period and epsilon_tol must be positive")


@dataclass(frozen=True)
class ProjectionEvent:
    step: int
    rank_sum: int
    error_sum: float
    layer_errors: tuple
    layer_bounds: tuple
    loss_before: float
    loss_after: float
    composite: float

    @property
    def contraction_holds(self):
        return all(e <= b * (1 + 1e-12) + 1e-15 for e, b in zip(self.layer_errors, self.layer_bounds))


@dataclass
class TrainResult:
    net: Network
    losses: np.ndarray
    projections: list = field(default_factory=list)
    epsilon_tol: float = None

    @property
    def cumulative_projection_change(self):
        return float(sum(abs(p.loss_after - p.loss_before) for p in self.projections))

    @property
    def projection_bound(self):
        """``tol * (number of projections)``, reported next to the change above."""
        if self.epsilon_tol is None:
            return None
        return self.epsilon_tol * len(self.projections)


def _check_finite(value, step):
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite loss at step {step}")


def train_gd(net, loss, cfg):
    """
    Full-batch gradient descent ``theta <- theta - lr * grad L(theta)``.

    ``loss`` maps a network to ``(value, flat_gradient)``. The returned
    ``losses`` holds the loss before every step plus the final loss.
    """
    return _train(net, loss, cfg, project=False)


def _project(net, cfg):
    build = BuildConfig(cfg.epsilon_tol, min_block=cfg.min_block)
    weights, errors, bounds, ranks = [], [], [], 0
    for layer in net.layers:
        H = build_adaptive(layer.weight, build)
        weights.append(reconstruct(H))
        errors.append(measured_error(H, layer.weight).global_error)
        bounds.append(cfg.epsilon_tol * np.sqrt(H.n_r))
        ranks += rank_sum(H)
    return net.with_weights(weights), errors, bounds, ranks


def _loss_value(loss, net):
    if hasattr(loss, "value"):
        return loss.value(net)
    return loss(net)[0]


def train_projected(net, loss, cfg):
    """
    Gradient descent with a projection onto H-matrix-representable weights
    every ``cfg.projection_period`` steps.

    Each projection is logged with the rank sum ``R``, the total weight
    error, and the composite objective ``L + lam * R`` after projection.
    """
    return _train(net, loss, cfg, project=True)


def _train(net, loss, cfg, project):
    # a diverging run overflows before the finiteness check fires
    with np.errstate(over="ignore", invalid="ignore"):
        return _train_loop(net, loss, cfg, project)


def _train_loop(net, loss, cfg, project):
    _require_dense(net)
    theta = net.flat_params()
    losses = []
    events = []
    for t in range(cfg.steps):
        value, grad = loss(net)
        _check_finite(value, t)
        losses.append(value)
        theta = theta - cfg.learning_rate * grad
        net = net.with_params(theta)
        if project and (t + 1) % cfg.projection_period == 0:
            before = _loss_value(loss, net)
            net, errors, bounds, ranks = _project(net, cfg)
            after = _loss_value(loss, net)
            _check_finite(after, t)
            events.append(ProjectionEvent(t + 1, ranks, float(sum(errors)), tuple(errors),
                                          tuple(bounds), before, after, after + cfg.lam * ranks))
            theta = net.flat_params()
    final = _loss_value(loss, net)
    _check_finite(final, cfg.steps)
    losses.append(final)
    return TrainResult(net, np.array(losses), events, cfg.epsilon_tol if project else None)

"""
Reference compressors (global truncated SVD, magnitude pruning, uniform
quantization) and the network-level comparisons built on them.

Storage models, used for every ``ratio`` reported here:

* hmatrix: stored scalars of the H-matrix over ``m * n``
* svd_global: ``k * (m + n) / (m * n)``
* prune: surviving entries over ``m * n`` (no index overhead)
* quantize: ``bits / 64``
"""
from dataclasses import dataclass

import numpy as np

from .hmatrix import BuildConfig, build_adaptive, reconstruct
from .linalg import as_matrix, svd, tail_norms, truncation_rank
from .nn import densify, forward

__all__ = [
    "METHODS",
    "STORAGE_MODELS",
    "CompressorSpec",
    "CompressedMatrix",
    "PropagationRecord",
    "svd_compress_global",
    "prune_magnitude",
    "quantize_uniform",
    "apply_compressor",
    "compress_layers",
    "cumulative_error",
    "error_propagation",
    "propagation_sweep",
    "tradeoff_sweep",
    "matched_ratio_pairs",
]

METHODS = ("hmatrix", "svd_global", "prune", "quantize")

STORAGE_MODELS = {
    "hmatrix": "stored scalars (k(m+n) per low-rank leaf, mn per dense leaf) / mn",
    "svd_global": "k(m+n) / mn",
    "prune": "surviving entries / mn, index overhead not counted",
    "quantize": "bits / 64",
}


@dataclass(frozen=True)
class CompressorSpec:
    method: str
    parameter: float

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        p = self.parameter
        if self.method in ("hmatrix", "svd_global") and not p >= 0:
            raise ValueError("tolerance must be nonnegative")
        if self.method == "prune" and not 0 <= p < 1:
            raise ValueError("sparsity must lie in [0, 1)")
        if self.method == "quantize" and (p != int(p) or not 2 <= p <= 16):
            raise ValueError("bit width must be an integer in 2..16")


@dataclass(frozen=True, eq=False)
class CompressedMatrix:
    matrix: np.ndarray
    ratio: float
    error: float
    rank: int = None
    kept: int = None
    scale: float = None


@dataclass(frozen=True)
class PropagationRecord:
    layer: int
    error: float
    method: str
    tolerance: float


def svd_compress_global(W, epsilon):
    """
    One truncated SVD of the whole matrix with Frobenius tail ``<= epsilon``.

    Singular values at or below ``max(m, n) * eps_machine * sigma_1`` count
    as zero, so ``epsilon = 0`` keeps exactly the numerical rank. When no
    singular value is dropped the matrix is returned unchanged.
    """
    W = as_matrix(W, "W")
    m, n = W.shape
    f = svd(W)
    s = f.singular_values
    s = np.where(s <= max(m, n) * np.finfo(np.float64).eps * s[0], 0.0, s)
    k = truncation_rank(s, epsilon)
    # a truncation that drops nothing is the identity, not a rounded rebuild
    Wk = W.copy() if k == len(s) else f.reconstruct(k)
    return CompressedMatrix(Wk, k * (m + n) / (m * n), float(tail_norms(f.singular_values)[k]), rank=k)


def prune_magnitude(W, sparsity):
    """
    Zero the ``floor(sparsity * m * n)`` smallest-magnitude entries.

    Ties are broken by row-major position: the earlier entry is pruned first.
    """
    W = as_matrix(W, "W")
    if not 0 <= sparsity < 1:
        raise ValueError("sparsity must lie in [0, 1)")
    flat = W.ravel().copy()
    n_zero = int(np.floor(sparsity * flat.size))
    order = np.argsort(np.abs(flat), kind="stable")
    flat[order[:n_zero]] = 0.0
    out = flat.reshape(W.shape)
    kept = flat.size - n_zero
    return CompressedMatrix(out, kept / flat.size, float(np.linalg.norm(W - out)), kept=kept)


def quantize_uniform(W, bits):
    """
    Symmetric uniform quantization to ``2**(bits-1) - 1`` levels per sign,
    round-half-to-even, then dequantized.
    """
    W = as_matrix(W, "W")
    bits = int(bits)
    if not 2 <= bits <= 16:
        raise ValueError("bit width must be in 2..16")
    peak = float(np.max(np.abs(W)))
    if peak == 0.0:
        return CompressedMatrix(np.zeros_like(W), bits / 64, 0.0, scale=0.0)
    scale = peak / (2 ** (bits - 1) - 1)
    out = np.rint(W / scale) * scale
    return CompressedMatrix(out, bits / 64, float(np.linalg.norm(W - out)), scale=scale)


def apply_compressor(W, spec, min_block=16):
    """Dispatch ``spec`` on one weight matrix; returns a CompressedMatrix."""
    if spec.method == "hmatrix":
        W = as_matrix(W, "W")
        H = build_adaptive(W, BuildConfig(spec.parameter, min_block=min_block))
        Wh = reconstruct(H)
        return CompressedMatrix(Wh, H.stored_scalars / W.size, float(np.linalg.norm(W - Wh)))
    if spec.method == "svd_global":
        return svd_compress_global(W, spec.parameter)
    if spec.method == "prune":
        return prune_magnitude(W, spec.parameter)
    return quantize_uniform(W, int(spec.parameter))


def compress_layers(net, spec, n_layers=None, min_block=16):
    """
    Apply ``spec`` to the first ``n_layers`` weight matrices (all by
    default), leaving the rest and every bias untouched.

    Returns the new network and its weight-storage ratio.
    """
    net = densify(net)
    n_layers = len(net.layers) if n_layers is None else n_layers
    weights, stored, total = [], 0.0, 0
    for i, layer in enumerate(net.layers):
        W = layer.weight
        if i < n_layers:
            c = apply_compressor(W, spec, min_block=min_block)
            weights.append(c.matrix)
            stored += c.ratio * W.size
        else:
            weights.append(W)
            stored += W.size
        total += W.size
    return net.with_weights(weights), stored / total


def cumulative_error(net, spec, probe, n_layers, min_block=16):
    """Relative output error on ``probe`` after compressing layers ``1..n_layers``."""
    probe = np.atleast_2d(np.asarray(probe, dtype=np.float64))
    ref = forward(net, probe)
    if n_layers == 0:
        return 0.0
    compressed, _ = compress_layers(net, spec, n_layers, min_block=min_block)
    return float(np.linalg.norm(forward(compressed, probe) - ref) / np.linalg.norm(ref))


def error_propagation(net, spec, probe, min_block=16):
    """One :class:`PropagationRecord` per layer for the single setting ``spec``."""
    return [
        PropagationRecord(l, cumulative_error(net, spec, probe, l, min_block), spec.method, spec.parameter)
        for l in range(1, len(net.layers) + 1)
    ]


def propagation_sweep(net, probe, methods=("hmatrix", "svd_global"), tolerances=(1e-1, 1e-2, 1e-3),
                      min_block=16):
    """Error propagation for every method at every tolerance."""
    records = []
    for method in methods:
        for tol in tolerances:
            records.extend(error_propagation(net, CompressorSpec(method, tol), probe, min_block))
    return records


def tradeoff_sweep(net, evaluator, specs, min_block=16):
    """
    Rows ``(method, parameter, ratio, metric)`` with ``metric =
    evaluator(compressed_network)`` after compressing every layer.
    """
    rows = []
    for spec in specs:
        compressed, ratio = compress_layers(net, spec, min_block=min_block)
        rows.append((spec.method, float(spec.parameter), float(ratio), float(evaluator(compressed))))
    return rows


def matched_ratio_pairs(rows, method="hmatrix", baseline="prune", rel=0.10):
    """
    Pair every compressing ``method`` row (ratio < 1) with the ``baseline``
    row closest in ratio, provided the ratios agree within ``rel``.

    Returns tuples ``(method_row, baseline_row)``.
    """
    mine = [r for r in rows if r[0] == method and r[2] < 1.0]
    other = [r for r in rows if r[0] == baseline]
    pairs = []
    for row in mine:
        close = [o for o in other if abs(o[2] - row[2]) <= rel * row[2]]
        if close:
            pairs.append((row, min(close, key=lambda o: (abs(o[2] - row[2]), o[1]))))
    return pairs

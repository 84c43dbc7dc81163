"""Deterministic test-matrix families."""
import numpy as np

__all__ = ["KINDS", "generate_matrix", "random_orthogonal"]

KINDS = ("kernel_band", "geometric_spectrum", "rank_k", "random_dense")


def random_orthogonal(n, rng):
    """Haar-distributed orthogonal matrix (QR of a Gaussian, signs fixed)."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def generate_matrix(kind, n, seed=0, kappa=1e6, rank=4):
    """
    Build an ``n x n`` matrix of the given family.

    Parameters
    ----------
    kind : str
        ``"kernel_band"``: ``A[i, j] = 1 / (1 + |i - j|)`` (seed unused).
        ``"geometric_spectrum"``: ``Q1 diag(d) Q2^T`` with ``d`` geometric
        from 1 down to ``1 / kappa``.
        ``"rank_k"``: sum of ``rank`` Gaussian outer products.
        ``"random_dense"``: i.i.d. standard normal entries.
    n : int
    seed : int
    kappa : float
        Condition number for ``geometric_spectrum``.
    rank : int
        Number of outer products for ``rank_k``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    if kind == "kernel_band":
        i = np.arange(n)
        return 1.0 / (1.0 + np.abs(i[:, None] - i[None, :]))
    if kind == "geometric_spectrum":
        d = np.geomspace(1.0, 1.0 / kappa, n) if n > 1 else np.ones(1)
        Q1 = random_orthogonal(n, rng)
        Q2 = random_orthogonal(n, rng)
        return (Q1 * d) @ Q2.T
    if kind == "rank_k":
        return rng.standard_normal((n, rank)) @ rng.standard_normal((rank, n))
    if kind == "random_dense":
        return rng.standard_normal((n, n))
    raise ValueError(f"unknown matrix kind {kind!r}; expected one of {KINDS}")

"""
Dense linear algebra used by every other module: SVD, truncation rank,
norms and condition numbers.

All routines work on float64 ``np.ndarray`` objects and never mutate their
inputs.
"""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SVDFactorization",
    "SpectrumReport",
    "as_matrix",
    "svd",
    "jacobi_svd",
    "truncation_rank",
    "tail_norms",
    "frobenius_norm",
    "spectral_norm",
    "spectrum",
    "matvec_dense",
]


@dataclass(frozen=True)
class SVDFactorization:
    """Thin SVD ``A = U @ diag(s) @ V.T`` with ``r = min(m, n)``."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    @property
    def rank_bound(self):
        return self.singular_values.shape[0]

    def reconstruct(self, k=None):
        k = self.rank_bound if k is None else k
        return (self.U[:, :k] * self.singular_values[:k]) @ self.V[:, :k].T


@dataclass(frozen=True)
class SpectrumReport:
    sigma_max: float
    sigma_min: float
    condition_number: float

    @property
    def singular(self):
        return self.sigma_min == 0.0


def as_matrix(A, name="A"):
    """Validate and return ``A`` as a finite 2-D float64 array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def svd(A, method="lapack"):
    """
    Thin singular value decomposition.

    Parameters
    ----------
    A : array_like, shape (m, n)
        Finite real matrix.
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls the divide-and-conquer LAPACK driver through
        numpy; ``"jacobi"`` runs the one-sided Jacobi iteration in
        :func:`jacobi_svd` (slow, intended for small matrices and
        cross-checks).

    Returns
    -------
    SVDFactorization
        Singular values sorted nonincreasing.
    """
    A = as_matrix(A)
    if method == "jacobi":
        return jacobi_svd(A)
    if method != "lapack":
        raise ValueError(f"unknown svd method {method!r}")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    return SVDFactorization(u, s, vt.T)


def jacobi_svd(A, tol=1e-15, max_sweeps=60):
    """One-sided (Hestenes) Jacobi SVD.

    Columns of a working copy are orthogonalised pairwise by plane
    rotations; the column norms converge to the singular values.
    """
    A = as_matrix(A)
    m, n = A.shape
    if m < n:
        f = jacobi_svd(A.T, tol=tol, max_sweeps=max_sweeps)
        return SVDFactorization(f.V, f.singular_values, f.U)

    W = A.copy()
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                a = W[:, i] @ W[:, i]
                b = W[:, j] @ W[:, j]
                g = W[:, i] @ W[:, j]
                if abs(g) <= tol * np.sqrt(a * b) or g == 0.0:
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * g)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                wi, wj = W[:, i].copy(), W[:, j]
                W[:, i] = c * wi - s * wj
                W[:, j] = s * wi + c * wj
                vi, vj = V[:, i].copy(), V[:, j]
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
        if not rotated:
            break

    sigma = np.sqrt(np.einsum("ij,ij->j", W, W))
    order = np.argsort(-sigma, kind="stable")
    sigma, W, V = sigma[order], W[:, order], V[:, order]

    U = np.zeros((m, n))
    scale = sigma[0] if n else 0.0
    nonzero = sigma > max(m, n) * np.finfo(float).eps * scale
    U[:, nonzero] = W[:, nonzero] / sigma[nonzero]
    # complete the basis for numerically-zero singular values
    for col in np.flatnonzero(~nonzero):
        for e in range(m):
            cand = np.zeros(m)
            cand[e] = 1.0
            for _ in range(2):
                cand -= U[:, :col] @ (U[:, :col].T @ cand)
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                U[:, col] = cand / nrm
                break
    return SVDFactorization(U, sigma, V)


def tail_norms(singular_values):
    """``out[k] = sqrt(sum(s[k:]**2))`` for ``k = 0..r``."""
    s = np.asarray(singular_values, dtype=np.float64)
    sq = np.concatenate([np.cumsum((s * s)[::-1])[::-1], [0.0]])
    return np.sqrt(sq)


def truncation_rank(singular_values, epsilon):
    """
    Smallest ``k`` whose discarded Frobenius tail
    ``sqrt(sum_{i>k} s_i**2)`` does not exceed ``epsilon``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    tails = tail_norms(singular_values)
    return int(np.argmax(tails <= epsilon))


def frobenius_norm(A):
    A = np.asarray(A, dtype=np.float64)
    return float(np.sqrt(np.sum(A * A)))


def spectral_norm(A, seed=0, max_iter=500, tol=1e-12, block=16):
    """
    Largest singular value by block power iteration on ``A.T @ A``.

    A fixed-seed Gaussian block of ``min(block, n)`` vectors is iterated
    with a Rayleigh-Ritz step each sweep; the loop stops when the leading
    Ritz value (a Rayleigh quotient) changes by less than ``tol``
    (relative) or after ``max_iter`` sweeps. The block makes convergence
    depend on ``sigma_{block+1} / sigma_1`` rather than on the often tiny
    gap ``sigma_2 / sigma_1``.
    """
    A = as_matrix(A)
    if not np.any(A):
        return 0.0
    n = A.shape[1]
    b = min(block, n)
    V, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, b)))
    rq_old = 0.0
    for _ in range(max_iter):
        Q, _ = np.linalg.qr(A.T @ (A @ V))
        B = A @ Q
        theta, Y = np.linalg.eigh(B.T @ B)
        V = Q @ Y[:, ::-1]
        rq = float(theta[-1])
        if rq <= 0.0:
            return 0.0
        if abs(rq - rq_old) <= tol * rq:
            break
        rq_old = rq
    return float(np.linalg.norm(A @ V[:, 0]))


def spectrum(A):
    """Largest/smallest singular value and condition number of ``A``."""
    s = svd(A).singular_values
    smax, smin = float(s[0]), float(s[-1])
    if smin == 0.0:
        kappa = np.inf
    else:
        kappa = smax / smin
    return SpectrumReport(smax, smin, kappa)


def matvec_dense(A, x):
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x has {x.shape[0]} rows")
    return A @ x

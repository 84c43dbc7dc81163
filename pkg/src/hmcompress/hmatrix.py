"""
Adaptive, error-bounded hierarchical matrices.

A matrix is split as a quadtree. Each block is first offered to a truncated
SVD at the build tolerance; blocks for which no storage-saving truncation
meets the tolerance are quadrisected and retried, down to
``min_block``/``max_depth`` where they are kept exactly. The result stores every admissible block as a
factor pair ``U @ V.T`` whose Frobenius error is at most the tolerance, so
the global error is at most ``tol * sqrt(n_r)`` for ``n_r`` low-rank leaves.
"""
import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import SpectrumReport, as_matrix, spectrum, svd, tail_norms, truncation_rank

__all__ = [
    "BuildConfig",
    "LowRankFactor",
    "BlockNode",
    "HMatrix",
    "CompressionReport",
    "ErrorReport",
    "SpectralDiagnostics",
    "BlockDecision",
    "build_adaptive",
    "compress_block",
    "hmatvec",
    "reconstruct",
    "error_bound",
    "measured_error",
    "storage_stats",
    "depth_error_profile",
    "refinement_error_profile",
    "profile_decay",
    "rebuild_on_perturbed",
    "rank_sum",
    "spectral_diagnostics",
    "split_span",
]


@dataclass(frozen=True)
class BuildConfig:
    epsilon_tol: float
    min_block: int = 16
    max_depth: int = 32

    def __post_init__(self):
        if not self.epsilon_tol > 0:
            raise ValueError("epsilon_tol must be positive")
        if self.min_block < 2:
            raise ValueError("min_block must be at least 2")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")


@dataclass(frozen=True, eq=False)
class LowRankFactor:
    """``block ~= U @ V.T`` with ``local_error = ||block - U V^T||_F``."""

    U: np.ndarray
    V: np.ndarray
    local_error: float

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def stored_scalars(self):
        return self.rank * (self.U.shape[0] + self.V.shape[0])

    def to_dense(self):
        return self.U @ self.V.T


class BlockDecision(enum.Enum):
    LOW_RANK = "low_rank"
    DENSE = "dense"
    EXCEEDS = "exceeds"


@dataclass(frozen=True, eq=False)
class BlockNode:
    """
    One node of the block quadtree.

    ``kind`` is ``"branch"``, ``"lowrank"`` or ``"dense"``. Branch children
    are the four quadrants in row-major order (top-left, top-right,
    bottom-left, bottom-right).
    """

    row_span: tuple
    col_span: tuple
    kind: str
    level: int = 0
    factor: LowRankFactor = None
    block: np.ndarray = None
    children: tuple = ()

    @property
    def shape(self):
        return (self.row_span[1] - self.row_span[0], self.col_span[1] - self.col_span[0])

    @property
    def is_leaf(self):
        return self.kind != "branch"

    @property
    def local_error(self):
        if self.kind == "lowrank":
            return self.factor.local_error
        return 0.0

    @property
    def stored_scalars(self):
        if self.kind == "lowrank":
            return self.factor.stored_scalars
        if self.kind == "dense":
            return self.block.size
        return sum(c.stored_scalars for c in self.children)

    def leaves(self):
        """Leaves in preorder."""
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend(reversed(node.children))

    def to_dense(self):
        m, n = self.shape
        if self.kind == "lowrank":
            return self.factor.to_dense()
        if self.kind == "dense":
            return self.block.copy()
        out = np.zeros((m, n))
        r0, c0 = self.row_span[0], self.col_span[0]
        for child in self.children:
            (a, b), (c, d) = child.row_span, child.col_span
            out[a - r0:b - r0, c - c0:d - c0] = child.to_dense()
        return out


class HMatrix:
    """
    Immutable hierarchical matrix.

    Parameters
    ----------
    root : BlockNode
    tol : float
        Per-block Frobenius tolerance used to build the leaves.
    config : BuildConfig, optional
    build_time : float, optional
        Wall time of the construction, in seconds.
    """

    def __init__(self, root, tol, config=None, build_time=0.0):
        self.root = root
        self.tol = float(tol)
        self.config = config if config is not None else BuildConfig(tol)
        self.build_time = float(build_time)
        self._plan = None

    @property
    def shape(self):
        return self.root.shape

    @property
    def n_r(self):
        return sum(1 for leaf in self.root.leaves() if leaf.kind == "lowrank")

    @property
    def stored_scalars(self):
        return self.root.stored_scalars

    @property
    def depth(self):
        return max(leaf.level for leaf in self.root.leaves())

    def leaves(self):
        return self.root.leaves()

    def _matvec_plan(self):
        # flattened leaf list; built lazily, read-only afterwards
        if self._plan is None:
            low, dense = [], []
            for leaf in self.root.leaves():
                (r0, r1), (c0, c1) = leaf.row_span, leaf.col_span
                if leaf.kind == "lowrank":
                    if leaf.factor.rank > 0:
                        low.append((r0, r1, c0, c1, np.ascontiguousarray(leaf.factor.U),
                                    np.ascontiguousarray(leaf.factor.V.T)))
                else:
                    dense.append((r0, r1, c0, c1, leaf.block))
            self._plan = (tuple(low), tuple(dense))
        return self._plan

    def matvec(self, x):
        return hmatvec(self, x)

    def __matmul__(self, x):
        return hmatvec(self, x)

    def to_dense(self):
        return reconstruct(self)

    def __repr__(self):
        m, n = self.shape
        return (f"HMatrix({m}x{n}, tol={self.tol:g}, n_r={self.n_r}, depth={self.depth}, "
                f"ratio={self.stored_scalars / (m * n):.4f})")


@dataclass(frozen=True)
class CompressionReport:
    rows: int
    cols: int
    compression_ratio: float
    stored_scalars: int
    measured_error: float
    error_bound: float
    n_r: int
    depth: int
    build_time: float


@dataclass(frozen=True)
class ErrorReport:
    """Global error ``||A - H||_F`` and the per-leaf sum it is bounded by."""

    global_error: float
    leaf_sum: float
    leaf_errors: tuple = field(repr=False, default=())

    @property
    def triangle_holds(self):
        return self.global_error <= self.leaf_sum * (1 + 1e-12) + 1e-300


def split_span(span):
    """Split ``(start, stop)`` at the midpoint; the first half gets the ceiling."""
    a, b = span
    mid = a + (b - a + 1) // 2
    return (a, mid), (mid, b)


def _factor_from_svd(block, f, k):
    U = f.U[:, :k] * f.singular_values[:k]
    V = f.V[:, :k].copy()
    err = float(np.linalg.norm(block - U @ V.T)) if k > 0 else float(np.linalg.norm(block))
    return LowRankFactor(U, V, err)


def compress_block(block, epsilon, require_savings=True):
    """
    Try to replace ``block`` by a truncated SVD within ``epsilon``.

    Parameters
    ----------
    block : array_like, shape (m, n)
    epsilon : float
        Frobenius tolerance on ``block - U V^T``.
    require_savings : bool
        If true a factor is returned only when ``k (m + n) < m n``.

    Returns
    -------
    (BlockDecision, LowRankFactor or None)
        ``LOW_RANK`` with the factor; ``DENSE`` when a truncation meets the
        tolerance but does not save storage; ``EXCEEDS`` when no truncation
        below full rank meets it. :func:`build_adaptive` subdivides on both
        of the latter while the block may still be split.
    """
    block = np.asarray(block, dtype=np.float64)
    m, n = block.shape
    r = min(m, n)
    if not np.any(block):
        return BlockDecision.LOW_RANK, LowRankFactor(np.zeros((m, 0)), np.zeros((n, 0)), 0.0)

    def cheap(k):
        return (not require_savings) or k * (m + n) < m * n

    # singular values alone settle most decisions and are much cheaper
    s = np.linalg.svd(block, compute_uv=False)
    k = truncation_rank(s, epsilon)
    if not cheap(k):
        return (BlockDecision.EXCEEDS if k >= r else BlockDecision.DENSE), None

    f = svd(block)
    k = truncation_rank(f.singular_values, epsilon)
    # the recorded error is the direct residual; step up the rank if
    # rounding pushes it over the tolerance
    while cheap(k) and k <= r:
        factor = _factor_from_svd(block, f, k)
        if factor.local_error <= epsilon:
            return BlockDecision.LOW_RANK, factor
        k += 1
    return (BlockDecision.EXCEEDS if k >= r else BlockDecision.DENSE), None


def _can_split(shape, level, cfg):
    m, n = shape
    return level < cfg.max_depth and m > cfg.min_block and n > cfg.min_block


def _build_node(A, rows, cols, level, cfg):
    block = A[rows[0]:rows[1], cols[0]:cols[1]]
    decision, factor = compress_block(block, cfg.epsilon_tol)
    if decision is BlockDecision.LOW_RANK:
        return BlockNode(rows, cols, "lowrank", level, factor=factor)
    # no storage-saving factor meets the tolerance: refine while allowed
    if _can_split(block.shape, level, cfg):
        children = []
        for rs in split_span(rows):
            for cs in split_span(cols):
                children.append(_build_node(A, rs, cs, level + 1, cfg))
        return BlockNode(rows, cols, "branch", level, children=tuple(children))
    return BlockNode(rows, cols, "dense", level, block=block.copy())


def build_adaptive(A, cfg=None, **kwargs):
    """
    Build an adaptive H-matrix approximation of ``A``.

    Parameters
    ----------
    A : array_like, shape (m, n)
    cfg : BuildConfig or float
        Build configuration, or just the tolerance. Keyword arguments are
        forwarded to :class:`BuildConfig` when ``cfg`` is a number or None.

    Returns
    -------
    HMatrix
        Every low-rank leaf satisfies ``local_error <= cfg.epsilon_tol``.

    Examples
    --------
    >>> u = np.arange(1.0, 9.0)
    >>> H = build_adaptive(np.outer(u, u), 1e-8)
    >>> H.n_r, H.root.factor.rank
    (1, 1)
    """
    if not isinstance(cfg, BuildConfig):
        if cfg is not None:
            kwargs["epsilon_tol"] = cfg
        cfg = BuildConfig(**kwargs)
    A = as_matrix(A)
    t0 = time.perf_counter()
    root = _build_node(A, (0, A.shape[0]), (0, A.shape[1]), 0, cfg)
    return HMatrix(root, cfg.epsilon_tol, cfg, time.perf_counter() - t0)


def hmatvec(H, x):
    """
    Product ``H @ x`` without forming ``H``; ``x`` may be a vector or a
    matrix whose columns are multiplied.
    """
    x = np.asarray(x, dtype=np.float64)
    m, n = H.shape
    if x.shape[0] != n:
        raise ValueError(f"dimension mismatch: H is {m}x{n}, x has {x.shape[0]} rows")
    low, dense = H._matvec_plan()
    y = np.zeros((m,) + x.shape[1:])
    for r0, r1, c0, c1, U, Vt in low:
        y[r0:r1] += U @ (Vt @ x[c0:c1])
    for r0, r1, c0, c1, D in dense:
        y[r0:r1] += D @ x[c0:c1]
    return y


def reconstruct(H):
    return H.root.to_dense()


def error_bound(H):
    """``tol * sqrt(n_r)``."""
    return H.tol * np.sqrt(H.n_r)


def measured_error(H, A):
    """
    Global Frobenius error of ``H`` against ``A`` and the sum of per-leaf
    errors recomputed from ``A``.
    """
    A = as_matrix(A)
    if A.shape != H.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {H.shape}")
    leaf_errors = []
    for leaf in H.leaves():
        (r0, r1), (c0, c1) = leaf.row_span, leaf.col_span
        leaf_errors.append(float(np.linalg.norm(A[r0:r1, c0:c1] - leaf.to_dense())))
    glob = float(np.linalg.norm(A - reconstruct(H)))
    return ErrorReport(glob, float(sum(leaf_errors)), tuple(leaf_errors))


def storage_stats(H, A=None):
    """Compression report; ``measured_error`` is NaN when ``A`` is omitted."""
    m, n = H.shape
    err = measured_error(H, A).global_error if A is not None else float("nan")
    stored = H.stored_scalars
    return CompressionReport(
        rows=m,
        cols=n,
        compression_ratio=stored / (m * n),
        stored_scalars=stored,
        measured_error=err,
        error_bound=error_bound(H),
        n_r=H.n_r,
        depth=H.depth,
        build_time=H.build_time,
    )


def depth_error_profile(H, A):
    """
    Largest recomputed leaf error at each tree level, as a list of
    ``(level, max_error)`` over the levels that hold leaves.
    """
    A = as_matrix(A)
    worst = {}
    for leaf in H.leaves():
        (r0, r1), (c0, c1) = leaf.row_span, leaf.col_span
        err = float(np.linalg.norm(A[r0:r1, c0:c1] - leaf.to_dense()))
        worst[leaf.level] = max(worst.get(leaf.level, 0.0), err)
    return sorted(worst.items())


def refinement_error_profile(H, A):
    """
    Per-level maximum of the local error estimate the construction compares
    against the tolerance, over every block it examined (refined blocks
    included).

    The estimate for an ``m x n`` block is the Frobenius tail of its best
    approximation at the largest storage-saving rank,
    ``k_max = (m n - 1) // (m + n)``.
    """
    A = as_matrix(A)
    worst = {}
    stack = [H.root]
    while stack:
        node = stack.pop()
        (r0, r1), (c0, c1) = node.row_span, node.col_span
        m, n = node.shape
        s = np.linalg.svd(A[r0:r1, c0:c1], compute_uv=False)
        k_max = min((m * n - 1) // (m + n), s.size)
        est = float(tail_norms(s)[k_max])
        worst[node.level] = max(worst.get(node.level, 0.0), est)
        stack.extend(node.children)
    return sorted(worst.items())


def profile_decay(profile):
    """Mean ratio of successive per-level maxima, skipping zero denominators."""
    vals = [e for _, e in profile]
    ratios = [b / a for a, b in zip(vals, vals[1:]) if a > 0]
    return float(np.mean(ratios)) if ratios else float("nan")


def _recompress(node, A, tol):
    (r0, r1), (c0, c1) = node.row_span, node.col_span
    if node.kind == "branch":
        return BlockNode(node.row_span, node.col_span, "branch", node.level,
                         children=tuple(_recompress(c, A, tol) for c in node.children))
    block = A[r0:r1, c0:c1]
    if node.kind == "lowrank":
        decision, factor = compress_block(block, tol, require_savings=True)
        if decision is BlockDecision.LOW_RANK:
            return BlockNode(node.row_span, node.col_span, "lowrank", node.level, factor=factor)
    return BlockNode(node.row_span, node.col_span, "dense", node.level, block=block.copy())


def rebuild_on_perturbed(H, A_perturbed):
    """
    Recompress ``A_perturbed`` on the block partition of ``H``.

    Low-rank leaves are re-truncated at ``H.tol`` (falling back to an exact
    block when the new factor would not save storage); dense leaves are
    copied exactly. The partition itself is not changed.
    """
    A_perturbed = as_matrix(A_perturbed)
    if A_perturbed.shape != H.shape:
        raise ValueError(f"shape mismatch: {A_perturbed.shape} vs {H.shape}")
    t0 = time.perf_counter()
    root = _recompress(H.root, A_perturbed, H.tol)
    return HMatrix(root, H.tol, H.config, time.perf_counter() - t0)


def rank_sum(H):
    """Sum of leaf ranks; exact leaves count ``min(m, n)``."""
    total = 0
    for leaf in H.leaves():
        if leaf.kind == "lowrank":
            total += leaf.factor.rank
        else:
            total += min(leaf.shape)
    return total


@dataclass(frozen=True)
class SpectralDiagnostics:
    kappa_A: float
    kappa_H: float
    sigma_min_A: float
    tau_measured: float
    sigma_k_eff: float
    bound_thm1c: float  # None when sigma_min(A) <= ||A - H||_2
    bound_thm3: float  # None when sigma_k_eff == 0 or A is singular
    rel_tol: float = 1e-6

    @property
    def thm1c_applicable(self):
        return self.bound_thm1c is not None

    @property
    def thm3_applicable(self):
        return self.bound_thm3 is not None

    @property
    def thm1c_holds(self):
        """True/False, or None when the bound does not apply."""
        if self.bound_thm1c is None:
            return None
        return bool(self.kappa_H <= self.bound_thm1c * (1 + self.rel_tol))

    @property
    def thm3_holds(self):
        if self.bound_thm3 is None:
            return None
        return bool(self.kappa_H <= self.bound_thm3 * (1 + self.rel_tol))

    @property
    def thm1c_margin(self):
        return None if self.bound_thm1c is None else self.bound_thm1c - self.kappa_H

    @property
    def thm3_margin(self):
        return None if self.bound_thm3 is None else self.bound_thm3 - self.kappa_H


def _numerical_spectrum(A):
    rep = spectrum(A)
    floor = max(A.shape) * np.finfo(np.float64).eps * rep.sigma_max
    if rep.sigma_min <= floor:
        return SpectrumReport(rep.sigma_max, 0.0, np.inf)
    return rep


def spectral_diagnostics(H, A):
    """
    Condition numbers of ``A`` and ``H`` together with the two upper bounds
    on ``kappa(H)``:

    * ``kappa(A) * (1 + t / (sigma_min(A) - t))``, needs ``sigma_min(A) > t``
    * ``kappa(A) * (1 + t / sigma_min(H))``, needs ``sigma_min(H) > 0``

    with ``t = ||A - H||_2``. A singular value at or below
    ``max(m, n) * eps_machine * sigma_max`` is treated as zero, so a
    numerically rank-deficient operator reports ``kappa = inf`` and the
    bounds that divide by its smallest singular value are not applied.
    """
    A = as_matrix(A)
    Hd = reconstruct(H)
    sa = _numerical_spectrum(A)
    sh = _numerical_spectrum(Hd)
    tau = spectrum(A - Hd).sigma_max
    b1c = None
    b3 = None
    if not sa.singular:
        if sa.sigma_min > tau:
            b1c = sa.condition_number * (1.0 + tau / (sa.sigma_min - tau))
        if sh.sigma_min > 0:
            b3 = sa.condition_number * (1.0 + tau / sh.sigma_min)
    return SpectralDiagnostics(
        kappa_A=sa.condition_number,
        kappa_H=sh.condition_number,
        sigma_min_A=sa.sigma_min,
        tau_measured=tau,
        sigma_k_eff=sh.sigma_min,
        bound_thm1c=b1c,
        bound_thm3=b3,
    )

"""
Compressing a smooth kernel matrix.

The matrix A_ij = 1 / (1 + |i - j|) is full rank, but every block away from
the diagonal is numerically low rank. An adaptive quadtree finds those
blocks and stores them as thin factor pairs.

Run:  python3 demos/kernel_compression.py
"""
import time

import numpy as np

from hmcompress import build_adaptive, error_bound, hmatvec, measured_error, reconstruct
from hmcompress.generators import generate_matrix

n, eps = 1024, 1e-5
A = generate_matrix("kernel_band", n)
H = build_adaptive(A, eps)
print(H)

# %% Accuracy: the global error is controlled by the per-block tolerance.
rep = measured_error(H, A)
print(f"||A - H||_F = {rep.global_error:.3e}   bound tol*sqrt(n_r) = {error_bound(H):.3e}")
print(f"sum of leaf errors = {rep.leaf_sum:.3e}")

# %% Storage: compare with n^2 at a few sizes.
for m in (256, 512, 1024, 2048):
    Hm = build_adaptive(generate_matrix("kernel_band", m), eps)
    print(f"n={m:5d}  stored/n^2 = {Hm.stored_scalars / m ** 2:.4f}")

# %% Products never form the dense matrix.
x = np.random.default_rng(0).standard_normal(n)
t0 = time.perf_counter()
y = hmatvec(H, x)
t_h = time.perf_counter() - t0
print(f"hmatvec in {t_h * 1e3:.2f} ms, relative difference from A @ x: "
      f"{np.linalg.norm(y - A @ x) / np.linalg.norm(A @ x):.2e}")

# %% Where did the tree refine?  Leaf counts by level and kind.
levels = {}
for leaf in H.leaves():
    levels.setdefault((leaf.level, leaf.kind), 0)
    levels[(leaf.level, leaf.kind)] += 1
for (level, kind), count in sorted(levels.items()):
    print(f"level {level}: {count:3d} {kind} leaves")
assert np.allclose(reconstruct(H), A, atol=eps)

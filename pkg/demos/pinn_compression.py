"""
A physics-informed network for u'' = -pi^2 sin(pi x) on [0, 1], then
compressed with H-matrices and with the reference compressors.

Run:  python3 demos/pinn_compression.py        (about 15 s)
"""
from hmcompress.experiments import baseline_comparison, pinn_fixture, propagation_experiment
from hmcompress.pinn import evaluate_compressed_pinn

prob, res = pinn_fixture()
print(f"trained {len(res.losses) - 1} steps: loss {res.losses[0]:.3e} -> {res.losses[-1]:.3e}, "
      f"relative L2 error {res.rel_l2:.3e}")

# %% The trained weights barely compress: the hidden 32 x 32 matrix has no
# small singular values, so every block below the tolerance stays exact.
for rec in evaluate_compressed_pinn(res.net, [3.0, 1.0, 1e-1, 1e-3], prob):
    print(f"eps={rec['epsilon']:<6g} ratio {rec['ratio']:.3f}  rel L2 {rec['rel_l2']:.3e}")
for rec in evaluate_compressed_pinn(res.net, [1.0, 0.5, 0.3], prob, min_block=4):
    print(f"min_block 4, eps={rec['epsilon']:<4g} ratio {rec['ratio']:.3f}  rel L2 {rec['rel_l2']:.3e}")

# %% Against magnitude pruning at matched storage.
rows, pairs = baseline_comparison(res.net, prob)
for h, p in pairs:
    print(f"H eps={h[1]:g}: ratio {h[2]:.3f} err {h[3]:.3g}  |  prune {p[1]:g}: ratio {p[2]:.3f} err {p[3]:.3g}")

# %% How error accumulates as more layers are compressed.
for r in propagation_experiment(res.net):
    print(f"{r.method:10s} tol={r.tolerance:<6g} layers 1..{r.layer}: {r.error:.3e}")

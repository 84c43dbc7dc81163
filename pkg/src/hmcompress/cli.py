"""
Command-line experiment runner.

Every subcommand writes comma-separated files into ``--out`` with ``#``
header comments recording the seed, the configuration and the package
version. ``bounds`` exits with status 1 when any applicable bound row fails.
"""
import argparse
import os
import sys
from dataclasses import asdict, dataclass

from . import __version__
from .baselines import CompressorSpec, matched_ratio_pairs, tradeoff_sweep
from .experiments import (
    BOUND_COLUMNS,
    bench_matvec,
    bounds_battery,
    decay_profile,
    ntk_scaling,
    propagation_experiment,
    tradeoff_specs,
)
from .fileio import read_matrix, write_csv
from .generators import KINDS, generate_matrix
from .hmatrix import BuildConfig, build_adaptive, storage_stats
from .nn import TrainConfig
from .pinn import PINN_FIXTURE, evaluate_compressed_pinn, poisson_sine, relative_l2_error, train_pinn
from .serialize import read_network, save_hmatrix, save_network

__all__ = ["ExperimentConfig", "build_parser", "main"]


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    seed: int = 0
    kind: str = "kernel_band"
    n: int = None
    matrix_file: str = None
    eps_ladder: tuple = ()
    out: str = "."

    def __post_init__(self):
        ladder = tuple(float(e) for e in self.eps_ladder)
        if any(e < 0 for e in ladder):
            raise ValueError("tolerances must be nonnegative")
        if list(ladder) != sorted(ladder, reverse=True):
            raise ValueError("tolerance ladder must be sorted in descending order")
        if self.kind not in KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        object.__setattr__(self, "eps_ladder", ladder)

    def meta(self, **extra):
        m = {"seed": self.seed, "config": _config_string(self)}
        m.update(extra)
        m["version"] = __version__
        return m


def _config_string(cfg):
    items = asdict(cfg)
    items["eps_ladder"] = ",".join(repr(e) for e in cfg.eps_ladder)
    return " ".join(f"{k}={v}" for k, v in items.items() if v is not None and k != "seed")


def _ladder(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _path(cfg, name):
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _matrix(cfg, default_n):
    if cfg.matrix_file:
        return read_matrix(cfg.matrix_file)
    return generate_matrix(cfg.kind, cfg.n or default_n, seed=cfg.seed)


def _network(args, cfg):
    if args.network:
        return read_network(args.network)
    tc = TrainConfig(PINN_FIXTURE["learning_rate"], args.steps, seed=cfg.seed)
    return train_pinn(poisson_sine(), PINN_FIXTURE["arch"], tc).net


def cmd_compress(cfg, args):
    A = _matrix(cfg, 256)
    rows = []
    H = None
    for eps in cfg.eps_ladder:
        H = build_adaptive(A, BuildConfig(eps))
        r = storage_stats(H, A)
        rows.append((A.shape[0], eps, r.compression_ratio, r.measured_error, r.error_bound,
                     r.n_r, r.depth, r.build_time))
    path = _path(cfg, "compress.csv")
    write_csv(path, ("n", "eps", "ratio", "measured_error", "bound", "n_r", "depth", "build_seconds"),
              rows, cfg.meta(timing_columns="build_seconds"))
    if args.save_hmx:
        save_hmatrix(_path(cfg, args.save_hmx), H)
    print(f"wrote {path}")
    return 0


def cmd_bench_matvec(cfg, args):
    sizes = (cfg.n,) if cfg.n else (512, 1024, 2048, 4096)
    eps = cfg.eps_ladder[0] if cfg.eps_ladder else 1e-5
    rows = bench_matvec(sizes, eps=eps, repeats=args.repeats, seed=cfg.seed)
    path = _path(cfg, "bench_matvec.csv")
    write_csv(path, ("n", "method", "median_seconds", "rel_error", "check", "stored_scalars", "ratio"),
              rows, cfg.meta(eps=eps, timing_columns="median_seconds"))
    for n, method, t, err, *_ in rows:
        print(f"n={n:5d} {method:8s} {t * 1e3:9.3f} ms  rel_err={err:.2e}")
    return 0


def cmd_pinn(cfg, args):
    prob = poisson_sine()
    tc = TrainConfig(PINN_FIXTURE["learning_rate"], args.steps, seed=cfg.seed)
    result = train_pinn(prob, PINN_FIXTURE["arch"], tc)
    meta = cfg.meta(arch="-".join(map(str, PINN_FIXTURE["arch"])), learning_rate=tc.learning_rate,
                    steps=tc.steps, rel_l2=repr(result.rel_l2))
    write_csv(_path(cfg, "pinn_trajectory.csv"), ("step", "loss"),
              [(i, v) for i, v in enumerate(result.losses)], meta)
    write_csv(_path(cfg, "pinn_solution.csv"), ("x", "u_pred", "u_exact", "abs_err"),
              result.solution_table(prob), meta)
    ladder = cfg.eps_ladder or (1e-1, 1e-2, 1e-3)
    rows = []
    for rec in evaluate_compressed_pinn(result.net, ladder, prob):
        rows.append(("hmatrix", rec["epsilon"], rec["ratio"], rec["rel_l2"], rec["physics_loss"]))
    specs = [CompressorSpec("svd_global", e) for e in ladder]
    for method, eps, ratio, err in tradeoff_sweep(result.net, lambda c: relative_l2_error(c, prob), specs):
        rows.append((method, eps, ratio, err, float("nan")))
    write_csv(_path(cfg, "pinn_tradeoff.csv"), ("method", "epsilon", "ratio", "rel_l2", "physics_loss"),
              rows, meta)
    save_network(_path(cfg, "pinn_network.hmxn"), result.net)
    print(f"relative L2 error {result.rel_l2:.3e} after {tc.steps} steps")
    return 0


def cmd_bounds(cfg, args):
    rows = bounds_battery(seed=cfg.seed, n=cfg.n or 256, quick=args.quick)
    prof = decay_profile()
    path = _path(cfg, "bounds.csv")
    write_csv(path, BOUND_COLUMNS, [tuple(r[c] for c in BOUND_COLUMNS) for r in rows],
              cfg.meta(quick=args.quick))
    write_csv(_path(cfg, "decay_profile.csv"), ("level", "leaf_max_error", "refinement_estimate"),
              [(lvl, leaf, est) for lvl, (leaf, est)
               in enumerate(zip(prof["leaf_profile"], prof["estimate_profile"]))],
              cfg.meta(leaf_decay=repr(prof["leaf_decay"]), estimate_decay=repr(prof["estimate_decay"])))
    failed = [r for r in rows if r["applicable"] and not r["passed"]]
    applicable = sum(r["applicable"] for r in rows)
    print(f"{applicable - len(failed)}/{applicable} applicable rows pass, "
          f"{len(rows) - applicable} reported only; wrote {path}")
    for r in failed:
        print(f"FAIL {r['check']} {r['kind']} seed={r['seed']} eps={r['eps']:g} "
              f"measured={r['measured']:.6g} bound={r['bound']:.6g}")
    return 1 if failed else 0


def cmd_ntk(cfg, args):
    ladder = cfg.eps_ladder or (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    res = ntk_scaling(seed=cfg.seed, ladder=ladder)
    path = _path(cfg, "ntk.csv")
    write_csv(path, ("epsilon", "deviation", "relative"),
              [(d.epsilon, d.deviation, d.relative) for d in res["rows"]],
              cfg.meta(slope=repr(res["slope"]), constant=repr(res["constant"])))
    print(f"log-log slope {res['slope']:.3f}, C = {res['constant']:.3g}; wrote {path}")
    return 0


def cmd_propagate(cfg, args):
    net = _network(args, cfg)
    ladder = cfg.eps_ladder or (1e-1, 1e-2, 1e-3)
    recs = propagation_experiment(net, tolerances=ladder)
    path = _path(cfg, "propagation.csv")
    write_csv(path, ("method", "tolerance", "layer", "error"),
              [(r.method, r.tolerance, r.layer, r.error) for r in recs], cfg.meta())
    print(f"wrote {path}")
    return 0


def cmd_sweep(cfg, args):
    net = _network(args, cfg)
    prob = poisson_sine()
    specs = tradeoff_specs()
    if cfg.eps_ladder:
        specs = [s for s in specs if s.method in ("prune", "quantize")]
        specs = [CompressorSpec(m, e) for m in ("hmatrix", "svd_global") for e in cfg.eps_ladder] + specs
    rows = tradeoff_sweep(net, lambda c: relative_l2_error(c, prob), specs)
    path = _path(cfg, "sweep.csv")
    write_csv(path, ("method", "parameter", "ratio", "rel_l2"), rows, cfg.meta())
    pairs = matched_ratio_pairs(rows, "hmatrix", "prune", rel=0.10)
    write_csv(_path(cfg, "sweep_pairs.csv"),
              ("hmatrix_eps", "hmatrix_ratio", "hmatrix_rel_l2", "prune_sparsity", "prune_ratio",
               "prune_rel_l2"),
              [(a[1], a[2], a[3], b[1], b[2], b[3]) for a, b in pairs], cfg.meta())
    print(f"{len(rows)} settings, {len(pairs)} matched pairs; wrote {path}")
    return 0


COMMANDS = {
    "compress": cmd_compress,
    "bench-matvec": cmd_bench_matvec,
    "pinn": cmd_pinn,
    "bounds": cmd_bounds,
    "ntk": cmd_ntk,
    "propagate": cmd_propagate,
    "sweep": cmd_sweep,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--n", type=int, default=None, help="matrix size")
    common.add_argument("--eps", type=float, default=None, help="single tolerance")
    common.add_argument("--eps-ladder", type=_ladder, default=None,
                        help="comma-separated tolerances, descending")
    common.add_argument("--kind", choices=KINDS, default="kernel_band")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--matrix-file", default=None, help="matrix in the text format")

    parser = argparse.ArgumentParser(prog="hmcompress", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("compress", parents=[common], help="build an H-matrix and report it")
    p.add_argument("--save-hmx", default=None, help="also write the last H-matrix as HMX1")
    p = sub.add_parser("bench-matvec", parents=[common], help="time hmatvec against the dense product")
    p.add_argument("--repeats", type=int, default=21)
    for name, text in (("pinn", "train the Poisson network and compress it"),
                       ("propagate", "per-layer cumulative compression error"),
                       ("sweep", "compression ratio versus task error for every method")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--steps", type=int, default=PINN_FIXTURE["steps"])
        if name != "pinn":
            p.add_argument("--network", default=None, help="HMXN network (default: train the fixture)")
    p = sub.add_parser("bounds", parents=[common], help="verify the error and conditioning bounds")
    p.add_argument("--quick", action="store_true", help="fewer seeds")
    sub.add_parser("ntk", parents=[common], help="NTK deviation across a tolerance ladder")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.eps is not None and args.eps_ladder is not None:
        print("error: give --eps or --eps-ladder, not both", file=sys.stderr)
        return 2
    ladder = args.eps_ladder or ((args.eps,) if args.eps is not None else ())
    if args.command == "compress" and not ladder:
        ladder = (1e-5,)
    try:
        cfg = ExperimentConfig(args.command, args.seed, args.kind, args.n, args.matrix_file, ladder,
                               args.out)
        return COMMANDS[args.command](cfg, args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

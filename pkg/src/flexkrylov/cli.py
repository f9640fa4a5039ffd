"""Command line entry point: ``flexkrylov run|check|info``."""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bounds import estimate_lambda
from .harness import ConfigError, build_system, load_config, matrix_info, run_experiment
from .problems import MatrixMarketError, load_matrix_market
from .sparse import SplitSystem

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_BAD_INPUT = 2


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "threads", None) is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg


def cmd_run(args):
    cfg = _load(args)
    out = Path(args.output) if args.output else cfg.resolve(cfg.output)
    result = run_experiment(cfg, output=out, timing=args.timing)
    for c in result.cells:
        tr = c.trace
        if tr is None:
            print(f"{c.method.value:>10} eps_cg={c.eps_cg:<8g} error: {c.error}")
            continue
        print(f"{c.method.value:>10} eps_cg={c.eps_cg:<8g} {c.status:<13} "
              f"outer={tr.iterations:<6d} inner={sum(tr.inner_iterations):<9d} "
              f"verified_rel={tr.verified_relative_res:.3e}")
    print(f"wrote {result.summary_path} and {result.plot_path}")
    return EXIT_OK if result.all_converged else EXIT_NOT_CONVERGED


def cmd_check(args):
    cfg = _load(args)
    cells = len(cfg.methods) * len(cfg.eps_cg)
    print(f"config ok: problem {cfg.problem.name}, {cells} cells, eps_f={cfg.eps_f:g}, "
          f"seed={cfg.seed}")
    return EXIT_OK


def cmd_info(args):
    target = Path(args.target)
    if target.suffix == ".mtx":
        A = load_matrix_market(target)
        print(f"shape: {A.shape[0]} x {A.shape[1]}")
        print(f"nnz: {A.nnz}")
        if A.shape[0] != A.shape[1]:
            return EXIT_OK
        import numpy as np

        sys_ = SplitSystem.from_matrix(A, np.ones(A.n_rows))
    else:
        cfg = _load(args)
        sys_ = build_system(cfg)
    for key, val in matrix_info(sys_).items():
        print(f"{key}: {val}")
    if args.lam:
        est = estimate_lambda(sys_)
        flag = "" if est.converged else " (not converged)"
        print(f"lambda_estimate: {est.value:.6g} after {est.iterations} iterations{flag}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flexkrylov",
        description="Flexible short-recurrence Krylov experiments for H + S systems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the (method x eps_cg) sweep of a config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    p.add_argument("--threads", type=int, default=None, help="cells run in parallel (default 1)")
    p.add_argument("--output", default=None, help="output directory (overrides [run] output)")
    p.add_argument("--timing", action="store_true",
                   help="add wall-clock seconds to summary.csv (breaks byte-identical reruns)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="validate a config without running it")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("info", help="statistics of a config's problem or a .mtx file")
    p.add_argument("target", help="config file or Matrix Market matrix")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lambda", dest="lam", action="store_true",
                   help="also estimate max |spec(H^-1 S)| by power iteration")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_BAD_INPUT
    if args.command == "info":
        args.config = args.target
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (MatrixMarketError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())

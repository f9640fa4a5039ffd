"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--grid 127] [--repeat 5]

Kernels: CSR matvec, CG and PCG with IC(0) on the 2D Laplacian of the
convection-diffusion problem, the IC(0) factorization itself, and a short
FMR run. Each kernel is warmed up once (numba compilation) before timing.
"""

import argparse
import time

import numpy as np

from flexkrylov import (
    InnerKind,
    InnerSolverConfig,
    Method,
    SolverConfig,
    cg_solve,
    convection_diffusion,
    ic_factor,
    pcg_solve,
    solve,
    spmv,
)
from flexkrylov._accel import HAVE_NUMBA, set_numba


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(grid):
    sys = convection_diffusion(grid, 1e4)
    H = sys.H
    x = np.random.default_rng(0).standard_normal(sys.n)
    F = ic_factor(H)
    cg_cfg = InnerSolverConfig(InnerKind.CG, 1e-8)
    pcg_cfg = InnerSolverConfig(InnerKind.PCG, 1e-8, preconditioner=F)
    fmr_cfg = SolverConfig(Method.FMR, InnerSolverConfig(InnerKind.CG, 1e-1), 1e-12, 50)
    return {
        "spmv": (lambda: spmv(H, x), 200),
        "cg (1e-8)": (lambda: cg_solve(H, x, cg_cfg), 1),
        "pcg ic0 (1e-8)": (lambda: pcg_solve(H, x, pcg_cfg), 1),
        "ic0 factor": (lambda: ic_factor(H), 1),
        "fmr 50 its": (lambda: solve(sys, None, fmr_cfg, verify=False), 1),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=127)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    results = {}
    for name in backends:
        prev = set_numba(name == "numba")
        try:
            for label, (fn, inner_reps) in cases(args.grid).items():
                def many(fn=fn, k=inner_reps):
                    for _ in range(k):
                        fn()
                results[label, name] = best_of(many, args.repeat) / inner_reps
        finally:
            set_numba(prev)

    n = args.grid ** 2
    print(f"n = {n} ({args.grid} x {args.grid} grid), best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{b:>14}" for b in backends) + "   speedup")
    for label in cases(4):
        row = [results[label, b] for b in backends]
        speed = f"{row[1] / row[0]:9.2f}x" if len(row) == 2 else ""
        print(f"{label:<16}" + "".join(f"{t * 1e3:>12.3f}ms" for t in row) + "  " + speed)


if __name__ == "__main__":
    main()

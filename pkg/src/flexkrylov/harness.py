"""Experiment runner: config parsing, the (method x eps_cg) sweep, CSV and plot output.

Config grammar
--------------
Plain text with ``[section]`` headers and ``key = value`` lines. ``#`` and
``;`` start comments. Lists are comma separated. Unknown sections or keys are
errors. Sections and keys::

    [problem]
    name = convection_diffusion | spring_mass | matrix | port_hamiltonian
    n_grid = 127          # convection_diffusion
    a = 1e4               # convection_diffusion
    n_masses = 1000       # spring_mass
    stiffness = 100       # spring_mass
    damping = 1           # spring_mass
    tau_half = 0.1        # spring_mass, port_hamiltonian
    matrix = A.mtx        # matrix: split into H and S
    E = E.mtx             # port_hamiltonian
    J = J.mtx             # port_hamiltonian
    R = R.mtx             # port_hamiltonian
    scale = false         # port_hamiltonian: symmetric scaling by diag(E)^-1/2
    rhs = b.mtx           # optional; default is seeded uniform on [0, 1)

    [solver]
    methods = FMR, FGAL   # FMR FGAL LMR LGAL NonFlexMR NonFlexGAL
    eps_cg = 1e-1, 1e-12
    eps_f = 1e-12
    sigma = 1
    inner = cg            # cg | pcg | ic | direct
    droptol = 0           # incomplete Cholesky for pcg / ic
    max_outer = 2000
    max_inner = 0         # 0 means 10 n

    [run]
    seed = 42
    output = results
    threads = 1

Relative file paths are resolved against the config file's directory.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .inner import InnerKind, InnerSolverConfig, ic_factor_shifted
from .problems import (
    PHDescriptor,
    convection_diffusion,
    load_matrix_market,
    load_vector,
    ph_midpoint_system,
    spring_mass_chain,
    symmetric_scale,
)
from .solvers import Method, SolverConfig, solve
from .sparse import SplitSystem

PROBLEMS = ("convection_diffusion", "spring_mass", "matrix", "port_hamiltonian")

_PROBLEM_KEYS = {
    "convection_diffusion": {"n_grid": int, "a": float},
    "spring_mass": {"n_masses": int, "stiffness": float, "damping": float, "tau_half": float},
    "matrix": {"matrix": str},
    "port_hamiltonian": {"E": str, "J": str, "R": str, "tau_half": float, "scale": "bool"},
}
_PROBLEM_DEFAULTS = {
    "convection_diffusion": {"n_grid": 127, "a": 1e4},
    "spring_mass": {"n_masses": 1000, "stiffness": 100.0, "damping": 1.0, "tau_half": 0.1},
    "matrix": {},
    "port_hamiltonian": {"tau_half": 0.1, "scale": False},
}
_REQUIRED = {"matrix": ("matrix",), "port_hamiltonian": ("E", "J", "R")}

_SOLVER_KEYS = ("methods", "eps_cg", "eps_f", "sigma", "inner", "droptol", "max_outer",
                "max_inner")
_RUN_KEYS = ("seed", "output", "threads")

CSV_HEADER = "iteration,approx_h_inv_res,rho_bound,inner_iters,cumulative_inner_iters"
SUMMARY_HEADER = ("method,eps_cg,status,outer_iterations,total_inner_iters,initial_res,"
                  "final_approx_res,verified_res,verified_rel_res,seconds,error")


class ConfigError(ValueError):
    """Collects every problem found in a config; ``errors`` holds ``(line, key, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"line {ln}: {key}: {msg}" if ln else f"{key}: {msg}"
                 for ln, key, msg in self.errors]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    params: dict = field(default_factory=dict)
    rhs: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    methods: tuple = (Method.FMR, Method.FGAL)
    eps_cg: tuple = (1e-1, 1e-12)
    eps_f: float = 1e-12
    sigma: float = 1.0
    seed: int = 42
    output: str = "results"
    inner: InnerKind = InnerKind.CG
    droptol: float = 0.0
    max_outer: int = 2000
    max_inner: Optional[int] = None
    threads: int = 1
    base_dir: str = "."

    def __post_init__(self):
        errs = []
        if not self.methods:
            errs.append((None, "methods", "list must not be empty"))
        if not self.eps_cg:
            errs.append((None, "eps_cg", "list must not be empty"))
        if any(not 0 < e <= 1 for e in self.eps_cg):
            errs.append((None, "eps_cg", "every value must lie in (0, 1]"))
        if not 0 < self.eps_f < 1:
            errs.append((None, "eps_f", f"must lie in (0, 1), got {self.eps_f}"))
        if self.max_outer < 1:
            errs.append((None, "max_outer", "must be at least 1"))
        if self.threads < 1:
            errs.append((None, "threads", "must be at least 1"))
        if self.droptol < 0:
            errs.append((None, "droptol", "must be non-negative"))
        if errs:
            raise ConfigError(errs)

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_list(text, conv):
    items = [t.strip() for t in text.split(",")]
    if any(not t for t in items):
        raise ValueError("empty list element")
    return tuple(conv(t) for t in items)


def _parse_method(text):
    for m in Method:
        if m.value.lower() == text.lower():
            return m
    raise ValueError(f"unknown method {text!r}; choose from {', '.join(m.value for m in Method)}")


def _parse_inner(text):
    try:
        return InnerKind(text.strip().lower())
    except ValueError:
        raise ValueError(f"unknown inner solver {text!r}") from None


def _read_sections(text):
    sections = {}
    errors = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append((lineno, line, "malformed section header"))
                continue
            current = line[1:-1].strip().lower()
            if current not in ("problem", "solver", "run"):
                errors.append((lineno, current, "unknown section"))
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            errors.append((lineno, line, "expected 'key = value'"))
            continue
        if current is None:
            errors.append((lineno, line.split("=")[0].strip(), "key outside any section"))
            continue
        key, value = (t.strip() for t in line.split("=", 1))
        if key in sections[current]:
            errors.append((lineno, key, "duplicate key"))
            continue
        sections[current][key] = (value, lineno)
    return sections, errors


def parse_config(text, base_dir="."):
    """Parse and validate config text; raises :class:`ConfigError` listing every problem."""
    sections, errors = _read_sections(text)
    prob = sections.get("problem", {})
    solver = sections.get("solver", {})
    run = sections.get("run", {})

    def take(sec, key, conv, default=None):
        if key not in sec:
            return default
        value, ln = sec[key]
        try:
            return conv(value)
        except (ValueError, TypeError) as exc:
            errors.append((ln, key, str(exc)))
            return default

    name = None
    params = {}
    rhs = None
    if "name" not in prob:
        errors.append((None, "problem.name", "missing"))
    else:
        value, ln = prob["name"]
        if value not in PROBLEMS:
            errors.append((ln, "name", f"unknown problem {value!r}; choose from {', '.join(PROBLEMS)}"))
        else:
            name = value
    if name is not None:
        allowed = _PROBLEM_KEYS[name]
        params = dict(_PROBLEM_DEFAULTS[name])
        for key, (value, ln) in prob.items():
            if key in ("name", "rhs"):
                continue
            if key not in allowed:
                errors.append((ln, key, f"unknown key for problem {name!r}"))
                continue
            conv = _parse_bool if allowed[key] == "bool" else allowed[key]
            params[key] = take(prob, key, conv)
        for key in _REQUIRED.get(name, ()):
            if key not in params:
                errors.append((None, key, f"required for problem {name!r}"))
        rhs = take(prob, "rhs", str)
    for sec, known in (("solver", _SOLVER_KEYS), ("run", _RUN_KEYS)):
        for key, (_, ln) in sections.get(sec, {}).items():
            if key not in known:
                errors.append((ln, key, f"unknown key in [{sec}]"))

    kwargs = dict(
        methods=take(solver, "methods", lambda t: _parse_list(t, _parse_method)),
        eps_cg=take(solver, "eps_cg", lambda t: _parse_list(t, float)),
        eps_f=take(solver, "eps_f", float),
        sigma=take(solver, "sigma", float),
        inner=take(solver, "inner", _parse_inner),
        droptol=take(solver, "droptol", float),
        max_outer=take(solver, "max_outer", int),
        max_inner=take(solver, "max_inner", int),
        seed=take(run, "seed", int),
        output=take(run, "output", str),
        threads=take(run, "threads", int),
    )
    kwargs = {k: v for k, v in kwargs.items() if v is not None}
    if kwargs.get("max_inner") == 0:
        kwargs["max_inner"] = None
    if errors:
        raise ConfigError(errors)
    try:
        return ExperimentConfig(ProblemSpec(name, params, rhs), base_dir=str(base_dir), **kwargs)
    except ConfigError as exc:
        # attach line numbers where the key was given explicitly
        fixed = []
        for _, key, msg in exc.errors:
            ln = solver.get(key, run.get(key, (None, None)))[1]
            fixed.append((ln, key, msg))
        raise ConfigError(fixed) from None


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


# --------------------------------------------------------------------------
# problem construction

def build_system(cfg):
    """Assemble the :class:`SplitSystem` described by ``cfg.problem``."""
    spec = cfg.problem
    p = spec.params
    rng = np.random.default_rng(cfg.seed)
    if spec.name == "convection_diffusion":
        sys = convection_diffusion(p["n_grid"], p["a"], seed=cfg.seed)
    elif spec.name == "spring_mass":
        d = spring_mass_chain(p["n_masses"], p["stiffness"], p["damping"], p["tau_half"])
        sys = ph_midpoint_system(d, rng.random(d.n))
    elif spec.name == "matrix":
        A = load_matrix_market(cfg.resolve(p["matrix"]))
        sys = SplitSystem.from_matrix(A, rng.random(A.n_rows))
    elif spec.name == "port_hamiltonian":
        d = PHDescriptor(load_matrix_market(cfg.resolve(p["E"])),
                         load_matrix_market(cfg.resolve(p["J"])),
                         load_matrix_market(cfg.resolve(p["R"])), p["tau_half"])
        if p.get("scale"):
            d = symmetric_scale(d)
        sys = ph_midpoint_system(d, rng.random(d.n))
    else:  # pragma: no cover - rejected by parse_config
        raise ValueError(f"unknown problem {spec.name!r}")
    if spec.rhs is not None:
        rhs = load_vector(cfg.resolve(spec.rhs))
        sys = replace(sys, rhs=rhs)
    return replace(sys, sigma=cfg.sigma)


# --------------------------------------------------------------------------
# running

@dataclass
class CellResult:
    method: Method
    eps_cg: float
    csv_path: Optional[Path]
    trace: object = None
    error: Optional[str] = None
    seconds: float = 0.0

    @property
    def converged(self):
        return self.trace is not None and self.trace.converged

    @property
    def status(self):
        if self.error is not None:
            return "error"
        return "converged" if self.converged else "not_converged"


@dataclass
class ExperimentResult:
    cells: list
    summary_path: Path
    plot_path: Path

    @property
    def all_converged(self):
        return all(c.converged for c in self.cells)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(float(x), ".17g")


def cell_name(method, eps_cg):
    return f"{method.value}_eps{eps_cg:g}"


def write_trace_csv(path, trace):
    cum = 0
    rows = [CSV_HEADER]
    for m, (res, bound, inner) in enumerate(zip(trace.approx_res_norm, trace.rho_bound,
                                                trace.inner_iterations)):
        cum += inner
        rows.append(f"{m},{_fmt(res)},{_fmt(bound)},{inner},{cum}")
    Path(path).write_text("\n".join(rows) + "\n")


def _inner_config(cfg, eps, factor):
    return InnerSolverConfig(cfg.inner, eps, cfg.max_inner, factor)


def _run_cell(sys, cfg, method, eps, factor, outdir):
    path = outdir / f"{cell_name(method, eps)}.csv"
    t0 = time.perf_counter()
    try:
        scfg = SolverConfig(method, _inner_config(cfg, eps, factor), cfg.eps_f, cfg.max_outer)
        _, trace = solve(sys, None, scfg)
        write_trace_csv(path, trace)
        return CellResult(method, eps, path, trace, None, time.perf_counter() - t0)
    except Exception as exc:  # recorded per cell, the sweep goes on
        return CellResult(method, eps, None, None, f"{type(exc).__name__}: {exc}",
                          time.perf_counter() - t0)


def write_summary(path, cells, with_timing=False):
    rows = [SUMMARY_HEADER]
    for c in cells:
        tr = c.trace
        if tr is None:
            vals = ["", "", "", "", "", ""]
        else:
            vals = [str(tr.iterations), str(sum(tr.inner_iterations)),
                    _fmt(tr.initial_res_norm), _fmt(tr.approx_res_norm[-1]),
                    _fmt(tr.verified_res_norm), _fmt(tr.verified_relative_res)]
        secs = _fmt(c.seconds) if with_timing else ""
        err = (c.error or "").replace(",", ";").replace("\n", " ")
        rows.append(",".join([c.method.value, _fmt(c.eps_cg), c.status, *vals, secs, err]))
    Path(path).write_text("\n".join(rows) + "\n")


def write_plot_script(path, cells, title="residual history"):
    """gnuplot script: approximate H^-1 residual (solid) and rho bound (dashed) per cell."""
    lines = [
        "# gnuplot script; run with: gnuplot -p plot.gp",
        "set datafile separator ','",
        "set logscale y",
        "set format y '10^{%L}'",
        "set xlabel 'outer iteration'",
        "set ylabel 'approximate H^{-1} residual norm'",
        f"set title '{title}'",
        "set key outside right",
    ]
    parts = []
    for i, c in enumerate(c for c in cells if c.csv_path is not None):
        name = c.csv_path.name
        label = f"{c.method.value} eps_cg={c.eps_cg:g}"
        parts.append(f"'{name}' using 1:2 with lines lt {i + 1} title '{label}'")
        parts.append(f"'{name}' using 1:3 with lines lt {i + 1} dt 2 notitle")
    if parts:
        lines.append("plot " + ", \\\n     ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n")


def run_experiment(cfg, threads=None, output=None, timing=False):
    """Run every (method, eps_cg) cell and write CSVs, ``summary.csv`` and ``plot.gp``.

    Output is byte-identical across reruns with the same config unless
    ``timing`` adds wall-clock seconds to the summary.
    """
    outdir = Path(output if output is not None else cfg.resolve(cfg.output))
    outdir.mkdir(parents=True, exist_ok=True)
    sys = build_system(cfg)
    factor = None
    if cfg.inner in (InnerKind.PCG, InnerKind.IC_APPLY):
        factor = ic_factor_shifted(sys.H, cfg.droptol)
    grid = [(m, e) for m in cfg.methods for e in cfg.eps_cg]
    nthreads = cfg.threads if threads is None else threads
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            cells = list(pool.map(lambda me: _run_cell(sys, cfg, *me, factor, outdir), grid))
    else:
        cells = [_run_cell(sys, cfg, m, e, factor, outdir) for m, e in grid]
    summary = outdir / "summary.csv"
    plot = outdir / "plot.gp"
    write_summary(summary, cells, timing)
    write_plot_script(plot, cells, title=cfg.problem.name)
    return ExperimentResult(cells, summary, plot)


def matrix_info(sys):
    """Basic statistics of a split system as an ordered dict of printable values."""
    H, S = sys.H.to_scipy(), sys.S.to_scipy()
    d = H.diagonal().real
    return {
        "n": sys.n,
        "mode": sys.mode.value,
        "nnz_H": H.nnz,
        "nnz_S": S.nnz,
        "sigma": sys.sigma,
        "diag_H_min": float(d.min()) if d.size else 0.0,
        "diag_H_max": float(d.max()) if d.size else 0.0,
        "max_abs_H": float(abs(H).max()) if H.nnz else 0.0,
        "max_abs_S": float(abs(S).max()) if S.nnz else 0.0,
        "rhs_norm": float(np.linalg.norm(sys.rhs)),
    }

"""FMR and FGAL plus the exact-solve and non-flexible reference methods.

All methods share one loop: a Lanczos process emits a column of the
tridiagonal T per step, a banded Givens QR folds it in, and the iterate
moves along direction vectors ``p_m = (z_m - r_{m-2,m} p_{m-2} -
r_{m-1,m} p_{m-1}) / r_{m,m}``. The minimal-residual iterate advances by
``tau_m p_m``; the Galerkin iterate is recovered from the previous
minimal-residual iterate using the diagonal entry of R before the last
rotation, so no basis is ever stored.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .bounds import fmr_aposteriori_bound
from .inner import InnerKind, InnerSolver, InnerSolverConfig
from .lanczos import (
    LanczosMode,
    left_lanczos_init,
    left_lanczos_step,
    lanczos_init,
    lanczos_step_exact,
    lanczos_step_flexible,
)

VERIFY_EPS_CG = 1e-12
GAL_SINGULAR_RTOL = 1e-12


class Method(Enum):
    FMR = "FMR"
    FGAL = "FGAL"
    LMR = "LMR"
    LGAL = "LGAL"
    NONFLEX_MR = "NonFlexMR"
    NONFLEX_GAL = "NonFlexGAL"

    @property
    def galerkin(self):
        return self in (Method.FGAL, Method.LGAL, Method.NONFLEX_GAL)

    @property
    def left(self):
        return self in (Method.LMR, Method.LGAL)


@dataclass(frozen=True)
class SolverConfig:
    method: Method = Method.FMR
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    eps_f: float = 1e-12
    max_outer: int = 2000
    sigma: Optional[float] = None  # overrides the system's shift when set

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0 < self.eps_f < 1:
            raise ValueError(f"eps_f must lie in (0, 1), got {self.eps_f}")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


@dataclass
class SolverTrace:
    """Per-iteration record; index 0 is the initial guess."""

    method: Method
    eps_cg: float
    approx_res_norm: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    rho_bound: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    measure_iterations: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    converged: bool = False
    happy_breakdown: bool = False
    verified_res_norm: Optional[float] = None

    @property
    def iterations(self):
        return len(self.approx_res_norm) - 1

    @property
    def initial_res_norm(self):
        return self.approx_res_norm[0]

    @property
    def cumulative_inner_iterations(self):
        return list(np.cumsum(self.inner_iterations))

    @property
    def mean_inner_iterations(self):
        return float(np.mean(self.inner_iterations)) if self.inner_iterations else 0.0

    @property
    def relative_res(self):
        r0 = self.initial_res_norm
        return [r / r0 for r in self.approx_res_norm] if r0 else list(self.approx_res_norm)

    @property
    def verified_relative_res(self):
        if self.verified_res_norm is None:
            return None
        r0 = self.initial_res_norm
        return self.verified_res_norm / r0 if r0 else self.verified_res_norm


class GivensQR:
    """Incremental QR of a tridiagonal ``T_{m+1,m}`` with rotations kept for two steps.

    Rotations act on row pairs as ``[[c, s], [-conj(s), c]]`` with real ``c``.
    ``rho`` is the modulus of the trailing transformed right-hand side, the
    least-squares minimum of ``||beta0 e1 - T_{m+1,m} zeta||``.
    """

    def __init__(self, beta0):
        self.rot = [(1.0, 0.0), (1.0, 0.0)]  # rotations m-2, m-1
        self.g = beta0
        self.rho = abs(beta0)
        self.m = 0

    @staticmethod
    def rotation(a, b):
        """Return ``(c, s, r)`` with ``[[c, s], [-conj(s), c]] @ [a, b] = [r, 0]``."""
        if b == 0:
            return 1.0, 0.0 * b, a
        if a == 0:
            return 0.0, np.conj(b) / abs(b), abs(b)
        rho = math.hypot(abs(a), abs(b))
        phase = a / abs(a)
        return abs(a) / rho, phase * np.conj(b) / rho, phase * rho

    def push(self, col):
        """Fold in one column; returns ``(r1, r2, r3, dbar, tau, g_before)``.

        ``r1, r2, r3`` are the R entries in rows m-2, m-1, m; ``dbar`` is the
        diagonal entry before the new rotation (the Galerkin pivot); ``tau`` the
        m-th transformed right-hand side entry.
        """
        (c2, s2), (c1, s1) = self.rot
        r1 = s2 * col.gamma
        t = c2 * col.gamma
        r2 = c1 * t + s1 * col.alpha
        dbar = -np.conj(s1) * t + c1 * col.alpha
        c, s, r3 = self.rotation(dbar, col.beta)
        g_before = self.g
        tau = c * g_before
        self.g = -np.conj(s) * g_before
        self.rho = abs(self.g)
        self.rot = [(c1, s1), (c, s)]
        self.m += 1
        return r1, r2, r3, dbar, tau, g_before


def _measure(sys, x, solver):
    r = sys.residual(x)
    rep = solver.solve(r)
    val = np.vdot(rep.solution, r)
    scale = np.linalg.norm(r) * np.linalg.norm(rep.solution)
    slack = 1e-14 * scale
    if val.real < -slack or (abs(val.imag) > abs(val.real) and abs(val.imag) > slack):
        raise ArithmeticError(f"r_hat^* r = {val} is not a positive real")
    return math.sqrt(max(val.real, 0.0)), rep.iterations


def residual_hnorm_approx(sys, x, inner):
    """``sqrt(r_hat^* r)`` with ``H r_hat ~ r`` from the given inner solver."""
    solver = inner if isinstance(inner, InnerSolver) else InnerSolver(sys.H, inner)
    return _measure(sys, np.asarray(x, dtype=sys.dtype), solver)[0]


def _bound_eps(cfg):
    if cfg.kind is InnerKind.DIRECT:
        return 0.0
    return cfg.eps_cg


def _verifier(solver):
    cfg = solver.cfg
    if cfg.kind is InnerKind.IC_APPLY:
        return InnerSolver(solver.H, InnerSolverConfig(InnerKind.PCG, VERIFY_EPS_CG,
                                                       cfg.max_iters, cfg.preconditioner))
    return solver.with_eps(min(cfg.eps_cg, VERIFY_EPS_CG) if cfg.kind is not InnerKind.DIRECT
                           else cfg.eps_cg)


def solve(sys, x0=None, cfg=None, callback: Optional[Callable] = None, verify=True):
    """Run ``cfg.method`` on ``sys`` from ``x0``; returns ``(x, trace)``.

    Convergence is declared once the approximate ``H^{-1}``-norm of the
    explicitly computed residual (measured with the configured inner solver)
    drops below ``eps_f`` times its initial value. ``callback(m, x, state,
    rho)`` is called after every iteration; ``state`` is the Lanczos state
    whose ``z_prev`` (``v_prev`` for left methods) produced the update.
    """
    cfg = cfg or SolverConfig()
    if cfg.sigma is not None and cfg.sigma != sys.sigma:
        from dataclasses import replace

        sys = replace(sys, sigma=cfg.sigma)
    method = cfg.method
    solver = InnerSolver(sys.H, cfg.inner)
    eps = _bound_eps(cfg.inner)
    x = sys.zeros() if x0 is None else np.array(x0, dtype=sys.dtype)

    trace = SolverTrace(method, cfg.inner.eps_cg)
    res0, it0 = _measure(sys, x, solver)
    r0 = sys.residual(x)
    if not np.any(r0):
        trace.approx_res_norm.append(0.0)
        trace.rho.append(0.0)
        trace.rho_bound.append(0.0)
        trace.inner_iterations.append(0)
        trace.measure_iterations.append(it0)
        trace.skipped.append(False)
        trace.converged = True
        trace.verified_res_norm = 0.0
        return x, trace

    if method.left:
        st = left_lanczos_init(sys, r0, solver)
        step = lambda s: left_lanczos_step(sys, s, solver)  # noqa: E731
    elif cfg.inner.kind is InnerKind.DIRECT and method in (Method.FMR, Method.FGAL):
        st = lanczos_init(sys, r0, solver)
        step = lambda s: lanczos_step_exact(sys, s, solver)  # noqa: E731
    else:
        mode = (LanczosMode.FLEXIBLE_NONFLEX_GAMMA
                if method in (Method.NONFLEX_MR, Method.NONFLEX_GAL) else LanczosMode.FLEXIBLE)
        st = lanczos_init(sys, r0, solver)
        step = lambda s: lanczos_step_flexible(sys, s, solver, mode)  # noqa: E731

    qr = GivensQR(st.beta0)
    trace.approx_res_norm.append(res0)
    trace.rho.append(st.beta0)
    trace.rho_bound.append(fmr_aposteriori_bound(st.beta0, 0, eps))
    trace.inner_iterations.append(st.inner_iterations)
    trace.measure_iterations.append(it0)
    trace.skipped.append(False)

    x_mr = x.copy()
    x_gal = x.copy()
    p1 = np.zeros_like(x)  # p_{m-1}
    p2 = np.zeros_like(x)  # p_{m-2}
    target = cfg.eps_f * res0

    for m in range(1, cfg.max_outer + 1):
        basis = st.v_curr if method.left else st.z_curr
        col, st = step(st)
        r1, r2, r3, dbar, tau, g_before = qr.push(col)
        if r3 == 0:
            break
        p = (basis - r1 * p2 - r2 * p1) / r3
        skipped = False
        if method.galerkin:
            col_norm = math.sqrt(abs(col.alpha) ** 2 + abs(col.gamma) ** 2 + col.beta ** 2)
            if abs(dbar) > GAL_SINGULAR_RTOL * col_norm:
                x_gal = x_mr + (g_before * r3 / dbar) * p
                rho = col.beta * abs(g_before / dbar)
            else:
                skipped = True
                rho = trace.rho[-1]
        else:
            rho = qr.rho
        x_mr = x_mr + tau * p
        p2, p1 = p1, p
        x = x_gal if method.galerkin else x_mr

        res, it = _measure(sys, x, solver)
        trace.approx_res_norm.append(res)
        trace.rho.append(rho)
        trace.rho_bound.append(fmr_aposteriori_bound(rho, m, eps))
        trace.inner_iterations.append(st.inner_iterations)
        trace.measure_iterations.append(it)
        trace.skipped.append(skipped)
        if callback is not None:
            callback(m, x, st, rho)
        if res <= target:
            trace.converged = True
            break
        if st.happy:
            trace.happy_breakdown = True
            break

    if verify:
        trace.verified_res_norm = residual_hnorm_approx(sys, x, _verifier(solver))
    return x, trace


def fmr_solve(sys, x0=None, cfg=None, **kwargs):
    """Flexible minimal residual (also NonFlexMR and LMR via ``cfg.method``)."""
    cfg = cfg or SolverConfig(Method.FMR)
    if cfg.method.galerkin:
        raise ValueError(f"fmr_solve does not run Galerkin method {cfg.method.value}")
    return solve(sys, x0, cfg, **kwargs)


def fgal_solve(sys, x0=None, cfg=None, **kwargs):
    """Flexible Galerkin (also NonFlexGAL and LGAL via ``cfg.method``)."""
    cfg = cfg or SolverConfig(Method.FGAL)
    if not cfg.method.galerkin:
        raise ValueError(f"fgal_solve does not run minimal residual method {cfg.method.value}")
    return solve(sys, x0, cfg, **kwargs)

"""Short-recurrence Lanczos processes for ``sigma H + S`` preconditioned by H.

Three processes share one state layout and produce one column of the
tridiagonal ``T_{m+1,m}`` per step:

* the exact right-preconditioned process in the ``H^{-1}`` inner product,
  which carries ``v_tilde = H^{-1} v`` and never multiplies by H;
* the flexible process, where ``z_k`` only approximates ``H^{-1} v_k`` and
  the superdiagonal entry ``gamma_k`` is computed rather than assumed;
* the left-preconditioned process on ``sigma I + H^{-1} S`` in the H inner
  product, used for the reference methods.

The flexible relation ``A Z_m = V_{m+1} T_{m+1,m}`` holds to rounding for
any inner accuracy since each column is built from it.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .inner import InnerSolver, InnerSolverConfig, InnerKind
from .sparse import spmv

HAPPY_BREAKDOWN_RTOL = 1e-14
IMAG_RESIDUE_RTOL = 1e-12


class LanczosMode(Enum):
    EXACT_B_FORM = "exact_b_form"
    EXACT_S_FORM = "exact_s_form"
    FLEXIBLE = "flexible"
    FLEXIBLE_NONFLEX_GAMMA = "flexible_nonflex_gamma"


class InnerContractError(ArithmeticError):
    """The approximate solve returned ``w_hat`` with ``<w, w_hat> <= 0``."""


class AlreadyConverged(Exception):
    """The start vector is zero."""


@dataclass(frozen=True)
class TriColumn:
    """Column k of T: ``gamma`` above the diagonal, ``alpha`` on it, ``beta`` below."""

    alpha: complex
    gamma: complex
    beta: float


@dataclass(frozen=True)
class LanczosState:
    v_prev: np.ndarray
    v_curr: np.ndarray
    z_prev: np.ndarray  # unused by the exact process
    z_curr: np.ndarray  # z_k, v_tilde_k, or H v_k for the left process
    beta_prev: float
    k: int
    beta0: float
    inner_iterations: int = 0
    happy: bool = False


def _as_solver(sys, inner):
    if isinstance(inner, InnerSolver):
        return inner
    if inner is None:
        inner = InnerSolverConfig(InnerKind.DIRECT, 1.0)
    return InnerSolver(sys.H, inner)


def positive_inner(w, w_hat):
    """``<w, w_hat>`` as a positive real; raise if the inner solve broke the contract.

    Imaginary residue is discarded. For Hermitian H it vanishes in exact
    arithmetic, but complex CG run past its loss of orthogonality leaves
    rounding residue well above ``IMAG_RESIDUE_RTOL``; only a residue at
    least as large as the real part is treated as a violation.
    """
    val = complex(np.vdot(w_hat, w))
    if not val.real > 0:
        raise InnerContractError(f"<w, w_hat> = {val.real} is not positive")
    scale = float(np.linalg.norm(w) * np.linalg.norm(w_hat))
    if abs(val.imag) > IMAG_RESIDUE_RTOL * scale and abs(val.imag) >= val.real:
        raise InnerContractError(f"<w, w_hat> = {val} is dominated by its imaginary part")
    return val.real


def _shifted_symmetry_sign(sys):
    # +1 for the H^{-1}-selfadjoint B-form, -1 for the anti-selfadjoint S-form
    return 1.0 if sys.is_b_form else -1.0


def lanczos_init(sys, w, inner):
    """Normalise the start vector: ``beta0 = <w, w_hat>^{1/2}``, ``v1 = w/beta0``, ``z1 = w_hat/beta0``."""
    solver = _as_solver(sys, inner)
    w = np.asarray(w, dtype=sys.dtype)
    if not np.any(w):
        raise AlreadyConverged("start vector is zero")
    rep = solver.solve(w)
    beta0 = np.sqrt(positive_inner(w, rep.solution))
    zeros = np.zeros_like(w)
    return LanczosState(
        v_prev=zeros,
        v_curr=w / beta0,
        z_prev=zeros,
        z_curr=rep.solution.astype(w.dtype, copy=False) / beta0,
        beta_prev=0.0,
        k=1,
        beta0=float(beta0),
        inner_iterations=rep.iterations,
    )


def _advance(st, w, w_hat, beta, iterations, keep_z_prev=True):
    k = st.k
    if beta <= HAPPY_BREAKDOWN_RTOL * st.beta0:
        return LanczosState(st.v_curr, np.zeros_like(w), st.z_curr, np.zeros_like(w),
                            beta, k + 1, st.beta0, iterations, happy=True)
    return LanczosState(
        v_prev=st.v_curr,
        v_curr=w / beta,
        z_prev=st.z_curr if keep_z_prev else st.z_prev,
        z_curr=w_hat / beta,
        beta_prev=beta,
        k=k + 1,
        beta0=st.beta0,
        inner_iterations=iterations,
    )


def lanczos_step_exact(sys, st, inner=None):
    """One step of the exact process; ``inner`` must solve with H exactly.

    ``inner=None`` builds a sparse direct solver, which is wasteful inside a
    loop; pass an :class:`InnerSolver` of kind ``DIRECT`` instead.
    """
    solver = _as_solver(sys, inner)
    w = sys.shift * st.v_curr + sys.apply_coupling(st.z_curr)
    alpha = np.vdot(st.z_curr, w)
    gamma = _shifted_symmetry_sign(sys) * st.beta_prev if st.k > 1 else 0.0
    w = w - alpha * st.v_curr - gamma * st.v_prev
    rep = solver.solve(w)
    w_tilde = rep.solution.astype(w.dtype, copy=False)
    beta = np.sqrt(positive_inner(w, w_tilde)) if np.any(w) else 0.0
    col = TriColumn(_scalar(alpha, sys), _scalar(gamma, sys), float(beta))
    return col, _advance(st, w, w_tilde, beta, rep.iterations)


def lanczos_step_flexible(sys, st, inner, mode=LanczosMode.FLEXIBLE):
    """One step of the flexible process with ``w = A z_k`` and computed ``gamma_k``.

    ``FLEXIBLE_NONFLEX_GAMMA`` substitutes ``gamma_k = +-beta_{k-1}`` (the exact
    process value) to show what flexibility buys.
    """
    solver = _as_solver(sys, inner)
    mode = LanczosMode(mode)
    w = sys.apply(st.z_curr)
    alpha = np.vdot(st.z_curr, w)
    if st.k == 1:
        gamma = 0.0
    elif mode is LanczosMode.FLEXIBLE_NONFLEX_GAMMA:
        gamma = _shifted_symmetry_sign(sys) * st.beta_prev
    else:
        gamma = np.vdot(st.z_prev, w)
    w = w - alpha * st.v_curr - gamma * st.v_prev
    rep = solver.solve(w)
    w_hat = rep.solution.astype(w.dtype, copy=False)
    beta = np.sqrt(positive_inner(w, w_hat)) if np.any(w) else 0.0
    col = TriColumn(_scalar(alpha, sys), _scalar(gamma, sys), float(beta))
    return col, _advance(st, w, w_hat, beta, rep.iterations)


def left_lanczos_init(sys, r0, inner):
    """Start the H-inner-product process on ``H^{-1} r0``; ``z_curr`` holds ``H v``."""
    solver = _as_solver(sys, inner)
    r0 = np.asarray(r0, dtype=sys.dtype)
    if not np.any(r0):
        raise AlreadyConverged("start vector is zero")
    rep = solver.solve(r0)
    v = rep.solution.astype(r0.dtype, copy=False)
    Hv = spmv(sys.H, v)
    beta0 = np.sqrt(positive_inner(Hv, v))
    zeros = np.zeros_like(r0)
    return LanczosState(zeros, v / beta0, zeros, Hv / beta0, 0.0, 1, float(beta0),
                        rep.iterations)


def left_lanczos_step(sys, st, inner):
    """Three-term step for ``sigma I + H^{-1} S`` (or ``i sigma I + H^{-1} B``) in the H inner product."""
    solver = _as_solver(sys, inner)
    rep = solver.solve(sys.apply_coupling(st.v_curr))
    w = sys.shift * st.v_curr + rep.solution.astype(st.v_curr.dtype, copy=False)
    alpha = np.vdot(st.z_curr, w)
    gamma = _shifted_symmetry_sign(sys) * st.beta_prev if st.k > 1 else 0.0
    w = w - alpha * st.v_curr - gamma * st.v_prev
    Hw = spmv(sys.H, w)
    beta = np.sqrt(positive_inner(Hw, w)) if np.any(w) else 0.0
    col = TriColumn(_scalar(alpha, sys), _scalar(gamma, sys), float(beta))
    return col, _advance(st, w, Hw, beta, rep.iterations)


def _scalar(val, sys):
    val = complex(val)
    if not sys.is_b_form:
        return val.real
    return val


def tridiagonal(columns, square=False):
    """Assemble ``T_{m+1,m}`` (or ``T_m`` with ``square=True``) from step columns."""
    m = len(columns)
    dtype = complex if any(isinstance(c.alpha, complex) for c in columns) else float
    T = np.zeros((m + 1, m), dtype=dtype)
    for k, c in enumerate(columns):
        T[k, k] = c.alpha
        T[k + 1, k] = c.beta
        if k:
            T[k - 1, k] = c.gamma
    return T[:m] if square else T


def run_lanczos(sys, w, m, inner=None, mode=LanczosMode.FLEXIBLE):
    """Run ``m`` steps storing every basis vector; for tests and small diagnostics.

    Returns ``(V, Z, T)`` with ``V`` of shape ``(n, m+1)``, ``Z`` ``(n, m)`` and
    ``T`` ``(m+1, m)``. Stops early on happy breakdown.
    """
    mode = LanczosMode(mode)
    if mode in (LanczosMode.EXACT_B_FORM, LanczosMode.EXACT_S_FORM):
        expected = LanczosMode.EXACT_B_FORM if sys.is_b_form else LanczosMode.EXACT_S_FORM
        if mode is not expected:
            raise ValueError(f"mode {mode.value} does not match the system form")
    solver = _as_solver(sys, inner)
    st = lanczos_init(sys, w, solver)
    V, Z, cols = [st.v_curr], [], []
    for _ in range(m):
        Z.append(st.z_curr)
        if mode in (LanczosMode.EXACT_B_FORM, LanczosMode.EXACT_S_FORM):
            col, st = lanczos_step_exact(sys, st, solver)
        else:
            col, st = lanczos_step_flexible(sys, st, solver, mode)
        cols.append(col)
        V.append(st.v_curr)
        if st.happy:
            break
    return np.column_stack(V), np.column_stack(Z), tridiagonal(cols)

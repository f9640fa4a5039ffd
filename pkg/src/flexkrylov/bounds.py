"""A-priori convergence bounds for the exact-solve methods and the FMR a-posteriori bound."""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class SpectralInterval:
    """``spec(H^{-1} S)`` is contained in ``i [alpha, beta]``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha < self.beta:
            raise ValueError(f"need alpha < beta, got [{self.alpha}, {self.beta}]")

    @property
    def lam(self):
        """Radius of the smallest symmetric interval ``i[-lam, lam]`` containing this one."""
        return max(self.beta, -self.alpha, 0.0)


def _check_lambda(lam):
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")


def gal_error_bound(lam, m):
    """Factor ``2 q^{floor(m/2)}`` with ``q = (sqrt(1+lam^2)-1)/(sqrt(1+lam^2)+1)``.

    Multiplies ``||x_0 - x_*||_H`` for even m and ``||x_1 - x_*||_H`` for odd m.
    """
    _check_lambda(lam)
    s = math.sqrt(1.0 + lam * lam)
    return 2.0 * ((s - 1.0) / (s + 1.0)) ** (m // 2)


def mr_residual_bound_symmetric(lam, m):
    """``2 (lam / (sqrt(1+lam^2) + 1))^m`` for the left-preconditioned MR residual."""
    _check_lambda(lam)
    return 2.0 * (lam / (math.sqrt(1.0 + lam * lam) + 1.0)) ** m


def freund_R(alpha, beta):
    """The root ``R > 1`` of ``(R + 1/R)/2 = c`` with ``c = (sqrt(beta^2+1)+sqrt(alpha^2+1))/(beta-alpha)``."""
    if not alpha < beta:
        raise ValueError(f"need alpha < beta, got [{alpha}, {beta}]")
    c = (math.sqrt(beta * beta + 1.0) + math.sqrt(alpha * alpha + 1.0)) / (beta - alpha)
    return c + math.sqrt(c * c - 1.0)


def mr_residual_bound_freund(iv, m):
    """``2 / (R^m + R^{-m})``; never worse than the symmetric bound for the enclosing lam."""
    if not isinstance(iv, SpectralInterval):
        iv = SpectralInterval(*iv)
    R = freund_R(iv.alpha, iv.beta)
    # 2/(R^m + R^-m) = 2 R^-m / (1 + R^-2m), safe for large m
    inv = R ** (-m)
    return 2.0 * inv / (1.0 + inv * inv)


def fmr_aposteriori_bound(rho_m, m, eps):
    """``sqrt((m+1)/(1-eps)) * rho_m``: an upper bound on ``||b - A x_m||_{H^{-1}}``
    when every inner solve is accurate to relative H-norm error ``eps``."""
    if not 0 <= eps < 1:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    if rho_m < 0:
        raise ValueError("rho_m must be non-negative")
    return math.sqrt((m + 1) / (1.0 - eps)) * rho_m


class LambdaEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def estimate_lambda(sys, iters=200, rtol=1e-8, seed=0):
    """Estimate ``max |mu|`` over the purely imaginary ``spec(H^{-1} S) = i mu``.

    Power iteration on ``M = H^{-1} S`` measured in the H-norm, in which M is
    normal, so ``||M x||_H / ||x||_H`` increases towards the spectral radius.
    H is inverted by CG at relative tolerance 1e-12. An estimate, not a
    certified enclosure.
    """
    from .inner import InnerKind, InnerSolver, InnerSolverConfig
    from .sparse import spmv

    if sys.S.nnz == 0 or not np.any(sys.S.values):
        return LambdaEstimate(0.0, True, 0)
    solver = InnerSolver(sys.H, InnerSolverConfig(InnerKind.CG, 1e-12))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(sys.n)
    if not sys.S.is_real or not sys.H.is_real:
        x = x + 1j * rng.standard_normal(sys.n)

    def hnorm(v):
        return math.sqrt(max(np.vdot(v, spmv(sys.H, v)).real, 0.0))

    x = x / hnorm(x)
    est = 0.0
    for it in range(1, iters + 1):
        y = solver.solve(spmv(sys.S, x)).solution
        ny = hnorm(y)
        if ny == 0.0:
            return LambdaEstimate(0.0, True, it)
        new = ny
        x = y / ny
        if abs(new - est) <= rtol * new:
            return LambdaEstimate(new, True, it)
        est = new
    return LambdaEstimate(est, False, iters)

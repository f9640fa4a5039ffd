"""Approximate application of H^{-1}.

All solver kinds here return ``w_hat`` with ``<w, w_hat> > 0`` for ``w != 0``:
CG and PCG because they start from the zero vector, the incomplete-Cholesky
application because ``(L L^*)^{-1}`` is Hermitian positive definite. The
flexible Lanczos process depends on this to avoid unlucky breakdowns.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .sparse import SparseMatrix, as_sparse, as_vector, spmv


class InnerKind(Enum):
    CG = "cg"
    PCG = "pcg"
    IC_APPLY = "ic"
    DIRECT = "direct"


class IndefiniteError(ArithmeticError):
    """CG met non-positive curvature ``p^* H p <= 0``."""


class PivotBreakdown(ArithmeticError):
    """Incomplete Cholesky hit a non-positive pivot."""

    def __init__(self, row):
        super().__init__(f"non-positive pivot in incomplete Cholesky at row {row}")
        self.row = row


@dataclass(frozen=True)
class ICFactor:
    """``H ~ L L^*`` with ``L`` sparse lower triangular, positive real diagonal."""

    L: SparseMatrix
    droptol: float = 0.0

    def __post_init__(self):
        L = as_sparse(self.L)
        object.__setattr__(self, "L", L)
        mat = L.to_scipy()
        if sp.triu(mat, k=1).nnz:
            raise ValueError("ICFactor.L must be lower triangular")
        diag = mat.diagonal()
        if np.any(np.abs(np.imag(diag)) > 0) or np.any(np.real(diag) <= 0):
            raise ValueError("ICFactor.L needs a real positive diagonal")
        Lh = L.conj_transpose()
        object.__setattr__(self, "_lower", (L.row_offsets, L.col_indices, L.values))
        object.__setattr__(self, "_upper", (Lh.row_offsets, Lh.col_indices, Lh.values))

    @property
    def n(self):
        return self.L.n_rows


@dataclass(frozen=True)
class InnerSolverConfig:
    kind: InnerKind = InnerKind.CG
    eps_cg: float = 1e-1
    max_iters: Optional[int] = None  # None -> 10 n
    preconditioner: Optional[ICFactor] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", InnerKind(self.kind))
        if not 0 < self.eps_cg <= 1:
            raise ValueError(f"eps_cg must lie in (0, 1], got {self.eps_cg}")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.kind in (InnerKind.PCG, InnerKind.IC_APPLY) and self.preconditioner is None:
            raise ValueError(f"inner solver kind {self.kind.value!r} needs an ICFactor")

    def with_eps(self, eps_cg):
        return InnerSolverConfig(self.kind, eps_cg, self.max_iters, self.preconditioner)


@dataclass
class InnerSolveReport:
    solution: np.ndarray
    achieved_rel_residual: float
    iterations: int
    status: int = kernels.CG_OK


def _max_iters(cfg, n):
    return cfg.max_iters if cfg.max_iters is not None else 10 * n


def _finish(x, it, rel, status):
    if status == kernels.CG_INDEFINITE:
        raise IndefiniteError(
            f"non-positive curvature after {it} CG iterations: H is not positive definite"
        )
    return InnerSolveReport(x, rel, it, status)


def cg_solve(H, w, cfg):
    """Plain CG for ``H w_hat = w`` from zero to relative l2 residual ``cfg.eps_cg``."""
    H = as_sparse(H)
    w = as_vector(w, H.n_rows)
    x, it, rel, status = kernels.cg(H.row_offsets, H.col_indices, H.values, w,
                                    cfg.eps_cg, _max_iters(cfg, H.n_rows))
    return _finish(x, it, rel, status)


def pcg_solve(H, w, cfg):
    """CG preconditioned by ``(L L^*)^{-1}`` from ``cfg.preconditioner``."""
    if cfg.preconditioner is None:
        raise ValueError("pcg_solve needs cfg.preconditioner")
    H = as_sparse(H)
    w = as_vector(w, H.n_rows)
    F = cfg.preconditioner
    x, it, rel, status = kernels.pcg_ic(H.row_offsets, H.col_indices, H.values,
                                        F._lower, F._upper, w, cfg.eps_cg,
                                        _max_iters(cfg, H.n_rows))
    return _finish(x, it, rel, status)


def _column_norms(mat):
    sq = mat.multiply(mat.conj()).real
    return np.sqrt(np.asarray(sq.sum(axis=0)).ravel())


def ic_factor(H, droptol=0.0):
    """Incomplete Cholesky ``H ~ L L^*``.

    ``droptol == 0`` gives IC(0) on the lower pattern of H. For
    ``droptol > 0`` an entry of column j of L is dropped when its modulus is
    below ``droptol * ||H[:, j]||_2``. Raises :class:`PivotBreakdown` with the
    failing row on a non-positive pivot.
    """
    if droptol < 0:
        raise ValueError("droptol must be non-negative")
    H = as_sparse(H)
    mat = H.to_scipy()
    low = sp.tril(mat).tocsc()
    low.sort_indices()
    lptr, lidx, lval, failed = kernels.ic_factor_csc(
        low.indptr, low.indices, low.data, _column_norms(mat), droptol
    )
    if failed >= 0:
        raise PivotBreakdown(failed)
    L = sp.csc_matrix((lval, lidx, lptr), shape=mat.shape).tocsr()
    return ICFactor(SparseMatrix.from_scipy(L), droptol)


def ic_factor_shifted(H, droptol=0.0, shift=1e-3, retries=3):
    """IC with diagonal-shift retries ``H + shift * diag(H)``, doubling the shift."""
    try:
        return ic_factor(H, droptol)
    except PivotBreakdown as err:
        last = err
    H = as_sparse(H)
    mat = H.to_scipy()
    D = sp.diags(mat.diagonal())
    for _ in range(retries):
        try:
            return ic_factor(mat + shift * D, droptol)
        except PivotBreakdown as err:
            last = err
            shift *= 2
    raise last


def ic_apply(F, w):
    """Return ``L^{-*} (L^{-1} w)``."""
    w = as_vector(w, F.n)
    return kernels.ic_solve(F._lower, F._upper, w)


class InnerSolver:
    """An approximate ``H^{-1}`` bound to one matrix and configuration."""

    def __init__(self, H, cfg):
        self.H = as_sparse(H)
        self.cfg = cfg
        self._lu = None
        if cfg.kind is InnerKind.DIRECT:
            self._lu = splu(self.H.to_scipy().tocsc())

    def solve(self, w):
        cfg = self.cfg
        if cfg.kind is InnerKind.CG:
            return cg_solve(self.H, w, cfg)
        if cfg.kind is InnerKind.PCG:
            return pcg_solve(self.H, w, cfg)
        w = as_vector(w, self.H.n_rows)
        if cfg.kind is InnerKind.IC_APPLY:
            x = ic_apply(cfg.preconditioner, w)
            it = 1
        else:
            if np.iscomplexobj(w) and self.H.is_real:
                x = self._lu.solve(w.real) + 1j * self._lu.solve(w.imag)
            else:
                x = self._lu.solve(w.astype(np.result_type(w, self.H.values)))
            it = 0
        wn = np.linalg.norm(w)
        rel = np.linalg.norm(w - spmv(self.H, x)) / wn if wn else 0.0
        return InnerSolveReport(x, float(rel), it)

    def __call__(self, w):
        return self.solve(w)

    def with_eps(self, eps_cg):
        """Same kind and preconditioner at another tolerance (reuses an LU)."""
        other = InnerSolver.__new__(InnerSolver)
        other.H = self.H
        other.cfg = self.cfg.with_eps(eps_cg)
        other._lu = self._lu
        return other

"""CSR matrices, the Hermitian/skew-Hermitian splitting and the split system."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from . import kernels

SYMMETRY_RTOL = 1e-13


class SparseMatrix:
    """Immutable CSR matrix with sorted, duplicate-free column indices.

    ``values`` is float64 for real matrices and complex128 otherwise; no
    complex storage is forced on real data.
    """

    __slots__ = ("n_rows", "n_cols", "row_offsets", "col_indices", "values", "_scipy")

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values, check=True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        values = np.asarray(values)
        if not np.iscomplexobj(values):
            values = values.astype(np.float64, copy=False)
        else:
            values = values.astype(np.complex128, copy=False)
        self.values = np.ascontiguousarray(values)
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.flags.writeable = False
        self._scipy = None
        if check:
            self._validate()

    def _validate(self):
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (self.n_rows + 1,) or ro[0] != 0:
            raise ValueError("row_offsets must have length n_rows + 1 and start at 0")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if ro[-1] != ci.shape[0] or ci.shape != self.values.shape:
            raise ValueError("last row offset must equal the number of stored values")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if ci.size > 1:
            step = np.diff(ci)
            row_start = np.zeros(ci.size, dtype=bool)
            row_start[ro[1:-1][ro[1:-1] < ci.size]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within each row")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix values must be finite")

    # -- construction -------------------------------------------------------

    @classmethod
    def from_scipy(cls, mat):
        csr = sp.csr_matrix(mat)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, arr):
        arr = np.asarray(arr)
        return cls.from_scipy(sp.csr_matrix(arr))

    @classmethod
    def identity(cls, n, dtype=np.float64):
        return cls.from_scipy(sp.identity(n, dtype=dtype, format="csr"))

    # -- views ---------------------------------------------------------------

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.values.shape[0])

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def is_real(self):
        return not np.iscomplexobj(self.values)

    def to_scipy(self):
        if self._scipy is None:
            self._scipy = sp.csr_matrix(
                (self.values, self.col_indices, self.row_offsets), shape=self.shape
            )
        return self._scipy

    def toarray(self):
        return self.to_scipy().toarray()

    def conj_transpose(self):
        return SparseMatrix.from_scipy(self.to_scipy().conj().T)

    def diagonal(self):
        return self.to_scipy().diagonal()

    def __matmul__(self, x):
        return spmv(self, x)

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz}, dtype={self.dtype})"


def as_sparse(mat):
    """Coerce a scipy sparse matrix, dense array or SparseMatrix."""
    if isinstance(mat, SparseMatrix):
        return mat
    if sp.issparse(mat):
        return SparseMatrix.from_scipy(mat)
    return SparseMatrix.from_dense(mat)


def as_vector(x, n=None):
    """Return ``x`` as a finite 1-D float64 or complex128 array."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("vectors must be one-dimensional")
    x = x.astype(np.complex128 if np.iscomplexobj(x) else np.float64, copy=False)
    if not np.all(np.isfinite(x)):
        raise ValueError("vector has non-finite entries")
    if n is not None and x.shape[0] != n:
        raise ValueError(f"vector length {x.shape[0]} does not match dimension {n}")
    return x


def spmv(M, x):
    """Exact CSR product ``M @ x``."""
    M = as_sparse(M)
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != M.n_cols:
        raise ValueError(f"dimension mismatch: matrix {M.shape} times vector {x.shape}")
    return kernels.csr_matvec(M.row_offsets, M.col_indices, M.values, x, M.n_cols)


def dot(x, y):
    """Standard inner product ``<x, y> = y^* x`` (conjugate on the second argument)."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return np.vdot(y, x)


def _symmetrized_pattern_sum(A, sign):
    # (A + sign * A^*) / 2 on the union pattern of A and A^T, zeros kept
    coo = A.tocoo()
    rows = np.concatenate([coo.row, coo.col])
    cols = np.concatenate([coo.col, coo.row])
    vals = np.concatenate([coo.data, sign * np.conj(coo.data)]) / 2
    out = sp.coo_matrix((vals, (rows, cols)), shape=A.shape).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return SparseMatrix(out.shape[0], out.shape[1], out.indptr, out.indices, out.data)


def split(A):
    """Return ``(H, S)`` with ``H = (A + A^*)/2`` and ``S = (A - A^*)/2``."""
    A = as_sparse(A)
    if A.n_rows != A.n_cols:
        raise ValueError(f"split needs a square matrix, got {A.shape}")
    mat = A.to_scipy()
    return _symmetrized_pattern_sum(mat, 1.0), _symmetrized_pattern_sum(mat, -1.0)


def _max_asymmetry(M, sign):
    mat = M.to_scipy()
    diff = abs(mat - sign * mat.conj().T)
    scale = abs(mat).max() if M.nnz else 0.0
    return (diff.max() if diff.nnz else 0.0), scale


def is_hermitian(M, rtol=SYMMETRY_RTOL):
    err, scale = _max_asymmetry(as_sparse(M), 1.0)
    return err <= rtol * scale


def is_skew_hermitian(M, rtol=SYMMETRY_RTOL):
    err, scale = _max_asymmetry(as_sparse(M), -1.0)
    return err <= rtol * scale


class Mode(Enum):
    REAL_S_FORM = "real_s_form"
    COMPLEX_B_FORM = "complex_b_form"


@dataclass(frozen=True, eq=False)
class SplitSystem:
    """The system ``(sigma H + S) x = b`` carried with its splitting.

    In ``COMPLEX_B_FORM`` the solvers work on the equivalent Hermitian-shifted
    form ``(i sigma H + B) x = i b`` with ``B = i S``; the solution is the same.
    """

    H: SparseMatrix
    S: SparseMatrix
    rhs: np.ndarray
    sigma: float = 1.0
    mode: Mode = Mode.REAL_S_FORM
    _B: SparseMatrix = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        H = as_sparse(self.H)
        S = as_sparse(self.S)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "S", S)
        if H.shape != S.shape or H.n_rows != H.n_cols:
            raise ValueError(f"H {H.shape} and S {S.shape} must be square and equal in size")
        object.__setattr__(self, "rhs", as_vector(self.rhs, H.n_rows))
        if not is_hermitian(H):
            raise ValueError("H is not Hermitian to relative tolerance 1e-13")
        if not is_skew_hermitian(S):
            raise ValueError("S is not skew-Hermitian to relative tolerance 1e-13")
        mode = Mode(self.mode)
        object.__setattr__(self, "mode", mode)
        if mode is Mode.REAL_S_FORM:
            if not (H.is_real and S.is_real and not np.iscomplexobj(self.rhs)):
                raise ValueError("REAL_S_FORM requires real H, S and right-hand side")
        else:
            B = SparseMatrix.from_scipy(1j * S.to_scipy())
            object.__setattr__(self, "_B", B)

    @classmethod
    def from_matrix(cls, A, rhs, sigma=1.0, mode=None):
        """Split ``A`` and build the system ``A x = rhs`` (``sigma = 1`` reproduces A)."""
        H, S = split(A)
        if mode is None:
            real = H.is_real and S.is_real and not np.iscomplexobj(rhs)
            mode = Mode.REAL_S_FORM if real else Mode.COMPLEX_B_FORM
        return cls(H, S, rhs, sigma, mode)

    @property
    def n(self):
        return self.H.n_rows

    @property
    def B(self):
        if self._B is None:
            return SparseMatrix.from_scipy(1j * self.S.to_scipy())
        return self._B

    @property
    def is_b_form(self):
        return self.mode is Mode.COMPLEX_B_FORM

    @property
    def dtype(self):
        return np.complex128 if self.is_b_form else np.float64

    @property
    def shift(self):
        """Scalar multiplying H in the working form: ``sigma`` or ``i sigma``."""
        return 1j * self.sigma if self.is_b_form else self.sigma

    @property
    def coupling(self):
        """The non-Hermitian-part matrix of the working form: S or B."""
        return self._B if self.is_b_form else self.S

    @property
    def form_rhs(self):
        return 1j * self.rhs if self.is_b_form else self.rhs

    def apply(self, x):
        """Working-form operator: ``(sigma H + S) x`` or ``(i sigma H + B) x``."""
        return self.shift * spmv(self.H, x) + spmv(self.coupling, x)

    def apply_coupling(self, x):
        return spmv(self.coupling, x)

    def residual(self, x):
        """Working-form residual (``i r`` in B-form, ``r`` in S-form)."""
        return self.form_rhs - self.apply(x)

    def matrix(self):
        """The original ``sigma H + S`` as a scipy CSR matrix."""
        return (self.sigma * self.H.to_scipy() + self.S.to_scipy()).tocsr()

    def zeros(self):
        return np.zeros(self.n, dtype=self.dtype)

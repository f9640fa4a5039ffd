"""Test problems: convection-diffusion, port-Hamiltonian midpoint systems, Matrix Market I/O."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import Mode, SparseMatrix, SplitSystem, as_sparse, is_hermitian, is_skew_hermitian


class MatrixMarketError(ValueError):
    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


def _laplacian_1d(n):
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n), format="csr")


def _central_difference_1d(n):
    return sp.diags([-1.0, 1.0], [-1, 1], shape=(n, n), format="csr")


def convection_diffusion(n_grid, a, seed=42):
    """``-Laplace(u) + a u_x`` on the unit square, central differences, Dirichlet BCs.

    Unknowns are ordered x-fastest on the ``n_grid x n_grid`` interior grid.
    H is the scaled 5-point Laplacian, S the (exactly skew) convection
    matrix; the right-hand side is uniform on [0, 1) from ``seed``.
    """
    if n_grid < 1:
        raise ValueError("n_grid must be at least 1")
    h = 1.0 / (n_grid + 1)
    I = sp.identity(n_grid, format="csr")
    T = _laplacian_1d(n_grid)
    lap = (sp.kron(I, T) + sp.kron(T, I)) / h**2
    conv = sp.kron(I, _central_difference_1d(n_grid)) * (a / (2.0 * h))
    rhs = np.random.default_rng(seed).random(n_grid * n_grid)
    return SplitSystem(SparseMatrix.from_scipy(lap), SparseMatrix.from_scipy(conv), rhs,
                       1.0, Mode.REAL_S_FORM)


@dataclass(frozen=True)
class PHDescriptor:
    """``E u' = (J - Rd) u + f`` with E Hermitian positive definite, J skew, Rd PSD."""

    E: SparseMatrix
    J: SparseMatrix
    Rd: SparseMatrix
    tau_half: float

    def __post_init__(self):
        for name in ("E", "J", "Rd"):
            object.__setattr__(self, name, as_sparse(getattr(self, name)))
        n = self.E.n_rows
        for name in ("E", "J", "Rd"):
            if getattr(self, name).shape != (n, n):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {(n, n)}")
        if self.tau_half <= 0:
            raise ValueError("tau_half must be positive")
        if not is_hermitian(self.E) or not is_hermitian(self.Rd):
            raise ValueError("E and Rd must be Hermitian")
        if not is_skew_hermitian(self.J):
            raise ValueError("J must be skew-Hermitian")
        rng = np.random.default_rng(0)
        X = rng.standard_normal((n, 4))
        E, R = self.E.to_scipy(), self.Rd.to_scipy()
        if np.any(np.einsum("ij,ij->j", X, (E @ X)).real <= 0):
            raise ValueError("E failed the positive-definiteness Rayleigh check")
        rq = np.einsum("ij,ij->j", X, (R @ X)).real
        if np.any(rq < -1e-12 * max(abs(R).max() if R.nnz else 0.0, 1.0) * n):
            raise ValueError("Rd failed the semidefiniteness Rayleigh check")

    @property
    def n(self):
        return self.E.n_rows


def ph_midpoint_system(d, rhs):
    """Implicit-midpoint matrix ``E + tau/2 (Rd - J)`` as ``H = E + tau/2 Rd``, ``S = -tau/2 J``."""
    rhs = np.asarray(rhs)
    if rhs.shape != (d.n,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected {(d.n,)}")
    H = d.E.to_scipy() + d.tau_half * d.Rd.to_scipy()
    S = -d.tau_half * d.J.to_scipy()
    real = d.E.is_real and d.J.is_real and d.Rd.is_real and not np.iscomplexobj(rhs)
    return SplitSystem(SparseMatrix.from_scipy(H), SparseMatrix.from_scipy(S), rhs, 1.0,
                       Mode.REAL_S_FORM if real else Mode.COMPLEX_B_FORM)


def spring_mass_chain(n_masses, stiffness=100.0, damping=1.0, tau_half=0.1):
    """Damped chain of unit masses in first-order port-Hamiltonian form.

    State ``u = (q, v)``. Each mass is tied to its neighbours and to the
    ground by springs of the given stiffness, so ``K = k (I + tridiag(-1, 2, -1))``.
    Then ``E = diag(K, I)``, ``J = [[0, K], [-K, 0]]``, ``Rd = diag(0, c I)``.
    A structural stand-in for benchmark spring-mass systems, not a copy.
    """
    if n_masses < 2:
        raise ValueError("n_masses must be at least 2")
    if stiffness <= 0:
        raise ValueError("stiffness must be positive")
    if damping < 0:
        raise ValueError("damping must be non-negative")
    n = n_masses
    K = stiffness * (sp.identity(n) + _laplacian_1d(n))
    Z = sp.csr_matrix((n, n))
    E = sp.block_diag([K, sp.identity(n)], format="csr")
    J = sp.bmat([[Z, K], [-K, Z]], format="csr")
    Rd = sp.block_diag([Z, damping * sp.identity(n)], format="csr")
    Rd.eliminate_zeros()
    return PHDescriptor(SparseMatrix.from_scipy(E), SparseMatrix.from_scipy(J),
                        SparseMatrix.from_scipy(Rd), tau_half)


def random_descriptor(n, tau_half=0.1, density=0.05, seed=0):
    """Random sparse descriptor for property checks: SPD E, skew J, diagonal PSD Rd."""
    rng = np.random.default_rng(seed)
    M = sp.random(n, n, density=density, random_state=rng, format="csr")
    E = M @ M.T + sp.identity(n)
    G = sp.random(n, n, density=density, random_state=rng, format="csr")
    J = G - G.T
    Rd = sp.diags(rng.random(n) * (rng.random(n) < 0.5))
    return PHDescriptor(SparseMatrix.from_scipy(E), SparseMatrix.from_scipy(J),
                        SparseMatrix.from_scipy(Rd), tau_half)


def symmetric_scale(d):
    """Scale with ``D = diag(E)^{-1/2}`` on both sides: ``E' = I``, ``J' = DJD``, ``Rd' = D Rd D``."""
    E = d.E.to_scipy()
    off = E - sp.diags(E.diagonal())
    off.eliminate_zeros()
    if off.nnz:
        raise ValueError("symmetric_scale needs a diagonal E")
    diag = E.diagonal()
    if np.any(np.real(diag) <= 0):
        raise ValueError("E has a non-positive diagonal entry")
    D = sp.diags(1.0 / np.sqrt(np.real(diag)))
    n = d.n
    return PHDescriptor(SparseMatrix.identity(n),
                        SparseMatrix.from_scipy(D @ d.J.to_scipy() @ D),
                        SparseMatrix.from_scipy(D @ d.Rd.to_scipy() @ D),
                        d.tau_half)


# --------------------------------------------------------------------------
# Matrix Market coordinate format

_FIELDS = ("real", "complex", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric", "hermitian")


def _parse_header(line):
    parts = line.strip().lower().split()
    if len(parts) != 5 or parts[0] != "%%matrixmarket" or parts[1] != "matrix":
        raise MatrixMarketError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", 1)
    fmt, fld, sym = parts[2:]
    if fmt == "array":
        raise MatrixMarketError("dense 'array' format is not supported", 1)
    if fmt != "coordinate":
        raise MatrixMarketError(f"unknown format {fmt!r}", 1)
    if fld not in _FIELDS:
        raise MatrixMarketError(f"unknown field {fld!r}", 1)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unknown symmetry {sym!r}", 1)
    return fld, sym


def load_matrix_market(path):
    """Read a coordinate Matrix Market file into full storage.

    Symmetric, skew-symmetric and Hermitian files are expanded. Errors carry
    the offending 1-based line number.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 1)
    fld, sym = _parse_header(lines[0])
    lineno = 1
    size = None
    rows, cols, vals = [], [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text or text.startswith("%"):
            continue
        tok = text.split()
        if size is None:
            try:
                size = tuple(int(t) for t in tok)
            except ValueError:
                raise MatrixMarketError("size line must hold three integers", lineno) from None
            if len(size) != 3 or min(size) < 0:
                raise MatrixMarketError("size line must hold three non-negative integers", lineno)
            continue
        want = {"pattern": 2, "complex": 4}.get(fld, 3)
        if len(tok) != want:
            raise MatrixMarketError(f"expected {want} fields, found {len(tok)}", lineno)
        try:
            i, j = int(tok[0]) - 1, int(tok[1]) - 1
            if fld == "pattern":
                v = 1.0
            elif fld == "complex":
                v = complex(float(tok[2]), float(tok[3]))
            else:
                v = float(tok[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry {text!r}", lineno) from None
        if not (0 <= i < size[0] and 0 <= j < size[1]):
            raise MatrixMarketError(f"index ({i + 1}, {j + 1}) outside {size[0]}x{size[1]}", lineno)
        if sym != "general" and i < j:
            raise MatrixMarketError("symmetric storage expects lower-triangle entries", lineno)
        rows.append(i)
        cols.append(j)
        vals.append(v)
    if size is None:
        raise MatrixMarketError("missing size line", lineno)
    if len(vals) != size[2]:
        raise MatrixMarketError(f"declared {size[2]} entries, found {len(vals)}", lineno)
    rows = np.array(rows, dtype=np.int64)
    cols = np.array(cols, dtype=np.int64)
    vals = np.array(vals, dtype=complex if fld == "complex" else float)
    if sym != "general":
        off = rows != cols
        mirror = {"symmetric": vals[off], "skew-symmetric": -vals[off],
                  "hermitian": np.conj(vals[off])}[sym]
        rows, cols, vals = (np.concatenate([rows, cols[off]]),
                            np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, mirror]))
    mat = sp.coo_matrix((vals, (rows, cols)), shape=size[:2]).tocsr()
    return SparseMatrix.from_scipy(mat)


def write_matrix_market(path, M, comment=None):
    """Write in general coordinate format with 17 significant digits."""
    M = as_sparse(M)
    coo = M.to_scipy().tocoo()
    fld = "real" if M.is_real else "complex"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {fld} general\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{M.n_rows} {M.n_cols} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            if fld == "real":
                fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
            else:
                fh.write(f"{i + 1} {j + 1} {v.real:.17g} {v.imag:.17g}\n")


def load_vector(path):
    """Read a right-hand side: Matrix Market ``n x 1`` coordinate file or plain whitespace text."""
    with open(path) as fh:
        first = fh.readline()
    if first.lower().startswith("%%matrixmarket"):
        M = load_matrix_market(path)
        if M.n_cols != 1:
            raise MatrixMarketError(f"right-hand side must be a single column, got {M.shape}")
        return M.toarray().ravel()
    with open(path) as fh:
        return np.array(fh.read().split(), dtype=float)

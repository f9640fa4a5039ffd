"""Hot numeric kernels on raw CSR/CSC arrays.

Every public function dispatches on :func:`flexkrylov._accel.numba_enabled`:
the compiled loop when numba is on, a vectorised numpy/scipy path otherwise.
The incomplete Cholesky factorization has no vectorised form, so its
fallback runs the very same loop as plain Python.

Status codes returned by the CG kernels: 0 converged, 1 iteration limit,
2 non-positive curvature (operator not positive definite).
"""

import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from ._accel import numba_enabled, optional_njit

CG_OK = 0
CG_MAXITER = 1
CG_INDEFINITE = 2


def _u64(idx):
    # unsigned indices spare numba its negative-index wraparound branch
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    return idx.view(np.uint64)


# --------------------------------------------------------------------------
# sparse matrix-vector product

@optional_njit(cache=True, nogil=True)
def _csr_matvec_nb(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    for i in range(n):
        acc = out.dtype.type(0)
        for q in range(indptr[i], indptr[i + 1]):
            acc += data[q] * x[indices[q]]
        out[i] = acc


def _result_dtype(data, x):
    return np.result_type(data.dtype, x.dtype, np.float64)


def csr_matvec(indptr, indices, data, x, n_cols=None):
    n_rows = indptr.shape[0] - 1
    dtype = _result_dtype(data, x)
    if numba_enabled():
        out = np.empty(n_rows, dtype=dtype)
        _csr_matvec_nb(_u64(indptr), _u64(indices), data.astype(dtype, copy=False),
                       x.astype(dtype, copy=False), out)
        return out
    n_cols = x.shape[0] if n_cols is None else n_cols
    mat = sp.csr_matrix((data, indices, indptr), shape=(n_rows, n_cols))
    return np.asarray(mat @ x, dtype=dtype)


# --------------------------------------------------------------------------
# triangular solves for L (CSR, diagonal last in each row) and L^* (CSR,
# diagonal first in each row)

@optional_njit(cache=True, nogil=True)
def _lower_solve_nb(indptr, indices, data, b, y):
    n = b.shape[0]
    for i in range(n):
        last = indptr[i + 1] - 1
        acc = b[i]
        for q in range(indptr[i], last):
            acc -= data[q] * y[indices[q]]
        y[i] = acc / data[last]


@optional_njit(cache=True, nogil=True)
def _upper_solve_nb(indptr, indices, data, b, y):
    n = b.shape[0]
    for i in range(n - 1, -1, -1):
        first = indptr[i]
        acc = b[i]
        for q in range(first + 1, indptr[i + 1]):
            acc -= data[q] * y[indices[q]]
        y[i] = acc / data[first]


def ic_solve(lower, upper, b):
    """Return ``L^{-*} L^{-1} b`` given CSR triples for ``L`` and ``L^*``."""
    dtype = np.result_type(lower[2].dtype, b.dtype, np.float64)
    b = b.astype(dtype, copy=False)
    if numba_enabled():
        y = np.empty_like(b)
        _lower_solve_nb(_u64(lower[0]), _u64(lower[1]), lower[2].astype(dtype, copy=False), b, y)
        x = np.empty_like(b)
        _upper_solve_nb(_u64(upper[0]), _u64(upper[1]), upper[2].astype(dtype, copy=False), y, x)
        return x
    n = b.shape[0]
    L = sp.csr_matrix((lower[2], lower[1], lower[0]), shape=(n, n))
    U = sp.csr_matrix((upper[2], upper[1], upper[0]), shape=(n, n))
    y = spsolve_triangular(L, b, lower=True)
    return np.asarray(spsolve_triangular(U, y, lower=False), dtype=dtype)


# --------------------------------------------------------------------------
# conjugate gradients, zero initial guess

@optional_njit(cache=True, nogil=True)
def _cg_nb(indptr, indices, data, b, tol, maxiter):
    n = b.shape[0]
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    q = np.empty_like(b)
    rr = 0.0
    for i in range(n):
        rr += (r[i] * np.conj(r[i])).real
    bnorm = math.sqrt(rr)
    if bnorm == 0.0:
        return x, 0, 0.0, 0
    target = tol * bnorm
    it = 0
    status = 1
    while it < maxiter:
        for i in range(n):
            acc = q.dtype.type(0)
            for k in range(indptr[i], indptr[i + 1]):
                acc += data[k] * p[indices[k]]
            q[i] = acc
        pq = 0.0
        for i in range(n):
            pq += (q[i] * np.conj(p[i])).real
        if not pq > 0.0:
            return x, it, math.sqrt(rr) / bnorm, 2
        a = rr / pq
        rr_new = 0.0
        for i in range(n):
            x[i] += a * p[i]
            r[i] -= a * q[i]
            rr_new += (r[i] * np.conj(r[i])).real
        it += 1
        if math.sqrt(rr_new) <= target:
            rr = rr_new
            status = 0
            break
        ratio = rr_new / rr
        for i in range(n):
            p[i] = r[i] + ratio * p[i]
        rr = rr_new
    return x, it, math.sqrt(rr) / bnorm, status


def _cg_numpy(indptr, indices, data, b, tol, maxiter):
    n = b.shape[0]
    H = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    x = np.zeros_like(b)
    r = b.copy()
    rr = np.vdot(r, r).real
    bnorm = math.sqrt(rr)
    if bnorm == 0.0:
        return x, 0, 0.0, CG_OK
    p = r.copy()
    target = tol * bnorm
    for it in range(1, maxiter + 1):
        q = H @ p
        pq = np.vdot(p, q).real
        if not pq > 0.0:
            return x, it - 1, math.sqrt(rr) / bnorm, CG_INDEFINITE
        a = rr / pq
        x += a * p
        r -= a * q
        rr_new = np.vdot(r, r).real
        if math.sqrt(rr_new) <= target:
            return x, it, math.sqrt(rr_new) / bnorm, CG_OK
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, maxiter, math.sqrt(rr) / bnorm, CG_MAXITER


def cg(indptr, indices, data, b, tol, maxiter):
    """CG on a Hermitian positive definite CSR matrix from ``x0 = 0``.

    Returns ``(x, iterations, relative_residual, status)``; the relative
    residual is the recursively updated l2 residual over ``||b||``.
    """
    dtype = np.result_type(data.dtype, b.dtype, np.float64)
    b = np.ascontiguousarray(b, dtype=dtype)
    data = data.astype(dtype, copy=False)
    if numba_enabled():
        x, it, rel, status = _cg_nb(_u64(indptr), _u64(indices), data, b, float(tol),
                                    int(maxiter))
        return x, int(it), float(rel), int(status)
    return _cg_numpy(indptr, indices, data, b, tol, maxiter)


@optional_njit(cache=True, nogil=True)
def _pcg_ic_nb(indptr, indices, data, lp, li, lv, up, ui, uv, b, tol, maxiter):
    n = b.shape[0]
    x = np.zeros_like(b)
    r = b.copy()
    y = np.empty_like(b)
    z = np.empty_like(b)
    q = np.empty_like(b)
    rr = 0.0
    for i in range(n):
        rr += (r[i] * np.conj(r[i])).real
    bnorm = math.sqrt(rr)
    if bnorm == 0.0:
        return x, 0, 0.0, 0
    target = tol * bnorm
    _lower_solve_nb(lp, li, lv, r, y)
    _upper_solve_nb(up, ui, uv, y, z)
    p = z.copy()
    rz = 0.0
    for i in range(n):
        rz += (z[i] * np.conj(r[i])).real
    it = 0
    status = 1
    while it < maxiter:
        for i in range(n):
            acc = q.dtype.type(0)
            for k in range(indptr[i], indptr[i + 1]):
                acc += data[k] * p[indices[k]]
            q[i] = acc
        pq = 0.0
        for i in range(n):
            pq += (q[i] * np.conj(p[i])).real
        if not pq > 0.0:
            return x, it, math.sqrt(rr) / bnorm, 2
        a = rz / pq
        for i in range(n):
            x[i] += a * p[i]
            r[i] -= a * q[i]
        it += 1
        # stop on the true residual b - H x, not the recursive one
        rr = 0.0
        for i in range(n):
            acc = b[i]
            for k in range(indptr[i], indptr[i + 1]):
                acc -= data[k] * x[indices[k]]
            rr += (acc * np.conj(acc)).real
        if math.sqrt(rr) <= target:
            status = 0
            break
        _lower_solve_nb(lp, li, lv, r, y)
        _upper_solve_nb(up, ui, uv, y, z)
        rz_new = 0.0
        for i in range(n):
            rz_new += (z[i] * np.conj(r[i])).real
        if rz_new == 0.0:
            # recursive residual underflowed while the true one stagnates
            break
        ratio = rz_new / rz
        for i in range(n):
            p[i] = z[i] + ratio * p[i]
        rz = rz_new
    return x, it, math.sqrt(rr) / bnorm, status


def _pcg_numpy(indptr, indices, data, lower, upper, b, tol, maxiter):
    n = b.shape[0]
    H = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    x = np.zeros_like(b)
    r = b.copy()
    rr = np.vdot(r, r).real
    bnorm = math.sqrt(rr)
    if bnorm == 0.0:
        return x, 0, 0.0, CG_OK
    target = tol * bnorm
    z = ic_solve(lower, upper, r)
    p = z.copy()
    rz = np.vdot(r, z).real
    for it in range(1, maxiter + 1):
        q = H @ p
        pq = np.vdot(p, q).real
        if not pq > 0.0:
            return x, it - 1, math.sqrt(rr) / bnorm, CG_INDEFINITE
        a = rz / pq
        x += a * p
        r -= a * q
        t = b - H @ x
        rr = np.vdot(t, t).real
        if math.sqrt(rr) <= target:
            return x, it, math.sqrt(rr) / bnorm, CG_OK
        z = ic_solve(lower, upper, r)
        rz_new = np.vdot(r, z).real
        if rz_new == 0.0:
            return x, it, math.sqrt(rr) / bnorm, CG_MAXITER
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, math.sqrt(rr) / bnorm, CG_MAXITER


def pcg_ic(indptr, indices, data, lower, upper, b, tol, maxiter):
    """CG preconditioned with ``(L L^*)^{-1}``; same return shape as :func:`cg`.

    Unlike :func:`cg`, the stopping test uses the true residual ``b - H x``,
    recomputed every iteration.
    """
    dtype = np.result_type(data.dtype, lower[2].dtype, b.dtype, np.float64)
    b = np.ascontiguousarray(b, dtype=dtype)
    data = data.astype(dtype, copy=False)
    lower = (lower[0], lower[1], lower[2].astype(dtype, copy=False))
    upper = (upper[0], upper[1], upper[2].astype(dtype, copy=False))
    if numba_enabled():
        x, it, rel, status = _pcg_ic_nb(_u64(indptr), _u64(indices), data,
                                        _u64(lower[0]), _u64(lower[1]), lower[2],
                                        _u64(upper[0]), _u64(upper[1]), upper[2],
                                        b, float(tol), int(maxiter))
        return x, int(it), float(rel), int(status)
    return _pcg_numpy(indptr, indices, data, lower, upper, b, tol, maxiter)


# --------------------------------------------------------------------------
# left-looking incomplete Cholesky on the CSC lower triangle of H

def _ic_left_looking(n, hptr, hidx, hval, colnorm, droptol, level0):
    # columns k whose next unused entry sits in row j form a linked list
    # head[j] -> link[k] -> ...; nextpos[k] points at that entry.
    cap = max(hptr[n], n)
    lptr = np.zeros(n + 1, dtype=np.int64)
    lidx = np.zeros(cap, dtype=np.int64)
    lval = np.zeros(cap, dtype=hval.dtype)
    head = np.full(n, -1, dtype=np.int64)
    link = np.full(n, -1, dtype=np.int64)
    nextpos = np.zeros(n, dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    work = np.zeros(n, dtype=hval.dtype)
    pat = np.zeros(n, dtype=np.int64)
    keep_idx = np.zeros(n, dtype=np.int64)
    keep_val = np.zeros(n, dtype=hval.dtype)
    cnt = 0
    for j in range(n):
        npat = 0
        for p in range(hptr[j], hptr[j + 1]):
            i = hidx[p]
            if mark[i] != j:
                mark[i] = j
                work[i] = 0
                pat[npat] = i
                npat += 1
            work[i] += hval[p]
        if mark[j] != j:
            mark[j] = j
            work[j] = 0
            pat[npat] = j
            npat += 1
        k = head[j]
        while k != -1:
            nxt = link[k]
            pos = nextpos[k]
            cl = np.conj(lval[pos])
            for q in range(pos, lptr[k + 1]):
                i = lidx[q]
                if mark[i] != j:
                    if level0:
                        continue
                    mark[i] = j
                    work[i] = 0
                    pat[npat] = i
                    npat += 1
                work[i] -= lval[q] * cl
            pos += 1
            nextpos[k] = pos
            if pos < lptr[k + 1]:
                r = lidx[pos]
                link[k] = head[r]
                head[r] = k
            k = nxt
        d = work[j].real
        if not d > 0.0 or not math.isfinite(d):
            return lptr, lidx[:cnt], lval[:cnt], j
        ljj = math.sqrt(d)
        nkeep = 0
        thresh = droptol * colnorm[j]
        for t in range(npat):
            i = pat[t]
            if i == j:
                continue
            val = work[i] / ljj
            if level0 or abs(val) >= thresh:
                keep_idx[nkeep] = i
                keep_val[nkeep] = val
                nkeep += 1
        if cnt + nkeep + 1 > lidx.shape[0]:
            newcap = max(2 * lidx.shape[0], cnt + nkeep + 1)
            grown_idx = np.zeros(newcap, dtype=np.int64)
            grown_val = np.zeros(newcap, dtype=lval.dtype)
            grown_idx[:cnt] = lidx[:cnt]
            grown_val[:cnt] = lval[:cnt]
            lidx = grown_idx
            lval = grown_val
        lptr[j] = cnt
        lidx[cnt] = j
        lval[cnt] = ljj
        cnt += 1
        order = np.argsort(keep_idx[:nkeep])
        for t in range(nkeep):
            lidx[cnt] = keep_idx[order[t]]
            lval[cnt] = keep_val[order[t]]
            cnt += 1
        lptr[j + 1] = cnt
        nextpos[j] = lptr[j] + 1
        if nkeep > 0:
            r = lidx[lptr[j] + 1]
            link[j] = head[r]
            head[r] = j
    return lptr, lidx[:cnt], lval[:cnt], -1


_ic_left_looking_nb = optional_njit(cache=True, nogil=True)(_ic_left_looking)


def ic_factor_csc(hptr, hidx, hval, colnorm, droptol):
    """Incomplete Cholesky of a Hermitian matrix given its lower triangle in CSC.

    ``droptol == 0`` keeps exactly the pattern of the input (IC(0));
    otherwise computed entries with ``|l_ij| < droptol * colnorm[j]`` are
    dropped. Returns ``(indptr, indices, data, failed_column)`` describing
    ``L`` in CSC with the diagonal first in each column; ``failed_column``
    is ``-1`` on success.
    """
    n = hptr.shape[0] - 1
    dtype = np.result_type(hval.dtype, np.float64)
    args = (n, hptr.astype(np.int64), hidx.astype(np.int64), hval.astype(dtype),
            colnorm.astype(np.float64), float(droptol), droptol == 0)
    if numba_enabled():
        lptr, lidx, lval, failed = _ic_left_looking_nb(*args)
    else:
        lptr, lidx, lval, failed = _ic_left_looking(*args)
    return lptr, lidx.copy(), lval.copy(), int(failed)

import numpy as np
import pytest
import scipy.sparse as sp

from flexkrylov import Mode, SplitSystem
from flexkrylov._accel import HAVE_NUMBA, set_numba

BACKENDS = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = set_numba(request.param == "numba")
    yield request.param
    set_numba(prev)


def random_spd(n, rng, cond=10.0, density=None, complex_=False):
    """Dense SPD (HPD) matrix with eigenvalues spread over [1, cond]."""
    X = rng.standard_normal((n, n))
    if complex_:
        X = X + 1j * rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(X)
    ev = np.geomspace(1.0, cond, n)
    H = (Q * ev) @ Q.conj().T
    return (H + H.conj().T) / 2


def random_skew(n, rng, scale=1.0, complex_=False):
    G = rng.standard_normal((n, n))
    if complex_:
        G = G + 1j * rng.standard_normal((n, n))
    return scale * (G - G.conj().T) / 2


def random_system(n, rng, cond=10.0, skew=1.0, complex_=False, sigma=1.0):
    H = random_spd(n, rng, cond, complex_=complex_)
    S = random_skew(n, rng, skew, complex_=complex_)
    b = rng.standard_normal(n)
    if complex_:
        b = b + 1j * rng.standard_normal(n)
    mode = Mode.COMPLEX_B_FORM if complex_ else Mode.REAL_S_FORM
    return SplitSystem(sp.csr_matrix(H), sp.csr_matrix(S), b, sigma, mode)


def laplacian_2d(m):
    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m))
    I = sp.identity(m)
    return (sp.kron(I, T) + sp.kron(T, I)).tocsr()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

ACCEPTANCE_LINES = []
_durations = {"quick": 0.0}


@pytest.fixture
def report():
    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_runtest_logreport(report):
    if "slow" not in report.keywords:
        _durations["quick"] += report.duration


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        tr.write_line(line)
    quick = _durations["quick"]
    verdict = "PASS" if quick < 120 else "FAIL"
    tr.write_line(f"criterion 9 (timing): {verdict}  non-slow tests took {quick:.1f} s "
                  f"in total (budget 120 s)")

import numpy as np
import pytest
import scipy.sparse as sp

from flexkrylov import (
    InnerKind,
    InnerSolverConfig,
    LanczosMode,
    Mode,
    SplitSystem,
    lanczos_init,
    lanczos_step_exact,
    lanczos_step_flexible,
)
from flexkrylov.lanczos import (
    AlreadyConverged,
    InnerContractError,
    positive_inner,
    run_lanczos,
    tridiagonal,
)

from conftest import random_system

DIRECT = InnerSolverConfig(InnerKind.DIRECT, 1.0)


def cg(eps):
    return InnerSolverConfig(InnerKind.CG, eps)


def dense(sys):
    return sys.H.toarray(), sys.coupling.toarray(), sys.shift


class TestInit:
    def test_identity(self):
        sys = SplitSystem(np.eye(3), np.zeros((3, 3)), np.ones(3))
        st = lanczos_init(sys, 2 * np.eye(3)[0], DIRECT)
        assert st.beta0 == pytest.approx(2.0)
        np.testing.assert_allclose(st.v_curr, [1, 0, 0])
        np.testing.assert_allclose(st.z_curr, [1, 0, 0])

    def test_diagonal(self):
        sys = SplitSystem(np.diag([4.0, 1.0]), np.zeros((2, 2)), np.ones(2))
        st = lanczos_init(sys, np.array([1.0, 0.0]), DIRECT)
        assert st.beta0 == pytest.approx(0.5)
        np.testing.assert_allclose(st.v_curr, [2.0, 0.0])
        np.testing.assert_allclose(st.z_curr, [0.5, 0.0])
        assert np.vdot(st.z_curr, st.v_curr) == pytest.approx(1.0)

    def test_normalisation_with_loose_inner(self, rng):
        sys = random_system(20, rng, cond=100.0)
        st = lanczos_init(sys, rng.standard_normal(20), cg(1e-1))
        assert np.vdot(st.z_curr, st.v_curr).real == pytest.approx(1.0, abs=1e-14)

    def test_zero_start(self, rng):
        sys = random_system(5, rng)
        with pytest.raises(AlreadyConverged):
            lanczos_init(sys, np.zeros(5), DIRECT)


class TestPositiveInner:
    def test_accepts(self):
        assert positive_inner(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == 3.0

    def test_rejects_negative(self):
        with pytest.raises(InnerContractError):
            positive_inner(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))

    def test_rejects_imaginary(self):
        with pytest.raises(InnerContractError):
            positive_inner(np.array([1.0, 1.0]) + 0j, np.array([1.0, 1j]))


class TestExact:
    def test_shifted_identity_b_form(self):
        sys = SplitSystem(np.eye(4), np.zeros((4, 4)), np.ones(4) + 0j, 1.0,
                          Mode.COMPLEX_B_FORM)
        st = lanczos_init(sys, sys.form_rhs, DIRECT)
        col, st = lanczos_step_exact(sys, st, DIRECT)
        assert col.alpha == pytest.approx(1j)
        assert col.beta == pytest.approx(0.0, abs=1e-15)
        assert st.happy

    @pytest.mark.parametrize("complex_", [True, False])
    def test_relation_and_orthogonality_4x4(self, rng, complex_):
        sys = random_system(4, rng, cond=5.0, skew=2.0, complex_=complex_, sigma=1.3)
        H, C, shift = dense(sys)
        Hinv = np.linalg.inv(H)
        w = sys.form_rhs
        mode = LanczosMode.EXACT_B_FORM if complex_ else LanczosMode.EXACT_S_FORM
        V, Z, T = run_lanczos(sys, w, 3, DIRECT, mode)
        m = T.shape[1]
        lhs = (shift * np.eye(4) + C @ Hinv) @ V[:, :m]
        rhs = V @ T
        assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(lhs).max())
        G = V[:, :m].conj().T @ Hinv @ V[:, :m]
        np.testing.assert_allclose(G, np.eye(m), atol=1e-12)
        np.testing.assert_allclose(Z, Hinv @ V[:, :m], atol=1e-12)

    def test_mode_must_match_form(self, rng):
        sys = random_system(4, rng)
        with pytest.raises(ValueError):
            run_lanczos(sys, sys.rhs, 2, DIRECT, LanczosMode.EXACT_B_FORM)

    def test_b_form_tridiagonal_structure(self, rng):
        sigma = 0.7
        sys = random_system(30, rng, cond=20.0, skew=3.0, complex_=True, sigma=sigma)
        _, _, T = run_lanczos(sys, sys.form_rhs, 12, DIRECT, LanczosMode.EXACT_B_FORM)
        Tm = T[:12, :12] - 1j * sigma * np.eye(12)
        assert np.abs(Tm.imag).max() <= 1e-10
        np.testing.assert_allclose(Tm, Tm.T, atol=1e-10)

    def test_s_form_tridiagonal_structure(self, rng):
        sys = random_system(30, rng, cond=20.0, skew=3.0)
        _, _, T = run_lanczos(sys, sys.rhs, 12, DIRECT, LanczosMode.EXACT_S_FORM)
        Tm = T[:12, :12] - np.eye(12)
        assert np.isrealobj(T)
        np.testing.assert_allclose(Tm, -Tm.T, atol=1e-10)
        np.testing.assert_allclose(np.diag(Tm), 0.0, atol=1e-10)

    @pytest.mark.parametrize("complex_", [True, False])
    @pytest.mark.parametrize("n,m", [(10, 10), (30, 20), (200, 30)])
    def test_orthogonality(self, rng, complex_, n, m):
        # holds until the first Ritz value converges; plain Lanczos in floating
        # point loses orthogonality after that, so m stays below that point
        sys = random_system(n, rng, cond=10.0, skew=1.0 / np.sqrt(n), complex_=complex_)
        Hinv = np.linalg.inv(sys.H.toarray())
        mode = LanczosMode.EXACT_B_FORM if complex_ else LanczosMode.EXACT_S_FORM
        V, _, T = run_lanczos(sys, sys.form_rhs, m, DIRECT, mode)
        k = T.shape[1]
        G = V[:, :k].conj().T @ Hinv @ V[:, :k]
        assert np.abs(G - np.eye(k)).max() <= 1e-8

    def test_state_normalisation(self, rng):
        sys = random_system(10, rng, complex_=True)
        st = lanczos_init(sys, sys.form_rhs, DIRECT)
        for _ in range(5):
            _, st = lanczos_step_exact(sys, st, DIRECT)
            assert np.vdot(st.z_curr, st.v_curr).real == pytest.approx(1.0, abs=1e-10)
            assert st.beta_prev > 0


class TestFlexible:
    @pytest.mark.parametrize("complex_", [True, False])
    def test_reduces_to_exact(self, rng, complex_):
        sys = random_system(12, rng, cond=10.0, complex_=complex_)
        w = sys.form_rhs
        mode = LanczosMode.EXACT_B_FORM if complex_ else LanczosMode.EXACT_S_FORM
        _, _, T_exact = run_lanczos(sys, w, 6, DIRECT, mode)
        _, _, T_flex = run_lanczos(sys, w, 6, cg(1e-14), LanczosMode.FLEXIBLE)
        np.testing.assert_allclose(T_flex, T_exact, atol=1e-10)
        sign = 1.0 if complex_ else -1.0
        for k in range(1, 6):
            assert T_flex[k - 1, k] == pytest.approx(sign * T_flex[k, k - 1], abs=1e-10)

    @pytest.mark.parametrize("complex_", [True, False])
    def test_flexible_relation(self, rng, complex_):
        sys = random_system(6, rng, cond=50.0, skew=2.0, complex_=complex_)
        H, C, shift = dense(sys)
        A = shift * H + C
        V, Z, T = run_lanczos(sys, sys.form_rhs, 5, cg(1e-1), LanczosMode.FLEXIBLE)
        m = T.shape[1]
        res = A @ Z[:, :m] - V @ T
        assert np.abs(res).max() <= 1e-12 * np.abs(A @ Z).max()

    def test_relation_independent_of_accuracy(self, rng):
        sys = random_system(40, rng, cond=1e3, skew=5.0)
        H, C, shift = dense(sys)
        A = shift * H + C
        for eps in (0.5, 1e-1, 1e-4):
            V, Z, T = run_lanczos(sys, sys.rhs, 25, cg(eps), LanczosMode.FLEXIBLE)
            res = A @ Z - V @ T
            assert np.abs(res).max() <= 1e-12 * np.abs(A @ Z).max()

    def test_nonflex_gamma_differs(self, rng):
        sys = random_system(6, rng, cond=1e4, skew=2.0)
        for eps in (1e-1, 1e-2):
            _, _, Tf = run_lanczos(sys, sys.rhs, 4, cg(eps), LanczosMode.FLEXIBLE)
            _, _, Tn = run_lanczos(sys, sys.rhs, 4, cg(eps), LanczosMode.FLEXIBLE_NONFLEX_GAMMA)
            gf = np.array([Tf[k - 1, k] for k in range(1, 4)])
            gn = np.array([Tn[k - 1, k] for k in range(1, 4)])
            assert not np.allclose(gf, gn, rtol=1e-8)
            # the ablation always puts -beta_{k-1} in S-form
            np.testing.assert_allclose(gn, -np.array([Tn[k, k - 1] for k in range(1, 4)]))

    @pytest.mark.parametrize("eps", [0.5, 1e-1, 1e-3])
    def test_column_norm_bounds(self, rng, eps):
        sys = random_system(25, rng, cond=200.0, skew=3.0, complex_=True)
        H = sys.H.toarray()
        Hinv = np.linalg.inv(H)
        V, Z, T = run_lanczos(sys, sys.form_rhs, 15, cg(eps), LanczosMode.FLEXIBLE)
        for k in range(T.shape[1]):
            v, z = V[:, k], Z[:, k]
            u = Hinv @ v
            err = z - u
            e_k = np.sqrt(np.vdot(err, H @ err).real / np.vdot(u, H @ u).real)
            nv = np.vdot(v, Hinv @ v).real
            assert 1 / (1 + e_k) - 1e-12 <= nv <= 1 / (1 - e_k) + 1e-12

    def test_five_vector_state(self, rng):
        sys = random_system(8, rng)
        st = lanczos_init(sys, sys.rhs, cg(1e-1))
        col, st2 = lanczos_step_flexible(sys, st, cg(1e-1))
        vecs = [f for f in ("v_prev", "v_curr", "z_prev", "z_curr")
                if isinstance(getattr(st2, f), np.ndarray)]
        assert len(vecs) == 4
        assert st2.k == 2 and col.beta == st2.beta_prev


def test_tridiagonal_assembly():
    from flexkrylov.lanczos import TriColumn

    cols = [TriColumn(1.0, 0.0, 2.0), TriColumn(3.0, 4.0, 5.0)]
    T = tridiagonal(cols)
    np.testing.assert_array_equal(T, [[1, 4], [2, 3], [0, 5]])
    assert tridiagonal(cols, square=True).shape == (2, 2)


def test_happy_breakdown_small_krylov_space(rng):
    # S has rank 2, so the Krylov space of sigma I + S H^{-1} on a generic
    # start vector has dimension 3
    n = 10
    H = np.eye(n)
    S = np.zeros((n, n))
    S[0, 1], S[1, 0] = 2.0, -2.0
    b = rng.standard_normal(n)
    sys = SplitSystem(sp.csr_matrix(H), sp.csr_matrix(S), b)
    V, Z, T = run_lanczos(sys, b, 8, DIRECT, LanczosMode.EXACT_S_FORM)
    assert T.shape[1] == 3

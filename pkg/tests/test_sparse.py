import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flexkrylov import Mode, SparseMatrix, SplitSystem, dot, split, spmv
from flexkrylov.sparse import as_vector, is_hermitian, is_skew_hermitian

from conftest import random_spd


class TestSparseMatrix:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            SparseMatrix(2, 2, [0, 2, 1], [0, 1, 0], [1.0, 2.0, 3.0])  # decreasing offsets
        with pytest.raises(ValueError):
            SparseMatrix(2, 2, [0, 2, 3], [1, 0, 0], [1.0, 2.0, 3.0])  # unsorted row
        with pytest.raises(ValueError):
            SparseMatrix(2, 2, [0, 2, 3], [0, 0, 1], [1.0, 2.0, 3.0])  # duplicate
        with pytest.raises(ValueError):
            SparseMatrix(2, 2, [0, 1, 2], [0, 2], [1.0, 2.0])  # column out of range
        with pytest.raises(ValueError):
            SparseMatrix(2, 2, [0, 1, 3], [0, 1], [1.0, 2.0])  # length mismatch
        with pytest.raises(ValueError):
            SparseMatrix(1, 1, [0, 1], [0], [np.nan])

    def test_empty_rows_allowed(self):
        M = SparseMatrix(3, 3, [0, 1, 1, 2], [0, 2], [1.0, 2.0])
        np.testing.assert_array_equal(M.toarray(), [[1, 0, 0], [0, 0, 0], [0, 0, 2]])

    def test_from_scipy_sums_duplicates(self):
        coo = sp.coo_matrix(([1.0, 2.0], ([0, 0], [1, 1])), shape=(2, 2))
        M = SparseMatrix.from_scipy(coo)
        assert M.nnz == 1 and M.values[0] == 3.0

    def test_immutable(self):
        M = SparseMatrix.identity(3)
        with pytest.raises(ValueError):
            M.values[0] = 2.0

    def test_real_storage_stays_real(self):
        assert SparseMatrix.identity(2).is_real
        assert not SparseMatrix.from_dense([[1j]]).is_real


class TestSpmv:
    def test_identity(self, backend):
        x = np.arange(5.0)
        np.testing.assert_array_equal(spmv(SparseMatrix.identity(5), x), x)

    def test_zero_matrix(self, backend):
        Z = SparseMatrix(4, 4, np.zeros(5, dtype=int), [], [])
        np.testing.assert_array_equal(spmv(Z, np.ones(4)), np.zeros(4))

    @pytest.mark.parametrize("complex_", [False, True])
    def test_random_dense_oracle(self, backend, rng, complex_):
        A = rng.standard_normal((10, 10)) * (rng.random((10, 10)) < 0.5)
        x = rng.standard_normal(10)
        if complex_:
            A = A + 1j * rng.standard_normal((10, 10)) * (A != 0)
            x = x + 1j * rng.standard_normal(10)
        y = spmv(SparseMatrix.from_dense(A), x)
        ref = A @ x
        assert np.linalg.norm(y - ref) <= 1e-14 * np.linalg.norm(ref)

    def test_real_matrix_complex_vector(self, backend, rng):
        A = rng.standard_normal((6, 6))
        x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        np.testing.assert_allclose(spmv(SparseMatrix.from_dense(A), x), A @ x, rtol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            spmv(SparseMatrix.identity(3), np.ones(4))

    def test_rectangular(self, backend, rng):
        A = rng.standard_normal((3, 5))
        x = rng.standard_normal(5)
        np.testing.assert_allclose(spmv(SparseMatrix.from_dense(A), x), A @ x, rtol=1e-14)


class TestDot:
    def test_unit(self):
        e = np.array([1.0, 0.0])
        assert dot(e, e) == 1

    def test_conjugates_second_argument(self):
        e = np.array([1.0, 0.0])
        assert dot(e, 1j * e) == -1j

    def test_random_oracle(self, rng):
        x = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        ref = sum(yi.conjugate() * xi for xi, yi in zip(x, y))
        assert abs(dot(x, y) - ref) <= 1e-15 * np.linalg.norm(x) * np.linalg.norm(y)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dot(np.ones(2), np.ones(3))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.complex128, 8, elements=st.complex_numbers(max_magnitude=1e3, allow_nan=False)),
           arrays(np.complex128, 8, elements=st.complex_numbers(max_magnitude=1e3, allow_nan=False)))
    def test_hermitian_symmetry(self, x, y):
        assert dot(x, y) == pytest.approx(np.conj(dot(y, x)), abs=1e-9)


class TestSplit:
    def test_two_by_two(self):
        H, S = split(SparseMatrix.from_dense([[2.0, 1.0], [-1.0, 2.0]]))
        np.testing.assert_array_equal(H.toarray(), [[2, 0], [0, 2]])
        np.testing.assert_array_equal(S.toarray(), [[0, 1], [-1, 0]])

    def test_hermitian_input(self, rng):
        A = random_spd(6, rng, complex_=True)
        H, S = split(sp.csr_matrix(A))
        np.testing.assert_allclose(H.toarray(), A, atol=1e-15)
        assert np.abs(S.toarray()).max() <= 1e-15

    def test_random_complex_oracle(self, rng):
        A = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        H, S = split(SparseMatrix.from_dense(A))
        np.testing.assert_allclose(H.toarray(), (A + A.conj().T) / 2, atol=1e-15, rtol=0)
        np.testing.assert_allclose(S.toarray(), (A - A.conj().T) / 2, atol=1e-15, rtol=0)
        np.testing.assert_allclose(H.toarray() + S.toarray(), A, atol=1e-15, rtol=0)

    def test_symmetrized_pattern(self):
        A = sp.csr_matrix(([1.0, 3.0], ([0, 0], [0, 2])), shape=(3, 3))
        H, S = split(A)
        pattern = {(i, j) for i in range(3) for j in range(3)
                   if (i, j) in {(0, 0), (0, 2), (2, 0)}}
        for M in (H, S):
            coo = M.to_scipy().tocoo()
            assert set(zip(coo.row.tolist(), coo.col.tolist())) == pattern

    def test_idempotent(self, rng):
        A = rng.standard_normal((7, 7)) + 1j * rng.standard_normal((7, 7))
        H, S = split(SparseMatrix.from_dense(A))
        H2, S2 = split(H.to_scipy() + S.to_scipy())
        np.testing.assert_allclose(H2.toarray(), H.toarray(), atol=1e-15, rtol=0)
        np.testing.assert_allclose(S2.toarray(), S.toarray(), atol=1e-15, rtol=0)

    def test_non_square(self):
        with pytest.raises(ValueError):
            split(SparseMatrix.from_dense(np.ones((2, 3))))

    def test_symmetry_checks(self, rng):
        A = random_spd(5, rng)
        assert is_hermitian(SparseMatrix.from_dense(A))
        A[0, 1] += 1e-6
        assert not is_hermitian(SparseMatrix.from_dense(A))
        assert is_skew_hermitian(SparseMatrix.from_dense([[0.0, 2.0], [-2.0, 0.0]]))


class TestSplitSystem:
    def test_rejects_non_hermitian_h(self):
        with pytest.raises(ValueError, match="Hermitian"):
            SplitSystem([[1.0, 1.0], [0.0, 1.0]], np.zeros((2, 2)), np.ones(2))

    def test_rejects_non_skew_s(self):
        with pytest.raises(ValueError, match="skew"):
            SplitSystem(np.eye(2), [[0.0, 1.0], [1.0, 0.0]], np.ones(2))

    def test_real_mode_rejects_complex(self):
        with pytest.raises(ValueError):
            SplitSystem(np.eye(2), np.zeros((2, 2)), np.ones(2) * 1j, 1.0, Mode.REAL_S_FORM)

    def test_rhs_must_be_finite(self):
        with pytest.raises(ValueError):
            SplitSystem(np.eye(2), np.zeros((2, 2)), [1.0, np.inf])

    def test_b_form_operator(self, rng):
        A = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        A = A + 6 * np.eye(5)
        b = rng.standard_normal(5) + 0j
        sys = SplitSystem.from_matrix(SparseMatrix.from_dense(A), b)
        assert sys.is_b_form
        x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        np.testing.assert_allclose(sys.apply(x), 1j * (A @ x), atol=1e-12)
        np.testing.assert_allclose(sys.residual(x), 1j * (b - A @ x), atol=1e-12)
        np.testing.assert_allclose(sys.B.toarray(), 1j * sys.S.toarray())
        assert is_hermitian(sys.B)

    def test_s_form_operator(self, rng):
        A = rng.standard_normal((5, 5)) + 6 * np.eye(5)
        sys = SplitSystem.from_matrix(SparseMatrix.from_dense(A), np.ones(5))
        assert sys.mode is Mode.REAL_S_FORM
        x = rng.standard_normal(5)
        np.testing.assert_allclose(sys.apply(x), A @ x, atol=1e-12)
        np.testing.assert_allclose(sys.matrix().toarray(), A, atol=1e-14)

    def test_h_quadratic_form_nonnegative(self, rng):
        from flexkrylov import convection_diffusion, ph_midpoint_system, spring_mass_chain

        systems = [convection_diffusion(8, 100.0),
                   ph_midpoint_system(spring_mass_chain(10), np.ones(20))]
        for sys in systems:
            for _ in range(5):
                x = rng.standard_normal(sys.n)
                q = dot(spmv(sys.H, x), x)
                assert abs(q.imag) <= 1e-12 * np.dot(x, x)
                assert q.real >= -1e-12 * np.dot(x, x)


def test_as_vector():
    assert as_vector([1, 2]).dtype == np.float64
    assert as_vector([1j]).dtype == np.complex128
    with pytest.raises(ValueError):
        as_vector(np.ones((2, 2)))
    with pytest.raises(ValueError):
        as_vector([1.0], n=2)

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from vevp.linsolve import (NotSPDError, SingularMatrixError, SparseSymmetric, dense_solve, factorize,
                           nested_dissection, relative_residual, solve)


def laplacian_2d(n, shift=0.0):
    """Five-point Laplacian on an n x n grid plus ``shift`` I."""
    T = sp.diags([-1, 2, -1], [-1, 0, 1], shape=(n, n))
    I = sp.identity(n)
    return (sp.kron(T, I) + sp.kron(I, T) + shift * sp.identity(n * n)).tocsr()


def random_spd(rng, n, density):
    A = sp.random(n, n, density=density, random_state=rng)
    A = A + A.T
    return (A + sp.diags(np.asarray(abs(A).sum(axis=1)).ravel() + 1.0)).tocsr()


def test_dense_oracle_matches_numpy(rng):
    A = rng.standard_normal((12, 12))
    b = rng.standard_normal(12)
    assert np.allclose(dense_solve(A, b), np.linalg.solve(A, b), rtol=1e-10)
    B = rng.standard_normal((12, 3))
    assert np.allclose(dense_solve(A, B), np.linalg.solve(A, B), rtol=1e-10)


def test_dense_oracle_singular():
    with pytest.raises(SingularMatrixError):
        dense_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


@given(st.integers(1, 60), st.floats(0.01, 0.3), st.integers(0, 2 ** 31))
def test_factor_solve_random_spd(n, density, seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, n, density)
    b = rng.standard_normal(n)
    x = factorize(A).solve(b)
    assert relative_residual(A, x, b) < 1e-12
    assert np.allclose(x, dense_solve(A.toarray(), b), rtol=1e-9, atol=1e-12)


def test_factor_reconstructs_permuted_matrix():
    A = laplacian_2d(12, 0.1)
    F = factorize(A)
    L = F.L()
    PAP = A[F.perm][:, F.perm]
    assert abs(L @ L.T - PAP).max() < 1e-13
    assert F.nnz == L.nnz
    assert np.all(L.diagonal() > 0)


def test_nested_dissection_is_permutation_and_reduces_fill():
    A = laplacian_2d(40, 0.0) + sp.identity(1600)
    perm = nested_dissection(A)
    assert np.array_equal(np.sort(perm), np.arange(1600))
    natural = factorize(A, perm=np.arange(1600)).nnz
    assert factorize(A).nnz < natural


def test_multiple_right_hand_sides(rng):
    A = laplacian_2d(6, 1.0)
    B = rng.standard_normal((36, 4))
    X = solve(factorize(A), B)
    assert np.allclose(A @ X, B, atol=1e-12)


def test_not_spd_reports_index():
    A = sp.diags([1.0, 2.0, -3.0, 4.0]).tocsr()
    with pytest.raises(NotSPDError) as err:
        factorize(A, perm=np.arange(4))
    assert err.value.index == 2


def test_rejects_nonsymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        factorize(sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 2.0]])))
    with pytest.raises(ValueError, match="square"):
        SparseSymmetric.from_scipy(sp.csr_matrix(np.ones((2, 3))))


def test_rhs_length_checked():
    with pytest.raises(ValueError):
        solve(factorize(laplacian_2d(3, 1.0)), np.ones(4))


def test_sparse_symmetric_round_trip(rng):
    A = random_spd(rng, 30, 0.1)
    S = SparseSymmetric.from_scipy(A)
    assert abs(S.to_scipy() - A).max() == 0.0
    r, c = A.nonzero()
    T = SparseSymmetric.from_triplets(r, c, A[r, c].A1, 30)
    assert abs(T.to_scipy() - A).max() == 0.0
    assert np.all(S.indices[S.indptr[1:] - 1] == np.arange(30))  # diagonal last in each lower row


def test_deterministic_factorization():
    A = laplacian_2d(20, 0.5)
    F1, F2 = factorize(A), factorize(A)
    assert np.array_equal(F1.perm, F2.perm) and np.array_equal(F1.Lx, F2.Lx)

"""Sparse/dense kernel tests against independent dense oracles."""

import math

import numpy as np
import pytest

import orthomg as om
from helpers import random_sparse

# ---------------------------------------------------------------------------
# oracles


def dense_matvec(a, x):
    """Reference product computed row by row with math.fsum."""
    dense = a.to_dense()
    return np.array([math.fsum(dense[i, j] * x[j] for j in range(a.n_cols))
                     for i in range(a.n_rows)])


def compensated_dot(x, y):
    return math.fsum(float(xi) * float(yi) for xi, yi in zip(x, y))


# ---------------------------------------------------------------------------
# CSR construction and validation


def test_identity_matvec_is_exact():
    eye = om.SparseMatrixCsr.identity(4)
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(om.spmv(eye, x), x)


def test_zero_matrix_matvec():
    a = om.SparseMatrixCsr(3, 3, [0, 0, 0, 0], [], [])
    assert np.array_equal(om.spmv(a, np.ones(3)), np.zeros(3))
    assert a.nnz == 0


def test_pinned_small_matvec():
    a = om.SparseMatrixCsr.from_dense([[2.0, -1.0, 0.0],
                                       [-1.0, 2.0, -1.0],
                                       [0.0, -1.0, 2.0]])
    x = np.array([1.0, 10.0, 100.0])
    assert np.array_equal(om.spmv(a, x), np.array([-8.0, -81.0, 190.0]))


def test_matvec_matches_dense_oracle():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n_rows = int(rng.integers(1, 9))
        n_cols = int(rng.integers(1, 9))
        a = random_sparse(rng, n_rows, n_cols, density=0.5)
        x = rng.standard_normal(n_cols)
        expected = dense_matvec(a, x)
        assert om.spmv(a, x) == pytest.approx(expected, abs=1e-14, rel=1e-14)


def test_matvec_dimension_mismatch():
    a = om.SparseMatrixCsr.identity(3)
    with pytest.raises(ValueError, match="dimension mismatch"):
        om.spmv(a, np.ones(4))


def test_from_dense_round_trip():
    rng = np.random.default_rng(21)
    dense = np.where(rng.random((6, 4)) < 0.4, rng.standard_normal((6, 4)), 0.0)
    a = om.SparseMatrixCsr.from_dense(dense)
    assert np.array_equal(a.to_dense(), dense)
    assert a.shape == (6, 4)


def test_transpose_matches_dense():
    rng = np.random.default_rng(3)
    a = random_sparse(rng, 5, 7)
    assert np.array_equal(a.transpose().to_dense(), a.to_dense().T)


def test_scaled():
    a = om.SparseMatrixCsr.from_dense([[1.0, 0.0], [0.0, -2.0]])
    assert np.array_equal(a.scaled(0.5).to_dense(), [[0.5, 0.0], [0.0, -1.0]])


def test_rejects_bad_offsets():
    with pytest.raises(ValueError, match="start at 0"):
        om.SparseMatrixCsr(2, 2, [1, 1, 1], [], [])
    with pytest.raises(ValueError, match="non-decreasing"):
        om.SparseMatrixCsr(3, 2, [0, 2, 1, 2], [0, 1], [1.0, 1.0])
    with pytest.raises(ValueError, match="length n_rows"):
        om.SparseMatrixCsr(2, 2, [0, 1], [0], [1.0])
    with pytest.raises(ValueError, match="number of stored values"):
        om.SparseMatrixCsr(2, 2, [0, 1, 3], [0, 1], [1.0, 1.0])


def test_rejects_bad_columns():
    with pytest.raises(ValueError, match="out of range"):
        om.SparseMatrixCsr(1, 2, [0, 1], [2], [1.0])
    # duplicate column within a row
    with pytest.raises(ValueError, match="strictly increasing"):
        om.SparseMatrixCsr(1, 3, [0, 2], [1, 1], [1.0, 1.0])
    # unsorted columns within a row
    with pytest.raises(ValueError, match="strictly increasing"):
        om.SparseMatrixCsr(1, 3, [0, 2], [2, 0], [1.0, 1.0])


def test_empty_trailing_rows_are_valid():
    a = om.SparseMatrixCsr(3, 3, [0, 1, 1, 1], [0], [5.0])
    assert a.to_dense()[0, 0] == 5.0
    assert np.array_equal(a.to_dense()[1:], np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# vector kernels


def test_dot_pinned():
    assert om.dot([1.0, 2.0], [3.0, 4.0]) == 11.0


def test_dot_matches_compensated_sum():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n = int(rng.integers(1, 200))
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        assert om.dot(x, y) == pytest.approx(compensated_dot(x, y), rel=1e-13, abs=1e-13)


def test_dot_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        om.dot(np.ones(3), np.ones(4))


def test_norm2():
    assert om.norm2([3.0, 4.0]) == 5.0
    assert om.norm2(np.zeros(10)) == 0.0
    rng = np.random.default_rng(13)
    x = rng.standard_normal(100)
    assert om.norm2(x) == pytest.approx(math.sqrt(compensated_dot(x, x)), rel=1e-14)


# ---------------------------------------------------------------------------
# LU factorization


def test_lu_reproduces_identity_columns():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((6, 6)) + 6.0 * np.eye(6)
    lu = om.lu_factor(a)
    for i in range(6):
        e = np.zeros(6)
        e[i] = 1.0
        x = om.lu_solve(lu, e)
        assert a @ x == pytest.approx(e, abs=1e-12)


def test_lu_solve_matches_numpy():
    rng = np.random.default_rng(17)
    for _ in range(20):
        n = int(rng.integers(2, 12))
        a = rng.standard_normal((n, n)) + n * np.eye(n)
        b = rng.standard_normal(n)
        x = om.lu_solve(om.lu_factor(a), b)
        assert x == pytest.approx(np.linalg.solve(a, b), rel=1e-10, abs=1e-12)


def test_lu_float32_precision():
    rng = np.random.default_rng(19)
    a = rng.standard_normal((8, 8)) + 8.0 * np.eye(8)
    b = rng.standard_normal(8)
    lu32 = om.lu_factor(a, precision="float32")
    assert lu32.precision == "float32"
    assert lu32.factors.values.dtype == np.float32
    x32 = om.lu_solve(lu32, b)
    assert x32.dtype == np.float64  # result promoted back
    exact = np.linalg.solve(a, b)
    assert x32 == pytest.approx(exact, rel=1e-4, abs=1e-4)
    assert not np.array_equal(x32, om.lu_solve(om.lu_factor(a), b))


def test_lu_singular_raises():
    singular = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(om.SingularMatrixError, match="zero pivot"):
        om.lu_factor(singular)


def test_lu_rejects_rectangular():
    with pytest.raises(ValueError, match="square"):
        om.lu_factor(np.ones((2, 3)))


def test_lu_unknown_precision():
    with pytest.raises(ValueError, match="unknown precision"):
        om.lu_factor(np.eye(2), precision="float16")


# ---------------------------------------------------------------------------
# triple product


def test_triple_product_matches_dense():
    rng = np.random.default_rng(23)
    for _ in range(20):
        n_fine = int(rng.integers(2, 10))
        n_coarse = int(rng.integers(1, n_fine + 1))
        r = random_sparse(rng, n_coarse, n_fine, density=0.5)
        a = random_sparse(rng, n_fine, n_fine, density=0.5)
        p = random_sparse(rng, n_fine, n_coarse, density=0.5)
        got = om.triple_product(r, a, p).to_dense()
        want = r.to_dense() @ a.to_dense() @ p.to_dense()
        assert got == pytest.approx(want, abs=1e-13)


def test_triple_product_shape_mismatch():
    a = om.SparseMatrixCsr.identity(3)
    b = om.SparseMatrixCsr.identity(4)
    with pytest.raises(ValueError, match="dimension mismatch"):
        om.triple_product(a, b, a)


# ---------------------------------------------------------------------------
# MatrixMarket round trips


def test_matrix_market_round_trip(tmp_path):
    rng = np.random.default_rng(29)
    a = random_sparse(rng, 7, 5, density=0.4)
    path = tmp_path / "a.mtx"
    om.write_matrix_market(a, path)
    back = om.read_matrix_market(path)
    assert back.shape == a.shape
    assert back.to_dense() == pytest.approx(a.to_dense(), rel=1e-15, abs=0)


def test_vector_market_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    x = rng.standard_normal(12)
    path = tmp_path / "x.mtx"
    om.write_vector_market(x, path)
    assert om.read_vector_market(path) == pytest.approx(x, rel=1e-15)

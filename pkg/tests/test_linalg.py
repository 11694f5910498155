"""Global tensor accumulation, CG, and matrix file IO."""

import numpy as np
import pytest

from femform.linalg import (
    ConvergenceError,
    CSRMatrix,
    GlobalScalar,
    GlobalVector,
    LinalgError,
    SparseMatrix,
    cg_solve,
    global_tensor,
    read_matrix_market,
    read_vector_text,
    write_matrix_market,
    write_vector_text,
)


def tridiag(n):
    matrix = SparseMatrix((n, n))
    for i in range(n):
        matrix.add(([i], [i]), [[2.0]])
        if i + 1 < n:
            matrix.add(([i], [i + 1]), [[-1.0]])
            matrix.add(([i + 1], [i]), [[-1.0]])
    return matrix


def identity(n):
    matrix = SparseMatrix((n, n))
    for i in range(n):
        matrix.add(([i], [i]), [[1.0]])
    return matrix


# -- accumulators ----------------------------------------------------------------


def test_scalar_accumulates():
    scalar = GlobalScalar()
    for _ in range(3):
        scalar.add((), 0.5)
    assert float(scalar) == 1.5


def test_scalar_rejects_indices():
    with pytest.raises(LinalgError, match="rank 0"):
        GlobalScalar().add(([0],), 1.0)


def test_vector_accumulates_at_indices():
    vector = GlobalVector(4)
    vector.add(([3], ), [5.0])
    assert np.array_equal(vector.array, [0.0, 0.0, 0.0, 5.0])


def test_vector_sums_repeated_indices_within_one_block():
    vector = GlobalVector(3)
    vector.add(([1, 1, 2],), [1.0, 2.0, 4.0])
    assert np.array_equal(vector.array, [0.0, 3.0, 4.0])


def test_vector_rejects_bad_blocks():
    vector = GlobalVector(3)
    with pytest.raises(LinalgError, match="out of range"):
        vector.add(([3],), [1.0])
    with pytest.raises(LinalgError, match="does not match"):
        vector.add(([0, 1],), [1.0])
    with pytest.raises(LinalgError, match="rank 1"):
        vector.add(([0], [0]), [1.0])


def test_matrix_sums_overlapping_blocks():
    matrix = SparseMatrix((2, 2))
    block = [[1.0, 2.0], [3.0, 4.0]]
    matrix.add(([0, 1], [0, 1]), block)
    matrix.add(([0, 1], [0, 1]), block)
    csr = matrix.csr()
    assert np.array_equal(csr.data, [2.0, 4.0, 6.0, 8.0])
    assert np.array_equal(csr.indices, [0, 1, 0, 1])
    assert np.array_equal(csr.indptr, [0, 2, 4])


def test_matrix_rejects_bad_blocks():
    matrix = SparseMatrix((2, 3))
    with pytest.raises(LinalgError, match="axis 1 .* out of range"):
        matrix.add(([0], [3]), [[1.0]])
    with pytest.raises(LinalgError, match="does not match"):
        matrix.add(([0], [0, 1]), [[1.0]])
    with pytest.raises(LinalgError, match="rank 2"):
        matrix.add(([0],), [1.0])


def test_csr_columns_sorted_within_rows():
    matrix = SparseMatrix((2, 4))
    matrix.add(([0], [3]), [[1.0]])
    matrix.add(([0], [1]), [[2.0]])
    matrix.add(([1, 0], [2, 0]), [[5.0, 6.0], [7.0, 8.0]])
    csr = matrix.csr()
    for row in range(csr.shape[0]):
        cols = csr.indices[csr.indptr[row]:csr.indptr[row + 1]]
        assert np.all(np.diff(cols) > 0)
    assert np.array_equal(csr.to_dense(),
                          [[8.0, 2.0, 7.0, 1.0], [6.0, 0.0, 5.0, 0.0]])


def test_insertion_order_does_not_change_the_matrix():
    rng = np.random.default_rng(11)
    blocks = [(rng.integers(0, 6, size=3), rng.integers(0, 6, size=3),
               rng.standard_normal((3, 3))) for _ in range(40)]
    forward = SparseMatrix((6, 6))
    backward = SparseMatrix((6, 6))
    for rows, cols, values in blocks:
        forward.add((rows, cols), values)
    for rows, cols, values in reversed(blocks):
        backward.add((rows, cols), values)
    a, b = forward.csr().to_dense(), backward.csr().to_dense()
    assert np.max(np.abs(a - b)) <= 1e-15 * max(1.0, np.max(np.abs(a)))


def test_same_insertion_order_is_bit_identical():
    def build():
        matrix = SparseMatrix((5, 5))
        rng = np.random.default_rng(3)
        for _ in range(25):
            rows = rng.integers(0, 5, size=2)
            cols = rng.integers(0, 5, size=2)
            matrix.add((rows, cols), rng.standard_normal((2, 2)))
        return matrix.csr()

    first, second = build(), build()
    assert first.data.tobytes() == second.data.tobytes()
    assert first.indices.tobytes() == second.indices.tobytes()


def test_csr_is_cached_until_the_next_write():
    matrix = tridiag(4)
    first = matrix.csr()
    assert matrix.csr() is first
    matrix.add(([0], [0]), [[1.0]])
    second = matrix.csr()
    assert second is not first
    assert second.to_dense()[0, 0] == 3.0


def test_empty_matrix_compresses_to_nothing():
    csr = SparseMatrix((3, 3)).csr()
    assert csr.num_nonzeros == 0
    assert np.array_equal(csr.to_dense(), np.zeros((3, 3)))
    assert np.array_equal(csr.matvec(np.ones(3)), np.zeros(3))


def test_matvec_matches_dense():
    rng = np.random.default_rng(29)
    matrix = SparseMatrix((7, 5))
    for _ in range(12):
        rows = rng.integers(0, 7, size=3)
        cols = rng.integers(0, 5, size=2)
        matrix.add((rows, cols), rng.standard_normal((3, 2)))
    x = rng.standard_normal(5)
    csr = matrix.csr()
    assert np.allclose(csr @ x, csr.to_dense() @ x, rtol=0, atol=1e-14)
    with pytest.raises(LinalgError, match="matvec"):
        csr.matvec(np.ones(7))


def test_symmetry_defect():
    assert tridiag(5).csr().symmetry_defect() == 0.0
    skew = SparseMatrix((3, 3))
    skew.add(([0], [1]), [[2.0]])
    skew.add(([1], [0]), [[2.5]])
    assert skew.csr().symmetry_defect() == 0.5
    lonely = SparseMatrix((3, 3))
    lonely.add(([2], [0]), [[4.0]])   # no partner entry at (0, 2)
    assert lonely.csr().symmetry_defect() == 4.0


def test_replace_rows_with_identity():
    matrix = tridiag(4)
    matrix.csr()   # force and then invalidate the cache
    matrix.replace_rows_with_identity([0, 3])
    dense = matrix.csr().to_dense()
    assert np.array_equal(dense[0], [1.0, 0.0, 0.0, 0.0])
    assert np.array_equal(dense[3], [0.0, 0.0, 0.0, 1.0])
    assert np.array_equal(dense[1], [-1.0, 2.0, -1.0, 0.0])
    with pytest.raises(LinalgError, match="out of range"):
        matrix.replace_rows_with_identity([4])


def test_global_tensor_factory():
    assert isinstance(global_tensor(()), GlobalScalar)
    assert isinstance(global_tensor((4,)), GlobalVector)
    assert isinstance(global_tensor((4, 4)), SparseMatrix)
    with pytest.raises(LinalgError, match="rank 3"):
        global_tensor((2, 2, 2))


# -- conjugate gradients ---------------------------------------------------------


def test_cg_identity_converges_in_one_iteration():
    b = np.array([3.0, -1.0, 2.0])
    x = cg_solve(identity(3), b, tol=1e-12, max_iter=1)
    assert np.allclose(x, b, rtol=0, atol=1e-14)


def test_cg_tridiagonal_example():
    x = cg_solve(tridiag(3), np.ones(3), tol=1e-12)
    assert np.allclose(x, [1.5, 2.0, 1.5], rtol=0, atol=1e-12)


def test_cg_zero_rhs_returns_zero():
    x = cg_solve(tridiag(5), np.zeros(5))
    assert np.array_equal(x, np.zeros(5))


def test_cg_matches_a_dense_solve():
    rng = np.random.default_rng(83)
    n = 100
    half = rng.standard_normal((n, n))
    spd = half @ half.T + n * np.eye(n)
    matrix = SparseMatrix((n, n))
    matrix.add((range(n), range(n)), spd)
    b = rng.standard_normal(n)
    x = cg_solve(matrix, b, tol=1e-12)
    assert np.linalg.norm(x - np.linalg.solve(spd, b)) <= 1e-8


def test_cg_reports_failure_to_converge():
    with pytest.raises(ConvergenceError, match="no convergence"):
        cg_solve(tridiag(40), np.ones(40), tol=1e-14, max_iter=2)


def test_cg_rejects_indefinite_matrices():
    saddle = SparseMatrix((2, 2))
    saddle.add(([0, 1], [0, 1]), [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ConvergenceError, match="positive definite"):
        cg_solve(saddle, np.array([0.0, 1.0]))


def test_cg_with_a_seed_solves_a_row_replaced_system():
    # unit rows at both ends break symmetry; a seed carrying the
    # prescribed values keeps the iteration in the interior subspace
    matrix = tridiag(5)
    matrix.replace_rows_with_identity([0, 4])
    b = np.array([2.0, 0.0, 0.0, 0.0, 6.0])
    seed = np.array([2.0, 0.0, 0.0, 0.0, 6.0])
    x = cg_solve(matrix, b, tol=1e-14, x0=seed)
    assert np.allclose(x, [2.0, 3.0, 4.0, 5.0, 6.0], rtol=0, atol=1e-12)
    with pytest.raises(LinalgError, match="x0"):
        cg_solve(matrix, b, x0=np.zeros(4))


def test_cg_dimension_checks():
    with pytest.raises(LinalgError, match="does not fit"):
        cg_solve(tridiag(3), np.ones(4))
    wide = SparseMatrix((2, 3))
    with pytest.raises(LinalgError, match="cg-solve"):
        cg_solve(wide, np.ones(2))


# -- file formats ----------------------------------------------------------------


def test_matrix_market_identity_text(tmp_path):
    path = tmp_path / "eye.mtx"
    write_matrix_market(identity(2), path)
    assert path.read_text() == (
        "%%MatrixMarket matrix coordinate real general\n"
        "2 2 2\n"
        "1 1 1\n"
        "2 2 1\n")


def test_matrix_market_vector_text(tmp_path):
    path = tmp_path / "b.mtx"
    write_matrix_market(np.array([1.0, 2.0, 3.0]), path)
    assert path.read_text() == (
        "%%MatrixMarket matrix array real general\n"
        "3 1\n"
        "1\n"
        "2\n"
        "3\n")


def test_matrix_market_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(17)
    matrix = SparseMatrix((10, 10))
    for _ in range(20):
        rows = rng.integers(0, 10, size=2)
        cols = rng.integers(0, 10, size=2)
        matrix.add((rows, cols), rng.standard_normal((2, 2)))
    path = tmp_path / "random.mtx"
    write_matrix_market(matrix, path)
    back = read_matrix_market(path)
    csr = matrix.csr()
    assert isinstance(back, CSRMatrix)
    assert np.array_equal(back.indptr, csr.indptr)
    assert np.array_equal(back.indices, csr.indices)
    assert np.array_equal(back.data, csr.data)   # 17 digits survive the trip


def test_matrix_market_vector_round_trip(tmp_path):
    values = np.array([np.pi, -1.0 / 3.0, 1e-17])
    path = tmp_path / "x.mtx"
    write_matrix_market(GlobalVector(3), path)
    assert np.array_equal(read_matrix_market(path), np.zeros(3))
    write_matrix_market(values, path)
    assert np.array_equal(read_matrix_market(path), values)


def test_matrix_market_rejects_garbage(tmp_path):
    path = tmp_path / "bad.mtx"
    path.write_text("%%MatrixMarket matrix coordinate complex general\n0 0 0\n")
    with pytest.raises(LinalgError, match="real general"):
        read_matrix_market(path)
    path.write_text("%%MatrixMarket matrix coordinate real general\n"
                    "2 2 1\n3 1 5.0\n")
    with pytest.raises(LinalgError, match="out of bounds"):
        read_matrix_market(path)
    path.write_text("%%MatrixMarket matrix coordinate real general\n"
                    "2 2 2\n1 1 5.0\n")
    with pytest.raises(LinalgError, match="expected 2 entries"):
        read_matrix_market(path)


def test_plain_vector_file_round_trip(tmp_path):
    path = tmp_path / "u.txt"
    values = np.array([0.0, -2.5, 1.0 / 7.0])
    write_vector_text(values, path)
    assert path.read_text().count("\n") == 3
    assert np.array_equal(read_vector_text(path), values)

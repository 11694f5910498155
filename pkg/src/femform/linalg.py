"""Global tensors, a conjugate gradient solver, and matrix IO.

The assembler needs three things of a global tensor: a fixed shape, an
add method that accumulates a dense block at given per-axis indices,
and (for matrices) a compressed form to hand to solvers.  Matrices
buffer raw triplets during assembly and compress lazily; the
compression sorts by row, column, and insertion order, so the same
multiset of blocks always produces bit-identical values regardless of
insertion sequence.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "LinalgError", "ConvergenceError",
    "GlobalScalar", "GlobalVector", "SparseMatrix", "CSRMatrix",
    "global_tensor", "cg_solve",
    "write_matrix_market", "read_matrix_market",
    "write_vector_text", "read_vector_text",
]


class LinalgError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """An iterative solve did not reach its tolerance."""


def _check_indices(indices, extent, axis):
    indices = np.asarray(indices, dtype=np.intp).ravel()
    if indices.size and (indices.min() < 0 or indices.max() >= extent):
        raise LinalgError(
            f"axis {axis} indices out of range [0, {extent})")
    return indices


class GlobalScalar:
    """Rank 0 accumulator."""

    rank = 0
    shape = ()

    def __init__(self):
        self.value = 0.0

    def add(self, indices, values):
        if len(indices) != 0:
            raise LinalgError("rank 0 tensor takes no indices")
        self.value += float(np.asarray(values).sum())

    def __float__(self):
        return self.value


class GlobalVector:
    """Rank 1 dense accumulator."""

    rank = 1

    def __init__(self, length):
        self.array = np.zeros(int(length))

    @property
    def shape(self):
        return self.array.shape

    def __len__(self):
        return len(self.array)

    def add(self, indices, values):
        if len(indices) != 1:
            raise LinalgError(f"rank 1 tensor takes 1 index list, "
                              f"got {len(indices)}")
        rows = _check_indices(indices[0], len(self.array), 0)
        values = np.asarray(values, dtype=float).ravel()
        if values.shape != rows.shape:
            raise LinalgError("block size does not match its index list")
        np.add.at(self.array, rows, values)


class CSRMatrix:
    """Immutable compressed sparse rows."""

    def __init__(self, shape, indptr, indices, data):
        self.shape = tuple(shape)
        self.indptr = indptr
        self.indices = indices
        self.data = data
        for arr in (indptr, indices, data):
            arr.setflags(write=False)

    @property
    def num_nonzeros(self):
        return len(self.data)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.shape[1],):
            raise LinalgError(
                f"matvec of {self.shape} matrix with vector of {x.shape}")
        products = self.data * x[self.indices]
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        return np.bincount(rows, weights=products, minlength=self.shape[0])

    def __matmul__(self, x):
        return self.matvec(x)

    def entries(self):
        """Yield (row, col, value) in CSR order."""
        for row in range(self.shape[0]):
            for k in range(self.indptr[row], self.indptr[row + 1]):
                yield row, int(self.indices[k]), float(self.data[k])

    def to_dense(self):
        dense = np.zeros(self.shape)
        for row, col, value in self.entries():
            dense[row, col] += value
        return dense

    def diagonal(self):
        diag = np.zeros(min(self.shape))
        for row, col, value in self.entries():
            if row == col:
                diag[row] = value
        return diag

    def symmetry_defect(self):
        """max |A - transpose(A)| over all entries."""
        if self.shape[0] != self.shape[1]:
            raise LinalgError("symmetry defect of a non-square matrix")
        lookup = {(r, c): v for r, c, v in self.entries()}
        worst = 0.0
        for (r, c), v in lookup.items():
            worst = max(worst, abs(v - lookup.get((c, r), 0.0)))
        return worst


class SparseMatrix:
    """Rank 2 triplet accumulator, compressed on first read."""

    rank = 2

    def __init__(self, shape):
        rows, cols = shape
        self.shape = (int(rows), int(cols))
        self._rows = []
        self._cols = []
        self._values = []
        self._csr = None

    def add(self, indices, values):
        if len(indices) != 2:
            raise LinalgError(f"rank 2 tensor takes 2 index lists, "
                              f"got {len(indices)}")
        rows = _check_indices(indices[0], self.shape[0], 0)
        cols = _check_indices(indices[1], self.shape[1], 1)
        block = np.asarray(values, dtype=float)
        if block.shape != (len(rows), len(cols)):
            raise LinalgError(
                f"block of shape {block.shape} does not match index lists "
                f"of lengths {(len(rows), len(cols))}")
        self._rows.append(np.repeat(rows, len(cols)))
        self._cols.append(np.tile(cols, len(rows)))
        self._values.append(block.ravel())
        self._csr = None

    def csr(self):
        """Compress and cache.  Triplets at equal positions are summed
        in insertion order, so the result does not depend on when the
        method is called."""
        if self._csr is None:
            self._csr = self._compress()
        return self._csr

    def _compress(self):
        nrows = self.shape[0]
        if not self._rows:
            return CSRMatrix(self.shape, np.zeros(nrows + 1, dtype=np.intp),
                             np.empty(0, dtype=np.intp), np.empty(0))
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        values = np.concatenate(self._values)
        order = np.lexsort((np.arange(len(rows)), cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        fresh = np.empty(len(rows), dtype=bool)
        fresh[0] = True
        fresh[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(fresh)
        data = np.add.reduceat(values, starts)
        indices = cols[starts]
        counts = np.bincount(rows[starts], minlength=nrows)
        indptr = np.zeros(nrows + 1, dtype=np.intp)
        np.cumsum(counts, out=indptr[1:])
        return CSRMatrix(self.shape, indptr, indices, data)

    def replace_rows_with_identity(self, rows):
        """Drop every stored triplet in the given rows and put a unit
        diagonal entry there instead (non-symmetric constraint rows)."""
        rows = np.unique(np.asarray(list(rows), dtype=np.intp))
        if rows.size == 0:
            return
        if rows.min() < 0 or rows.max() >= self.shape[0]:
            raise LinalgError(f"row indices out of range [0, {self.shape[0]})")
        for i in range(len(self._rows)):
            keep = ~np.isin(self._rows[i], rows)
            self._rows[i] = self._rows[i][keep]
            self._cols[i] = self._cols[i][keep]
            self._values[i] = self._values[i][keep]
        self._rows.append(rows)
        self._cols.append(rows.copy())
        self._values.append(np.ones(len(rows)))
        self._csr = None


def global_tensor(shape):
    """Zero global tensor of the given shape (rank = len(shape) ≤ 2)."""
    if len(shape) == 0:
        return GlobalScalar()
    if len(shape) == 1:
        return GlobalVector(shape[0])
    if len(shape) == 2:
        return SparseMatrix(shape)
    raise LinalgError(f"rank {len(shape)} tensors are not stored")


# -- conjugate gradients --------------------------------------------------------

def cg_solve(matrix, rhs, tol=1e-10, max_iter=None, x0=None):
    """Solve matrix @ x = rhs for a symmetric positive definite matrix.

    Returns x with true relative residual norm(rhs - matrix @ x) at
    most tol * norm(rhs).  The recurrence residual drifts from the
    true one in long runs, so convergence is verified on the real
    thing and iteration restarts if the check fails.

    x0 seeds the iteration.  A system whose Dirichlet rows were
    replaced by unit rows is not symmetric, but becomes solvable here
    when x0 already carries the prescribed values: the residual then
    vanishes on the constrained dofs and every search direction stays
    inside the interior subspace, where the operator is the symmetric
    positive definite interior block.
    """
    if isinstance(matrix, SparseMatrix):
        matrix = matrix.csr()
    if matrix.shape[0] != matrix.shape[1]:
        raise LinalgError(f"cannot cg-solve a {matrix.shape} system")
    b = np.asarray(rhs, dtype=float)
    if b.shape != (matrix.shape[0],):
        raise LinalgError(
            f"rhs of shape {b.shape} does not fit matrix {matrix.shape}")
    target = tol * float(np.linalg.norm(b))
    if x0 is None:
        x = np.zeros_like(b)
    else:
        x = np.asarray(x0, dtype=float).copy()
        if x.shape != b.shape:
            raise LinalgError(
                f"x0 of shape {x.shape} does not fit matrix {matrix.shape}")
    if target == 0.0 and not b.any():
        return np.zeros_like(b)
    if max_iter is None:
        max_iter = max(100, 10 * len(b))
    r = b - matrix @ x if x.any() else b.copy()
    p = r.copy()
    rs = float(r @ r)
    for _ in range(max_iter):
        if math.sqrt(rs) <= target:
            true_residual = b - matrix @ x
            if np.linalg.norm(true_residual) <= target:
                return x
            r = true_residual
            p = r.copy()
            rs = float(r @ r)
            continue
        Ap = matrix @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise ConvergenceError(
                "conjugate gradients hit a non-positive curvature "
                "direction; the matrix is not positive definite")
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_next = float(r @ r)
        p = r + (rs_next / rs) * p
        rs = rs_next
    if np.linalg.norm(b - matrix @ x) <= target:
        return x
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations; relative residual "
        f"{np.linalg.norm(b - matrix @ x) / np.linalg.norm(b):.3e}")


# -- file formats ---------------------------------------------------------------

def _fmt(value):
    return f"{value:.17g}"


def write_matrix_market(tensor, path):
    """Write a matrix (coordinate format, CSR entry order) or a vector
    (array format, one column)."""
    if isinstance(tensor, SparseMatrix):
        tensor = tensor.csr()
    if isinstance(tensor, GlobalVector):
        tensor = tensor.array
    with open(path, "w", encoding="ascii") as out:
        if isinstance(tensor, CSRMatrix):
            out.write("%%MatrixMarket matrix coordinate real general\n")
            out.write(f"{tensor.shape[0]} {tensor.shape[1]} "
                      f"{tensor.num_nonzeros}\n")
            for row, col, value in tensor.entries():
                out.write(f"{row + 1} {col + 1} {_fmt(value)}\n")
            return
        vector = np.asarray(tensor, dtype=float)
        if vector.ndim != 1:
            raise LinalgError(
                f"cannot write an array of shape {vector.shape}")
        out.write("%%MatrixMarket matrix array real general\n")
        out.write(f"{len(vector)} 1\n")
        for value in vector:
            out.write(_fmt(value) + "\n")


def read_matrix_market(path):
    """Invert write_matrix_market: coordinate files come back as
    CSRMatrix, array files as a vector."""
    with open(path, "r", encoding="ascii") as handle:
        header = handle.readline().split()
        if len(header) != 5 or header[0] != "%%MatrixMarket" \
                or header[1] != "matrix" or header[3] != "real" \
                or header[4] != "general":
            raise LinalgError(f"{path}: not a real general MatrixMarket file")
        layout = header[2]
        lines = [ln for ln in handle if ln.strip() and not ln.startswith("%")]
    if layout == "array":
        dims = lines[0].split()
        if len(dims) != 2 or dims[1] != "1":
            raise LinalgError(f"{path}: expected a single column")
        n = int(dims[0])
        values = np.array([float(ln) for ln in lines[1:]])
        if len(values) != n:
            raise LinalgError(f"{path}: expected {n} values, "
                              f"got {len(values)}")
        return values
    if layout != "coordinate":
        raise LinalgError(f"{path}: unknown layout {layout!r}")
    nrows, ncols, nnz = (int(v) for v in lines[0].split())
    matrix = SparseMatrix((nrows, ncols))
    if len(lines) - 1 != nnz:
        raise LinalgError(f"{path}: expected {nnz} entries, "
                          f"got {len(lines) - 1}")
    for line in lines[1:]:
        r, c, v = line.split()
        row, col = int(r) - 1, int(c) - 1
        if not (0 <= row < nrows and 0 <= col < ncols):
            raise LinalgError(f"{path}: entry ({r}, {c}) out of bounds")
        matrix.add(([row], [col]), [[float(v)]])
    return matrix.csr()


def write_vector_text(vector, path):
    """One value per line, full precision."""
    if isinstance(vector, GlobalVector):
        vector = vector.array
    vector = np.asarray(vector, dtype=float)
    with open(path, "w", encoding="ascii") as out:
        for value in vector:
            out.write(_fmt(value) + "\n")


def read_vector_text(path):
    with open(path, "r", encoding="ascii") as handle:
        return np.array([float(line) for line in handle if line.strip()])

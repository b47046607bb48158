"""Dense/sparse containers and the small set of kernels the models need.

Dense matrices are plain ``float64`` numpy arrays. Sparse matrices live in
:class:`SparseMatrix`, a sorted, deduplicated coordinate store that lazily
builds a CSR view for products.

Random streams come from numpy's ``PCG64`` bit generator (O'Neill's permuted
congruential generator, 128-bit state). It is fully specified and gives the
same stream on every platform for a given seed and numpy major version.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np
import scipy.sparse as sp
from scipy.special import expit
from threadpoolctl import threadpool_limits

from .errors import InvalidArgumentError

Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    return np.random.Generator(np.random.PCG64(int(seed)))


@contextmanager
def thread_limit(threads: int | None):
    """Cap BLAS/OpenMP threads; ``threads=1`` is the bitwise-reproducible mode."""
    if threads is None:
        yield
        return
    if threads < 1:
        raise InvalidArgumentError(f"thread count must be >= 1, got {threads}")
    with threadpool_limits(limits=threads):
        yield


def as_dense(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"expected a 2-d matrix, got shape {arr.shape}")
    return arr


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{what} contains NaN or Inf")
    return arr


class SparseMatrix:
    """Coordinate-form sparse matrix, row-major sorted with unique (row, col).

    Duplicate coordinates passed to the constructor are summed.
    """

    __slots__ = ("shape", "row", "col", "data", "_csr")

    def __init__(self, shape, row, col, data):
        n_rows, n_cols = (int(s) for s in shape)
        if n_rows < 0 or n_cols < 0:
            raise InvalidArgumentError(f"invalid shape {shape}")
        row = np.asarray(row, dtype=np.int64).ravel()
        col = np.asarray(col, dtype=np.int64).ravel()
        data = np.asarray(data, dtype=np.float64).ravel()
        if not (row.size == col.size == data.size):
            raise InvalidArgumentError("row, col and data must have equal length")
        if row.size:
            if row.min() < 0 or row.max() >= n_rows or col.min() < 0 or col.max() >= n_cols:
                raise InvalidArgumentError("sparse index out of range")
        _check_finite(data, "sparse values")
        key = row * max(n_cols, 1) + col
        order = np.argsort(key, kind="stable")
        key, row, col, data = key[order], row[order], col[order], data[order]
        if key.size and np.any(key[1:] == key[:-1]):
            uniq, start = np.unique(key, return_index=True)
            data = np.add.reduceat(data, start)
            row, col = row[start], col[start]
        self.shape = (n_rows, n_cols)
        self.row, self.col, self.data = row, col, data
        self._csr = None

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls((n, n), idx, idx, np.ones(n))

    @classmethod
    def empty(cls, rows: int, cols: int) -> "SparseMatrix":
        return cls((rows, cols), [], [], [])

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = as_dense(dense)
        r, c = np.nonzero(dense)
        return cls(dense.shape, r, c, dense[r, c])

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    def with_values(self, data) -> "SparseMatrix":
        """Same sparsity pattern, new values (aligned with ``self.data``)."""
        data = np.asarray(data, dtype=np.float64).ravel()
        if data.size != self.nnz:
            raise InvalidArgumentError(f"expected {self.nnz} values, got {data.size}")
        out = object.__new__(SparseMatrix)
        out.shape, out.row, out.col = self.shape, self.row, self.col
        out.data = _check_finite(data, "sparse values")
        out._csr = None
        return out

    def tocsr(self) -> sp.csr_matrix:
        if self._csr is None:
            self._csr = sp.csr_matrix((self.data, (self.row, self.col)), shape=self.shape)
        return self._csr

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row, self.col] = self.data
        return out

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self.shape[::-1], self.col, self.row, self.data)

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def __matmul__(self, other):
        return spmm(self, other)

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def glorot_normal(rows: int, cols: int, rng: Rng) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise InvalidArgumentError(f"glorot_normal needs positive dims, got {rows}x{cols}")
    std = np.sqrt(2.0 / (rows + cols))
    return rng.standard_normal((rows, cols)) * std


def spmm(a: SparseMatrix, b) -> np.ndarray:
    b = as_dense(b)
    if a.shape[1] != b.shape[0]:
        raise InvalidArgumentError(f"spmm shape mismatch: {a.shape} x {b.shape}")
    return np.asarray(a.tocsr() @ b)


def matmul(a, b) -> np.ndarray:
    a, b = as_dense(a), as_dense(b)
    if a.shape[1] != b.shape[0]:
        raise InvalidArgumentError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def transpose(a) -> np.ndarray:
    return np.ascontiguousarray(as_dense(a).T)


def sigmoid(x) -> np.ndarray:
    # expit evaluates exp(-|x|) on both branches, so it never overflows
    return expit(np.asarray(x, dtype=np.float64))


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def _binary(name, fn):
    def op(a, b):
        a, b = as_dense(a), as_dense(b)
        if a.shape != b.shape:
            raise InvalidArgumentError(f"{name}: shape mismatch {a.shape} vs {b.shape}")
        return fn(a, b)

    op.__name__ = name
    return op


add = _binary("add", np.add)
sub = _binary("sub", np.subtract)
hadamard = _binary("hadamard", np.multiply)


def scale(a, factor: float) -> np.ndarray:
    return as_dense(a) * float(factor)


_ELEMENTWISE = {
    "sigmoid": sigmoid,
    "relu": relu,
    "add": add,
    "sub": sub,
    "hadamard": hadamard,
    "scale": scale,
}


def elementwise(op: str, *args):
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise InvalidArgumentError(f"unknown elementwise op {op!r}") from None
    return fn(*args)

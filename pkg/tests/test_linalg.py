import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairegm.errors import InvalidArgumentError
from fairegm.linalg import (SparseMatrix, add, elementwise, glorot_normal, hadamard, make_rng, matmul,
                            relu, scale, sigmoid, spmm, sub, thread_limit, transpose)


def test_glorot_same_seed_is_identical():
    assert np.array_equal(glorot_normal(1, 1, make_rng(7)), glorot_normal(1, 1, make_rng(7)))
    assert np.array_equal(glorot_normal(20, 30, make_rng(7)), glorot_normal(20, 30, make_rng(7)))


def test_glorot_shape_and_std():
    assert glorot_normal(3, 5, make_rng(0)).shape == (3, 5)
    w = glorot_normal(100, 100, make_rng(1))
    assert abs(w.std() - np.sqrt(2 / 200)) < 0.1 * np.sqrt(2 / 200)


@pytest.mark.parametrize("shape", [(0, 3), (3, 0)])
def test_glorot_rejects_zero_dimension(shape):
    with pytest.raises(InvalidArgumentError):
        glorot_normal(*shape, make_rng(0))


def test_spmm_examples():
    b = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal(spmm(SparseMatrix.identity(3), b), b)
    assert np.array_equal(spmm(SparseMatrix.empty(3, 3), b), np.zeros((3, 2)))
    swap = SparseMatrix.from_dense([[0, 1], [1, 0]])
    assert np.array_equal(spmm(swap, [[1, 2], [3, 4]]), [[3, 4], [1, 2]])
    with pytest.raises(InvalidArgumentError):
        spmm(SparseMatrix.identity(2), b)


def test_sparse_dedups_and_sorts():
    a = SparseMatrix((2, 2), [1, 0, 1], [0, 1, 0], [1.0, 2.0, 3.0])
    assert a.nnz == 2
    assert np.array_equal(a.to_dense(), [[0, 2], [4, 0]])
    assert list(zip(a.row, a.col)) == [(0, 1), (1, 0)]
    with pytest.raises(InvalidArgumentError):
        SparseMatrix((2, 2), [2], [0], [1.0])
    with pytest.raises(InvalidArgumentError):
        SparseMatrix((2, 2), [0], [0], [np.nan])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_spmm_matches_dense(seed):
    rng = make_rng(seed)
    n, m = int(rng.integers(1, 15)), int(rng.integers(1, 15))
    nnz = int(rng.integers(0, min(100, n * m) + 1))
    a = SparseMatrix((n, m), rng.integers(0, n, nnz), rng.integers(0, m, nnz), rng.normal(size=nnz))
    b = rng.normal(size=(m, 4))
    assert np.allclose(spmm(a, b), a.to_dense() @ b, atol=1e-12, rtol=0)


def test_elementwise_examples():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(500.0) == 1.0
    assert sigmoid(-500.0) >= 0.0
    assert relu(-3.0) == 0.0 and relu(3.0) == 3.0
    assert elementwise("sigmoid", np.zeros(2)).tolist() == [0.5, 0.5]
    assert elementwise("scale", np.ones((1, 2)), 3.0).tolist() == [[3.0, 3.0]]
    assert np.array_equal(add(np.ones((2, 2)), np.ones((2, 2))), 2 * np.ones((2, 2)))
    assert np.array_equal(sub(np.ones((2, 1)), np.ones((2, 1))), np.zeros((2, 1)))
    assert np.array_equal(hadamard([[2.0, 3.0]], [[4.0, 5.0]]), [[8, 15]])
    assert np.array_equal(scale([[1.0]], -2), [[-2]])
    with pytest.raises(InvalidArgumentError):
        add(np.ones((1, 2)), np.ones((1, 3)))
    with pytest.raises(InvalidArgumentError):
        elementwise("tanh", np.ones(2))


def test_sigmoid_matches_high_precision():
    from fractions import Fraction
    import math
    for x in [-30.0, -1.5, 0.25, 12.0, 40.0]:
        exact = 1 / (1 + Fraction(math.exp(-x)))
        assert abs(sigmoid(x) - float(exact)) <= 1e-16 * max(1.0, float(exact))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_sigmoid_and_relu_ranges(xs):
    x = np.array(xs)
    s = sigmoid(x)
    assert np.all((s >= 0) & (s <= 1))
    assert np.all(s[np.abs(x) < 30] > 0) and np.all(s[np.abs(x) < 30] < 1)
    assert np.all(relu(x) >= 0)


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(a, np.eye(2)), a)
    assert np.array_equal(matmul(a, [[5], [6]]), [[17], [39]])
    assert matmul(np.ones((1, 3)), np.ones((3, 1))).shape == (1, 1)
    with pytest.raises(InvalidArgumentError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_transpose_of_product(seed):
    rng = make_rng(seed)
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    assert np.allclose(transpose(matmul(a, b)), matmul(transpose(b), transpose(a)), atol=1e-12, rtol=0)


def test_thread_limit_validates():
    with thread_limit(1):
        pass
    with pytest.raises(InvalidArgumentError):
        with thread_limit(0):
            pass

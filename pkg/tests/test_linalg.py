import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ginret.linalg import (ConvergenceWarning, SparseSym, dense_eigh, power_iteration_lambda_max, spmv,
                           spmv_reference)

from conftest import random_knn_graph

PATH2 = SparseSym.from_dense([[1.0, -1.0], [-1.0, 1.0]])


def random_sym(rng, n, density=0.4):
    a = rng.normal(size=(n, n)) * (rng.random((n, n)) < density)
    return np.triu(a) + np.triu(a, 1).T


def test_spmv_path_laplacian():
    np.testing.assert_array_equal(spmv(PATH2, [1.0, 0.0]), [1.0, -1.0])


def test_spmv_zero_matrix():
    z = SparseSym.from_dense(np.zeros((4, 4)))
    assert z.nnz == 0
    np.testing.assert_array_equal(spmv(z, [1.0, 2.0, 3.0, 4.0]), np.zeros(4))


def test_spmv_identity():
    np.testing.assert_array_equal(spmv(SparseSym.identity(3), [3.0, 4.0, 5.0]), [3.0, 4.0, 5.0])


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(PATH2, [1.0, 2.0, 3.0])


def test_spmv_matches_dense_and_reference(rng):
    a = random_sym(rng, 9)
    m = SparseSym.from_dense(a)
    x = rng.normal(size=(9, 3, 2))
    expected = np.einsum("ij,jab->iab", a, x)
    np.testing.assert_allclose(spmv(m, x), expected, atol=1e-12)
    np.testing.assert_allclose(spmv_reference(m, x), expected, atol=1e-12)


def test_layout_invariants(rng):
    m = SparseSym.from_dense(random_sym(rng, 12))
    for i in range(m.n):
        cols = m.col_indices[m.row_offsets[i]:m.row_offsets[i + 1]]
        assert (np.diff(cols) > 0).all()
    assert (m.values != 0).all()
    assert m.is_symmetric()


def test_rejects_asymmetric():
    with pytest.raises(ValueError):
        SparseSym.from_dense([[0.0, 1.0], [0.0, 0.0]])


@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_bilinear_symmetry(n, seed):
    rng = np.random.default_rng(seed)
    m = SparseSym.from_dense(random_sym(rng, n))
    x, y = rng.normal(size=n), rng.normal(size=n)
    assert abs(y @ spmv(m, x) - x @ spmv(m, y)) < 1e-10


@pytest.mark.parametrize("a, expected", [
    ([[1.0, -1.0], [-1.0, 1.0]], [0.0, 2.0]),
    (np.eye(3), [1.0, 1.0, 1.0]),
    (np.diag([5.0, 2.0, 9.0]), [2.0, 5.0, 9.0]),
])
def test_dense_eigh_examples(a, expected):
    w, _ = dense_eigh(a)
    np.testing.assert_allclose(w, expected, atol=1e-12)


@given(st.integers(1, 32), st.integers(0, 2**32 - 1))
def test_dense_eigh_reconstruction(n, seed):
    a = random_sym(np.random.default_rng(seed), n, density=1.0)
    w, u = dense_eigh(a)
    assert np.abs(u @ np.diag(w) @ u.T - a).max() < 1e-10 * max(1, np.abs(a).max())
    assert np.abs(u.T @ u - np.eye(n)).max() < 1e-10
    assert (np.diff(w) >= 0).all()


def test_dense_eigh_rejects_asymmetric():
    with pytest.raises(ValueError):
        dense_eigh([[1.0, 2.0], [0.0, 1.0]])


def test_power_iteration_path_graph():
    assert power_iteration_lambda_max(PATH2) == pytest.approx(2.0, abs=1e-6)


def test_power_iteration_identity():
    assert power_iteration_lambda_max(SparseSym.identity(5)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_power_iteration_knn_16(seed):
    g = random_knn_graph(np.random.default_rng(seed), 16, 3, lambda_max=1.0)
    true_max = dense_eigh(g.laplacian.to_dense())[0][-1]
    est = power_iteration_lambda_max(g.laplacian)
    assert abs(est - true_max) <= 1e-6
    assert est <= true_max + 1e-6


def test_power_iteration_fallback():
    g = random_knn_graph(np.random.default_rng(0), 16, 3, lambda_max=1.0)
    with pytest.warns(ConvergenceWarning):
        assert power_iteration_lambda_max(g.laplacian, max_iters=2) == 2.0


@given(st.integers(4, 32), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_power_iteration_never_exceeds_true_max(n, k, seed):
    k = min(k, n - 1)
    g = random_knn_graph(np.random.default_rng(seed), n, k, lambda_max=1.0)
    true_max = dense_eigh(g.laplacian.to_dense())[0][-1]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = power_iteration_lambda_max(g.laplacian)
    if not caught:
        assert est <= true_max + 1e-6
        assert abs(est - true_max) <= 1e-6 * true_max
    else:
        assert est == 2.0

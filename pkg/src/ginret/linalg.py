"""Small linear algebra substrate: symmetric CSR matrices, matvec, dense
eigendecomposition (oracle scale) and power iteration for lambda_max."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

LAMBDA_MAX_FALLBACK = 2.0
MAX_DENSE_EIGH = 64


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class SparseSym:
    """Symmetric n x n matrix in compressed-row form.

    Use :meth:`from_triplets` or :meth:`from_dense`; both canonicalise the
    layout (sorted columns, summed duplicates, zeros dropped).
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name in ("row_offsets", "col_indices", "values"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_triplets(cls, n, rows, cols, vals, symmetrize=False) -> "SparseSym":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("triplet arrays must have equal length")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
            raise ValueError("triplet index out of range")
        if symmetrize:
            off = rows != cols
            rows, cols, vals = (
                np.concatenate([rows, cols[off]]),
                np.concatenate([cols, rows[off]]),
                np.concatenate([vals, vals[off]]),
            )
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            start = np.ones(rows.size, dtype=bool)
            start[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            idx = np.flatnonzero(start)
            vals = np.add.reduceat(vals, idx)
            rows, cols = rows[idx], cols[idx]
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
        m = cls(n, offsets, cols, vals)
        if not m.is_symmetric():
            raise ValueError("matrix is not symmetric")
        return m

    @classmethod
    def from_dense(cls, a) -> "SparseSym":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        rows, cols = np.nonzero(a)
        return cls.from_triplets(a.shape[0], rows, cols, a[rows, cols])

    @classmethod
    def identity(cls, n) -> "SparseSym":
        i = np.arange(n)
        return cls.from_triplets(n, i, i, np.ones(n))

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.row_offsets))

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n)
        rows = self.row_ids()
        on = rows == self.col_indices
        d[rows[on]] = self.values[on]
        return d

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.row_ids(), self.col_indices] = self.values
        return out

    def is_symmetric(self) -> bool:
        rows = self.row_ids()
        # sort transposed entries into the same canonical order and compare
        order = np.lexsort((rows, self.col_indices))
        return bool(
            np.array_equal(self.col_indices[order], rows)
            and np.array_equal(rows[order], self.col_indices)
            and np.array_equal(self.values[order], self.values)
        )

    def __matmul__(self, x):
        return spmv(self, x)

    @cached_property
    def _csr(self):
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    @cached_property
    def _csr32(self):
        return self._csr.astype(np.float32)


def spmv(m: SparseSym, x) -> np.ndarray:
    """Sparse product ``m @ x``; ``x`` may be a vector or an (n, ...) block.

    Row sums run sequentially in column order, so results are reproducible.
    """
    x = np.asarray(x)
    if x.ndim == 0 or x.shape[0] != m.n:
        raise ValueError(f"dimension mismatch: matrix is {m.n}x{m.n}, operand has shape {x.shape}")
    if x.dtype == np.float32:
        a = m._csr32
    else:
        a = m._csr
        x = x.astype(np.float64, copy=False)
    if x.ndim <= 2:
        return a @ x
    return (a @ x.reshape(m.n, -1)).reshape(x.shape)


def spmv_reference(m: SparseSym, x) -> np.ndarray:
    """Pure-numpy CSR product (gather, scale, segmented sum)."""
    x = np.asarray(x)
    if x.shape[0] != m.n:
        raise ValueError(f"dimension mismatch: matrix is {m.n}x{m.n}, operand has {x.shape[0]} rows")
    dtype = np.result_type(x.dtype, np.float64) if x.dtype.kind != "f" else x.dtype
    out = np.zeros(x.shape, dtype=dtype)
    if m.nnz == 0:
        return out
    vals = m.values.astype(dtype, copy=False)
    terms = x[m.col_indices] * (vals if x.ndim == 1 else vals.reshape((-1,) + (1,) * (x.ndim - 1)))
    counts = np.diff(m.row_offsets)
    nonempty = counts > 0
    out[nonempty] = np.add.reduceat(terms, m.row_offsets[:-1][nonempty], axis=0)
    return out


def dense_eigh(m, max_n: int = MAX_DENSE_EIGH):
    """Eigenvalues (ascending) and column eigenvectors of a small symmetric matrix.

    Backed by LAPACK; the reconstruction and orthonormality bounds are
    verified before returning.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n > max_n:
        raise ValueError(f"dense_eigh is oracle-scale only (n={n} > {max_n})")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError("dense_eigh requires a symmetric matrix")
    try:
        w, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigendecomposition did not converge: {exc}") from exc
    recon = np.abs(u @ np.diag(w) @ u.T - a).max(initial=0.0)
    ortho = np.abs(u.T @ u - np.eye(n)).max(initial=0.0)
    if recon > 1e-10 * scale or ortho > 1e-10:
        raise ArithmeticError(f"eigendecomposition inaccurate (recon={recon:.3g}, ortho={ortho:.3g})")
    return w, u


def _start_vector(n: int) -> np.ndarray:
    # The all-ones vector is the null eigenvector of the normalized Laplacian
    # of any regular graph, so a fixed pseudo-random start is used instead.
    v = np.random.default_rng(0x5EED).uniform(0.5, 1.5, size=n)
    v[1::2] *= -1.0
    return v / np.linalg.norm(v)


def power_iteration_lambda_max(m: SparseSym, max_iters: int = 2000, tol: float = 1e-6) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Converged when the residual ``|m v - mu v|`` drops below ``tol * mu``;
    the Rayleigh quotient ``mu`` is then accurate to second order.  If that
    never happens the normalized-Laplacian bound 2.0 is returned and a
    :class:`ConvergenceWarning` is issued.
    """
    if m.n == 0:
        raise ValueError("empty matrix")
    v = _start_vector(m.n)
    for it in range(max_iters):
        w = spmv(m, v)
        mu = float(v @ w)
        resid = float(np.linalg.norm(w - mu * v))
        if mu > 0 and resid <= tol * mu:
            logger.debug("power iteration converged after %d iterations", it + 1)
            return mu
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    warnings.warn(
        f"power iteration did not converge in {max_iters} iterations; "
        f"using lambda_max={LAMBDA_MAX_FALLBACK}",
        ConvergenceWarning,
        stacklevel=2,
    )
    return LAMBDA_MAX_FALLBACK

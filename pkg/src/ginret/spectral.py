"""Graph spectral filtering.

``cheb_filter`` evaluates a K-term Chebyshev polynomial of the scaled
Laplacian with the three-term recurrence (K-1 sparse products, no
eigendecomposition). ``spectral_filter_oracle`` does the same filtering the
slow way, through the graph Fourier basis, and exists to check the former.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SparseSym, dense_eigh, spmv

DEFAULT_ORDER = 3


@dataclass(frozen=True, eq=False)
class ChebCoeffs:
    theta: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.theta, dtype=np.float64))
        if t.ndim != 1 or t.size < 1:
            raise ValueError("theta must be a non-empty vector")
        object.__setattr__(self, "theta", t)

    @property
    def order(self) -> int:
        return self.theta.size


def cheb_basis(lt: SparseSym, x, order: int) -> np.ndarray:
    """Stack ``[T_0(L~) x, ..., T_{order-1}(L~) x]`` along a new leading axis.

    ``x`` may carry trailing channel axes; row count must be ``lt.n``.
    """
    x = np.asarray(x)
    if x.shape[0] != lt.n:
        raise ValueError(f"dimension mismatch: operator has {lt.n} vertices, input has {x.shape[0]}")
    if order < 1:
        raise ValueError("order must be >= 1")
    out = np.empty((order,) + x.shape, dtype=np.result_type(x.dtype, np.float32))
    out[0] = x
    if order > 1:
        out[1] = spmv(lt, x)
    for k in range(2, order):
        out[k] = 2.0 * spmv(lt, out[k - 1]) - out[k - 2]
    return out


def cheb_adjoint(lt: SparseSym, grads) -> np.ndarray:
    """``sum_k T_k(L~) g_k`` for a stack ``grads`` of shape (K, n, ...).

    Clenshaw summation; since ``L~`` is symmetric this is the adjoint of
    :func:`cheb_basis` and is used for back-propagation.
    """
    grads = np.asarray(grads)
    order = grads.shape[0]
    if order == 1:
        return grads[0].copy()
    b1 = np.zeros_like(grads[0])
    b2 = np.zeros_like(grads[0])
    for k in range(order - 1, 0, -1):
        b1, b2 = grads[k] + 2.0 * spmv(lt, b1) - b2, b1
    return grads[0] + spmv(lt, b1) - b2


def cheb_filter(lt: SparseSym, x, c: ChebCoeffs) -> np.ndarray:
    """``sum_k theta_k T_k(L~) x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("cheb_filter expects a vector")
    if x.shape[0] != lt.n:
        raise ValueError(f"dimension mismatch: operator has {lt.n} vertices, input has {x.shape[0]}")
    theta = c.theta
    t_prev = x
    out = theta[0] * x
    if c.order == 1:
        return out
    t_cur = spmv(lt, x)
    out = out + theta[1] * t_cur
    for k in range(2, c.order):
        t_prev, t_cur = t_cur, 2.0 * spmv(lt, t_cur) - t_prev
        out = out + theta[k] * t_cur
    return out


def chebyshev_values(lam, theta) -> np.ndarray:
    """``sum_k theta_k T_k(lam)`` elementwise, by direct scalar recurrence."""
    lam = np.asarray(lam, dtype=np.float64)
    t_prev, t_cur = np.ones_like(lam), lam
    total = theta[0] * t_prev
    if len(theta) > 1:
        total = total + theta[1] * t_cur
    for k in range(2, len(theta)):
        t_prev, t_cur = t_cur, 2.0 * lam * t_cur - t_prev
        total = total + theta[k] * t_cur
    return total


def graph_fourier(u: np.ndarray, x) -> np.ndarray:
    return u.T @ x


def inverse_graph_fourier(u: np.ndarray, x_hat) -> np.ndarray:
    return u @ x_hat


def spectral_filter_oracle(op, x, c: ChebCoeffs) -> np.ndarray:
    """Filter ``x`` through the eigenbasis of a small dense symmetric operator.

    The filter response on each eigenvalue is the same Chebyshev polynomial,
    so this agrees with :func:`cheb_filter` whenever ``op`` is the operator
    passed there.
    """
    op = op.to_dense() if isinstance(op, SparseSym) else np.asarray(op, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != op.shape[0]:
        raise ValueError("dimension mismatch")
    lam, u = dense_eigh(op)
    x_hat = graph_fourier(u, x)
    response = chebyshev_values(lam, c.theta)
    return inverse_graph_fourier(u, response * x_hat)

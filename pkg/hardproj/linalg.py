"""
Dense and batched linear algebra kernels.

A matrix is a 2-D float64 array in row-major order, a batch of matrices is a
3-D float64 array with the batch dimension first. Symmetric positive-definite
systems are solved through a Cholesky factorization, never an explicit
inverse, and a rank-deficient system is an error rather than a reason to fall
back to a pseudo-inverse.
"""

import logging

import numpy as np
from scipy import linalg as sla

from .exceptions import RankDeficiencyError, ShapeError

__all__ = [
    "PIVOT_TOLERANCE",
    "SYMMETRY_TOLERANCE",
    "as_mat",
    "as_batch",
    "matmul",
    "batch_cholesky",
    "spd_solve",
    "batch_spd_solve",
    "equilibrate_rows",
    "check_full_row_rank",
]

logger = logging.getLogger(__name__)

# Pivots not larger than this fraction of the largest diagonal entry are
# treated as zero.
PIVOT_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-10


def _as_array(values, name, ndim):
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeError(
            "{} must be {}-dimensional, got shape {}".format(name, ndim, arr.shape)
        )
    if not np.all(np.isfinite(arr)):
        raise ShapeError("{} contains NaN or Inf".format(name))
    return arr


def as_mat(values, name="matrix"):
    """
    Convert values to a finite float64 matrix.

    :param values: Nested sequence or array with two dimensions.
    :param name: Name used in error messages.
    :type name: str
    :return: Row-major float64 array.
    :rtype: :class:`numpy.ndarray`
    """
    return _as_array(values, name, 2)


def as_batch(values, name="batch"):
    """Convert values to a finite float64 batch of matrices (3-D array)."""
    return _as_array(values, name, 3)


def matmul(a, b):
    """
    Compute the matrix product ``a @ b``.

    :param a: Left matrix with shape (n, k).
    :param b: Right matrix with shape (k, m).
    :return: Product with shape (n, m).
    :rtype: :class:`numpy.ndarray`

    Example:

    .. code-block:: python

        from hardproj import matmul

        matmul([[1, 2], [3, 4]], [[0], [1]])  # [[2.], [4.]]

    """
    a = as_mat(a, "a")
    b = as_mat(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            "Cannot multiply {} by {} matrix".format(a.shape, b.shape)
        )
    return a @ b


def _check_symmetric(m):
    if m.shape[1] != m.shape[2]:
        raise ShapeError("Matrix must be square, got {}".format(m.shape[1:]))
    asym = np.max(np.abs(m - np.swapaxes(m, 1, 2)), axis=(1, 2))
    scale = np.maximum(np.max(np.abs(m), axis=(1, 2)), np.finfo(np.float64).tiny)
    bad = asym > SYMMETRY_TOLERANCE * scale
    if bad.any():
        raise ShapeError(
            "Matrix of batch instance {} is not symmetric".format(
                int(np.flatnonzero(bad)[0])
            )
        )


def _raise_first_bad_pivot(m, scale):
    # Right-looking elimination repeated only to name the failing pivot.
    work = np.array(m, dtype=np.float64, copy=True)
    n = work.shape[1]
    for j in range(n):
        pivot = work[:, j, j]
        bad = ~(pivot > PIVOT_TOLERANCE * scale)
        if bad.any():
            batch_index = int(np.flatnonzero(bad)[0])
            raise RankDeficiencyError(j, batch_index, float(pivot[batch_index]))
        column = work[:, j + 1 :, j] / np.sqrt(pivot)[:, None]
        work[:, j + 1 :, j + 1 :] -= column[:, :, None] * column[:, None, :]
    raise RankDeficiencyError(n - 1, 0)


def batch_cholesky(m):
    """
    Factor a batch of symmetric positive-definite matrices, ``m = L @ L.T``.

    :param m: Batch of matrices with shape (batch, n, n).
    :return: Lower triangular factors with the same shape.
    :rtype: :class:`numpy.ndarray`
    :raises RankDeficiencyError: if a pivot is not larger than
        ``PIVOT_TOLERANCE`` times the largest diagonal entry of its matrix.
    """
    m = as_batch(m, "m")
    _check_symmetric(m)
    if m.shape[1] == 0:
        return np.zeros_like(m)
    scale = np.max(np.abs(np.diagonal(m, axis1=1, axis2=2)), axis=1)
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        _raise_first_bad_pivot(m, scale)
    pivots = np.diagonal(lower, axis1=1, axis2=2) ** 2
    bad = pivots <= PIVOT_TOLERANCE * scale[:, None]
    if bad.any():
        batch_index, pivot = np.argwhere(bad)[0]
        raise RankDeficiencyError(
            int(pivot), int(batch_index), float(pivots[batch_index, pivot])
        )
    return lower


def batch_spd_solve(m, rhs):
    """
    Solve ``m[i] @ x[i] = rhs[i]`` for every instance of a batch.

    Every instance is factored and solved on its own, so the result is
    bit-identical to a loop of :func:`spd_solve` calls.

    :param m: Symmetric positive-definite matrices, shape (batch, n, n).
    :param rhs: Right-hand sides, shape (batch, n, k) or (batch, n).
    :return: Solutions with the shape of ``rhs``.
    :rtype: :class:`numpy.ndarray`
    :raises RankDeficiencyError: naming the batch index of a singular
        instance.
    """
    lower = batch_cholesky(m)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    vector = rhs.ndim == 2
    if vector:
        rhs = rhs[:, :, None]
    rhs = as_batch(rhs, "rhs")
    if rhs.shape[:2] != lower.shape[:2]:
        raise ShapeError(
            "Right-hand side shape {} does not match matrices {}".format(
                rhs.shape, lower.shape
            )
        )
    if lower.shape[1] == 0:
        solution = np.zeros_like(rhs)
    else:
        solution = np.empty_like(rhs)
        for i in range(lower.shape[0]):
            solution[i] = sla.cho_solve((lower[i], True), rhs[i], check_finite=False)
    return solution[:, :, 0] if vector else solution


def spd_solve(m, rhs):
    """
    Solve the symmetric positive-definite system ``m @ x = rhs``.

    :param m: Square symmetric positive-definite matrix.
    :param rhs: Right-hand side vector (n,) or matrix (n, k).
    :return: Solution with the shape of ``rhs``.
    :rtype: :class:`numpy.ndarray`
    :raises RankDeficiencyError: naming the offending pivot.

    Example:

    .. code-block:: python

        import numpy as np
        from hardproj import spd_solve

        spd_solve([[4.0, 0.0], [0.0, 9.0]], np.eye(2))  # diag(0.25, 1/9)

    """
    m = as_mat(m, "m")
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim not in (1, 2):
        raise ShapeError("rhs must be a vector or a matrix")
    try:
        solution = batch_spd_solve(m[None], rhs[None])
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(exc.pivot, None, exc.value) from None
    return solution[0]


def equilibrate_rows(b):
    """
    Scale every row of a (batch of) matrix to unit Euclidean norm.

    The row space, and with it every orthogonal projection built from it, is
    unchanged by the scaling.

    :param b: Matrix (m, n) or batch (batch, m, n).
    :return: Tuple of scaled matrix and per-row scale factors with shape
        (m,) or (batch, m).
    :raises RankDeficiencyError: if a row is zero.
    """
    b = np.asarray(b, dtype=np.float64)
    norms = np.sqrt(np.sum(b * b, axis=-1))
    zero = ~(norms > 0.0)
    if zero.any():
        where = np.argwhere(zero)[0]
        if b.ndim == 3:
            raise RankDeficiencyError(int(where[1]), int(where[0]), 0.0)
        raise RankDeficiencyError(int(where[0]), None, 0.0)
    factors = 1.0 / norms
    return b * factors[..., None], factors


def check_full_row_rank(b, name="B"):
    """
    Check that a matrix has full row rank by factoring its Gram matrix.

    :raises RankDeficiencyError: if the rows are linearly dependent.
    """
    b = as_mat(b, name)
    if b.shape[0] > b.shape[1]:
        raise RankDeficiencyError(b.shape[1], None)
    scaled, _ = equilibrate_rows(b)
    spd_solve(scaled @ scaled.T, np.zeros(b.shape[0]))

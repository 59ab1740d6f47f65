"""Dense/sparse matrix kernels and the small linear-algebra helpers the solvers share.

Index sets are plain sorted ``numpy`` integer arrays and sign vectors are float
arrays of ``+1.0``/``-1.0``; neither gets a wrapper class.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError, RankDeficientError

GRAM_SOLVE_METHOD = "householder-qr"

_EMPTY = np.zeros(0, dtype=np.intp)


class DesignMatrix:
    """Immutable ``m x n`` design matrix, stored dense or as CSC.

    Parameters
    ----------
    data : array_like or scipy.sparse matrix
        Dense 2-D array or any scipy sparse matrix (converted to CSC with
        sorted row indices and summed duplicates).
    """

    __slots__ = ("_data", "m", "n", "_colnorms")

    def __init__(self, data, *, _wide=True):
        if sp.issparse(data):
            mat = sp.csc_matrix(data, dtype=np.float64, copy=True)
            mat.sum_duplicates()
            mat.sort_indices()
            _check_csc(mat)
            for arr in (mat.data, mat.indices, mat.indptr):
                arr.flags.writeable = False
        else:
            mat = np.array(data, dtype=np.float64, order="C", copy=True)
            if mat.ndim != 2:
                raise InvalidArgumentError(f"design matrix must be 2-D, got ndim={mat.ndim}")
            if not np.all(np.isfinite(mat)):
                raise InvalidArgumentError("design matrix has non-finite entries")
            mat.flags.writeable = False
        m, n = mat.shape
        if m < 1:
            raise InvalidArgumentError("design matrix needs at least one row")
        if _wide and n < m:
            raise InvalidArgumentError(f"expected m <= n, got shape {mat.shape}")
        self._data = mat
        self.m = m
        self.n = n
        self._colnorms = None

    @classmethod
    def from_csc_arrays(cls, m, n, indptr, indices, data):
        """Build from raw compressed-sparse-column arrays."""
        indptr = np.asarray(indptr, dtype=np.intp)
        indices = np.asarray(indices, dtype=np.intp)
        if indptr.shape != (n + 1,) or indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise InvalidArgumentError("column pointers must start at 0 and be nondecreasing")
        if indices.size and (indices.min() < 0 or indices.max() >= m):
            raise InvalidArgumentError("row index out of range")
        for j in range(n):
            seg = indices[indptr[j]:indptr[j + 1]]
            if np.any(np.diff(seg) <= 0):
                raise InvalidArgumentError(f"row indices of column {j} are not strictly increasing")
        return cls(sp.csc_matrix((np.asarray(data, dtype=np.float64), indices, indptr), shape=(m, n)))

    @classmethod
    def _sub(cls, data):
        return cls(data, _wide=False)

    @property
    def shape(self):
        return (self.m, self.n)

    @property
    def is_sparse(self):
        return sp.issparse(self._data)

    @property
    def data(self):
        """The underlying read-only ndarray or CSC matrix."""
        return self._data

    def matvec(self, x):
        return np.asarray(self._data @ x, dtype=np.float64).reshape(self.m)

    def rmatvec(self, y):
        return np.asarray(self._data.T @ y, dtype=np.float64).reshape(self.n)

    def toarray(self):
        if self.is_sparse:
            return self._data.toarray()
        return np.array(self._data)

    def dense_columns(self, S):
        """Columns ``S`` as a fresh dense ``m x |S|`` array."""
        S = np.asarray(S, dtype=np.intp)
        if self.is_sparse:
            return self._data[:, S].toarray()
        return self._data[:, S]

    def column_norms(self):
        if self._colnorms is None:
            if self.is_sparse:
                norms = np.sqrt(np.asarray(self._data.multiply(self._data).sum(axis=0)).ravel())
            else:
                norms = np.linalg.norm(self._data, axis=0)
            norms.flags.writeable = False
            self._colnorms = norms
        return self._colnorms

    def frobenius_norm(self):
        return float(np.linalg.norm(self.column_norms()))

    def __eq__(self, other):
        if not isinstance(other, DesignMatrix):
            return NotImplemented
        if other.shape != self.shape or self.is_sparse != other.is_sparse:
            return False
        if self.is_sparse:
            return (self._data != other._data).nnz == 0
        return bool(np.array_equal(self._data, other._data))

    __hash__ = None

    def __repr__(self):
        kind = "csc" if self.is_sparse else "dense"
        return f"DesignMatrix({self.m}x{self.n}, {kind})"


def _check_csc(mat):
    m, n = mat.shape
    if np.any(np.diff(mat.indptr) < 0):
        raise InvalidArgumentError("column pointers must be nondecreasing")
    if mat.indices.size and (mat.indices.min() < 0 or mat.indices.max() >= m):
        raise InvalidArgumentError("row index out of range")
    if not np.all(np.isfinite(mat.data)):
        raise InvalidArgumentError("design matrix has non-finite entries")


def as_design_matrix(A):
    return A if isinstance(A, DesignMatrix) else DesignMatrix(A)


def index_set(indices, n=None):
    """Validate and return a strictly increasing ``intp`` array."""
    S = np.asarray(indices if indices is not None else _EMPTY, dtype=np.intp).reshape(-1)
    if S.size:
        if np.any(np.diff(S) <= 0):
            raise InvalidArgumentError("index set must be strictly increasing")
        if S[0] < 0 or (n is not None and S[-1] >= n):
            raise InvalidArgumentError(f"index out of range [0, {n})")
    return S


def sign_vector(c):
    """Entrywise sign with ``sgn(0) = +1``."""
    return np.where(np.asarray(c) >= 0, 1.0, -1.0)


def submatrix_columns(A, S):
    """Return the ``m x |S|`` submatrix of ``A`` with columns ``S`` (same storage kind)."""
    A = as_design_matrix(A)
    S = np.asarray(S, dtype=np.intp).reshape(-1)
    if S.size and (S.min() < 0 or S.max() >= A.n):
        raise InvalidArgumentError(f"column index out of range [0, {A.n})")
    return DesignMatrix._sub(A.data[:, S])


def gram_solve(A_S, rhs, tol_rank=None):
    """Solve ``(A_S^T A_S) v = rhs`` through a Householder QR of ``A_S``.

    Raises
    ------
    RankDeficientError
        If a diagonal entry of ``R`` is at most ``tol_rank`` (default
        ``1e-10 * ||A_S||_F``).
    """
    M = A_S.toarray() if isinstance(A_S, DesignMatrix) else np.asarray(A_S, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64).reshape(-1)
    k = M.shape[1]
    if rhs.shape != (k,):
        raise InvalidArgumentError(f"rhs has length {rhs.size}, expected {k}")
    if k == 0:
        return np.zeros(0)
    if k > M.shape[0]:
        raise RankDeficientError(f"{k} columns in dimension {M.shape[0]} cannot be independent")
    R = np.linalg.qr(M, mode="r")
    if tol_rank is None:
        tol_rank = 1e-10 * np.linalg.norm(M)
    diag = np.abs(np.diag(R))
    if diag.min() <= tol_rank:
        raise RankDeficientError(
            f"column {int(diag.argmin())} is numerically dependent "
            f"(pivot {diag.min():.3e} <= {tol_rank:.3e})"
        )
    y = solve_triangular(R, rhs, trans="T")
    return solve_triangular(R, y)


def max_independent_subset(A, S, within=None, tol_rank=None, seed=None):
    """Largest subset of ``S`` (intersected with ``within``) with independent columns.

    Candidates are scanned in increasing index order, after any indices of
    ``seed``, and kept when their component orthogonal to the columns already
    kept exceeds ``tol_rank`` (default ``1e-10 * ||A_cand||_F``).  Scanning in
    order yields the lexicographically smallest basis of the candidate span,
    which is also a maximum-cardinality one.
    """
    A = as_design_matrix(A)
    cand = np.asarray(S if S is not None else _EMPTY, dtype=np.intp).reshape(-1)
    if within is not None:
        cand = np.intersect1d(cand, np.asarray(within, dtype=np.intp))
    cand = np.unique(cand)
    if cand.size == 0:
        return _EMPTY.copy()
    if seed is not None:
        first = np.intersect1d(cand, np.asarray(seed, dtype=np.intp))
        order = np.concatenate([first, np.setdiff1d(cand, first)])
    else:
        order = cand
    cols = A.dense_columns(order)
    if tol_rank is None:
        tol_rank = 1e-10 * np.linalg.norm(cols)
    Q = np.zeros((A.m, min(A.m, order.size)))
    kept = []
    for i, j in enumerate(order):
        if len(kept) == A.m:
            break
        v = cols[:, i].copy()
        Qk = Q[:, :len(kept)]
        for _ in range(2):
            v -= Qk @ (Qk.T @ v)
        nv = np.linalg.norm(v)
        if nv > tol_rank:
            Q[:, len(kept)] = v / nv
            kept.append(int(j))
    return np.array(sorted(kept), dtype=np.intp)
